"""Command-line entry point.

Subcommands::

    gazepipe synth     --persons N --samples M --seed S --out-dir DIR [--raw]
    gazepipe normalize --input RAWDIR --out-dir ARCHIVE [--flip]
    gazepipe train     --train ARCHIVE --estimator cnn --out-dir DIR
    gazepipe eval      --train ARCHIVE [--test ARCHIVE] --protocol lopo|cross --out-dir DIR
    gazepipe report    --in-dir EVALDIR [--out-dir DIR]

Exit status: 0 on success, 1 on invalid input, 2 on a runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import geometry as geo
from ..dataset_io import (
    build_normalized_dataset,
    default_image_loader,
    parse_annotations,
    parse_calibration,
    read_archive,
    write_annotations,
    write_archive,
    write_calibration,
)
from ..errors import InputError
from ..imaging import write_pgm
from ..regressors import (
    EstimatorConfig,
    FeatureSpec,
    TrainConfig,
    fit_estimator,
    load_estimator,
    save_estimator,
)
from ..synth import SynthConfig, generate_persons
from . import svg
from .protocols import (
    DEFAULT_RESOLUTIONS,
    cross_dataset_eval,
    evaluate_model,
    fusion_eval,
    leave_one_person_out,
    resolution_study,
)
from .report import (
    EvalReport,
    build_report,
    read_predictions,
    write_bins,
    write_config,
    write_predictions,
    write_report,
)

# Published magnitudes for context only. They were obtained on real recordings
# with a much larger pretrained network and are not expected from synthetic runs.
FOOTNOTES = (
    "Reference magnitudes from full-scale experiments on real data (context only, not targets):",
    "  cross-dataset, real-world laptop recordings: 10.8 deg mean error",
    "  cross-dataset, second public benchmark: 9.6 deg mean error",
    "  leave-one-person-out on the real-world recordings: 5.5 deg mean error",
    "Synthetic desk-scale runs use a small network trained from scratch; compare them against",
    "the mean-predictor baseline reported alongside, not against these numbers.",
)


def _resolution(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def _resolution_list(text: str) -> list[tuple[int, int]]:
    if text == "default":
        return list(DEFAULT_RESOLUTIONS)
    return [_resolution(t) for t in text.split(",") if t.strip()]


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def _add_estimator_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--estimator", choices=("cnn", "knn", "linear", "mean"), default="cnn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--use-pupil", action="store_true", help="append the pupil centre to the feature")
    p.add_argument("--no-head-pose", action="store_true", help="drop head angles from the feature")
    p.add_argument("--iterations", type=int, default=15000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--lr-step", type=int, default=5000)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--clusters", type=int, default=8, help="kNN head-angle clusters; 0 disables")
    p.add_argument("--ridge", type=float, default=1.0)
    p.add_argument("--resolution", type=_resolution, default=None, help="training WxH")


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors: exit status 1 rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazepipe", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic normalized archive")
    p.add_argument("--persons", type=int, default=8)
    p.add_argument("--samples", type=int, default=400, help="frames per person")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--gaze-yaw", type=_range, default=None, help="degrees LO,HI")
    p.add_argument("--gaze-pitch", type=_range, default=None, help="degrees LO,HI")
    p.add_argument("--corrupt-eye", choices=("left", "right"), default=None)
    p.add_argument("--flip", action="store_true", help="add mirrored copies")
    p.add_argument("--raw", action="store_true", help="also write frames and annotations")

    p = sub.add_parser("normalize", help="normalize a raw annotated dataset into an archive")
    p.add_argument("--input", type=Path, required=True,
                   help="directory with calibration.txt, annotations.txt and the images")  # fmt: skip
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--flip", action="store_true")
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")

    p = sub.add_parser("train", help="fit an estimator and save a checkpoint")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    _add_estimator_args(p)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("--train", type=Path, default=None)
    p.add_argument("--test", type=Path, default=None)
    p.add_argument("--model", type=Path, default=None, help="evaluate a saved checkpoint instead")
    p.add_argument("--protocol", choices=("lopo", "cross"), default="lopo")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--resolutions", type=_resolution_list, default=None,
                   help="comma-separated WxH list for a train/test resolution grid, or 'default'")  # fmt: skip
    p.add_argument("--fuse-eyes", action="store_true")
    _add_estimator_args(p)

    p = sub.add_parser("report", help="rebuild report CSVs and plots from predictions.csv")
    p.add_argument("--in-dir", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=None)
    return parser


def estimator_config(args) -> EstimatorConfig:
    train = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch_size, lr_step=args.lr_step,
        iterations=args.iterations, seed=args.seed,
    )  # fmt: skip
    w, h = args.resolution if args.resolution else (None, None)
    return EstimatorConfig(
        kind=args.estimator,
        features=FeatureSpec(use_head_pose=not args.no_head_pose, use_pupil=args.use_pupil),
        train=train, k=args.k, clusters=args.clusters or None, ridge=args.ridge,
        width=w, height=h,
    )  # fmt: skip


def _read(path: Path | None, flag: str):
    if path is None:
        raise InputError(f"{flag} is required")
    return read_archive(path)


def emit_report(out: Path, report: EvalReport) -> None:
    """report.csv, predictions.csv, bins_*.csv and plots for one evaluation."""
    plots = out / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    write_report(out / "report.csv", report)
    if report.table is not None:
        write_predictions(out / "predictions.csv", report.table)
    names = [p.person for p in report.persons]
    (plots / "per_person.svg").write_text(svg.bar_chart(
        names + ["all", "mean-pred"],
        [p.mean for p in report.persons] + [report.overall_mean, report.baseline_mean],
        [p.std for p in report.persons] + [report.overall_std, 0.0],
        title="Mean angular error per person", ylabel="error (deg)",
    ))  # fmt: skip
    labels = {"gaze_yaw": "gaze yaw (deg)", "intensity_diff": "face left-right intensity difference"}
    for axis, res in report.bins.items():
        write_bins(out / f"bins_{axis}.csv", res)
        (plots / f"bins_{axis}.svg").write_text(svg.binned_curve(
            res.centres, res.means, res.coeffs, title=f"Error by {labels[axis]}",
            xlabel=labels[axis], ylabel="error (deg)",
        ))  # fmt: skip
    (out / "footnotes.txt").write_text("\n".join(FOOTNOTES) + "\n")


def cmd_synth(args) -> None:
    cfg = SynthConfig(n_persons=args.persons, samples_each=args.samples, seed=args.seed,
                      corrupt_eye=args.corrupt_eye)  # fmt: skip
    if args.gaze_yaw:
        cfg.gaze_yaw = args.gaze_yaw
    if args.gaze_pitch:
        cfg.gaze_pitch = args.gaze_pitch
    ds = generate_persons(cfg)
    if args.raw:
        raw = args.out_dir / "raw"
        (raw / "frames").mkdir(parents=True, exist_ok=True)
        write_calibration(raw / "calibration.txt", ds.calibration)
        write_annotations(raw / "annotations.txt", ds.records)
        for i, rec in enumerate(ds.records):
            write_pgm(raw / rec.image, ds.frame(i))
    res = build_normalized_dataset(ds.records, ds.calibration, ds.spec, geo.GENERIC_FACE_MODEL,
                                   ds.load_image, flip_augment=args.flip)  # fmt: skip
    write_archive(args.out_dir / "archive", res.samples)
    rows = ["person,image,eye,true_g_yaw,true_g_pitch"]
    for i, rec in enumerate(ds.records):
        for e, eye in enumerate(geo.EYES):
            yaw, pitch = ds.true_gaze[i, e]
            rows.append(f"{rec.person},{rec.image},{eye},{yaw!r},{pitch!r}")
    (args.out_dir / "truth.csv").write_text("\n".join(rows) + "\n")
    _report_failures(args.out_dir, res)
    print(f"wrote {len(res.samples)} samples to {args.out_dir / 'archive'}")


def _report_failures(out: Path, res) -> None:
    lines = [f"{idx}\t{reason}" for idx, reason in res.failures]
    (out / "failures.tsv").write_text("".join(line + "\n" for line in lines))
    if res.failures:
        print(f"{len(res.failures)} of {res.n_records} records skipped (see failures.tsv)",
              file=sys.stderr)  # fmt: skip


def cmd_normalize(args) -> None:
    calib = parse_calibration(args.input / "calibration.txt")
    records = parse_annotations(args.input / "annotations.txt")
    res = build_normalized_dataset(records, calib, geo.NormalizationSpec(), geo.GENERIC_FACE_MODEL,
                                   default_image_loader(args.input), flip_augment=args.flip)  # fmt: skip
    write_archive(args.out_dir, res.samples)
    _report_failures(args.out_dir, res)
    print(f"wrote {len(res.samples)} samples to {args.out_dir}")


def cmd_train(args) -> None:
    config = estimator_config(args)
    samples = _read(args.train, "--train")
    est = fit_estimator(samples, config)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_estimator(args.out_dir / "model.ckpt", est, config)
    if est.trace is not None:
        rows = "".join(f"{i + 1},{v!r}\n" for i, v in enumerate(est.trace))
        (args.out_dir / "loss.csv").write_text("iteration,loss\n" + rows)
    write_config(args.out_dir / "run-config.txt", {"command": "train", **config.echo()})
    print(f"saved {est.kind} model to {args.out_dir / 'model.ckpt'}")


def cmd_eval(args) -> None:
    config = estimator_config(args)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    echo = {"command": "eval", "protocol": args.protocol, **config.echo()}
    if args.model is not None:
        est = load_estimator(args.model)
        test = _read(args.test, "--test")
        report = evaluate_model(est, test)
        echo = {"command": "eval", "protocol": "model", "model": str(args.model)}
    elif args.protocol == "lopo":
        test = _read(args.train, "--train")
        report = leave_one_person_out(test, config)
    else:
        train, test = _read(args.train, "--train"), _read(args.test, "--test")
        report, _ = cross_dataset_eval(train, test, config)
    report.config = echo
    emit_report(out, report)
    if args.resolutions:
        train = _read(args.train, "--train")
        test = _read(args.test, "--test") if args.test else train
        grid = resolution_study(train, test, args.resolutions, config)
        labels = [f"{w}x{h}" for w, h in grid.resolutions]
        rows = ["train\\test," + ",".join(labels)]
        rows += [labels[i] + "," + ",".join(repr(float(v)) for v in grid.errors[i])
                 for i in range(len(labels))]  # fmt: skip
        (out / "grid.csv").write_text("\n".join(rows) + "\n")
        (out / "plots" / "grid.svg").write_text(svg.heat_grid(
            labels, labels, grid.errors, title="Mean error (deg) by train/test resolution",
            row_title="training resolution", col_title="test resolution",
        ))  # fmt: skip
        echo["resolutions"] = ",".join(labels)
    if args.fuse_eyes:
        fr = fusion_eval(test, report.table.predictions_for(test.ids))
        (out / "fusion.csv").write_text(
            "method,n_pairs,mean_deg\n"
            f"per_eye_mean,{fr.n_pairs},{fr.per_eye_mean!r}\n"
            f"oracle_best_eye,{fr.n_pairs},{fr.oracle_best_eye!r}\n"
            f"geometric_fusion,{fr.n_pairs},{fr.geometric_fusion!r}\n"
        )
        (out / "plots" / "fusion.svg").write_text(svg.bar_chart(
            ["per-eye mean", "best eye", "fused"],
            [fr.per_eye_mean, fr.oracle_best_eye, fr.geometric_fusion],
            title="Two-eye fusion", ylabel="error (deg)",
        ))  # fmt: skip
    write_config(out / "run-config.txt", echo)
    print(f"{report.protocol}: mean error {report.overall_mean:.3f} deg over {report.n} samples "
          f"(mean predictor {report.baseline_mean:.3f} deg)")  # fmt: skip


def cmd_report(args) -> None:
    path = args.in_dir / "predictions.csv"
    if not path.is_file():
        raise InputError(f"no predictions.csv in {args.in_dir}")
    table = read_predictions(path)
    if len(table) == 0:
        raise InputError("predictions.csv has no rows")
    out = args.out_dir or args.in_dir
    report = build_report(table, "report")
    emit_report(out, report)
    print(f"mean error {report.overall_mean:.3f} deg over {report.n} samples")


COMMANDS = {"synth": cmd_synth, "normalize": cmd_normalize, "train": cmd_train,
            "eval": cmd_eval, "report": cmd_report}  # fmt: skip


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
