"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line."""
from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np
import pytest

from gazepipe import geometry as geo
from gazepipe.dataset_io import build_normalized_dataset
from gazepipe.harness import error_by_bin, fusion_eval, leave_one_person_out
from gazepipe.harness.cli import main as cli_main
from gazepipe.imaging import equalize_histogram
from gazepipe.regressors import (
    AdamState, CnnArchitecture, CnnModel, EstimatorConfig, TrainConfig, adam_step, cnn_gradients,
    fit_estimator, knn_fit, load_estimator, save_estimator,
)  # fmt: skip
from gazepipe.regressors.cnn import PARAM_NAMES, init_params
from gazepipe.synth import generate_persons, generate_pnp_scene

# CNN schedule for the end-to-end runs, chosen from a pilot on one fold
PILOT_TRAIN = dict(batch_size=8, learning_rate=1e-3, lr_step=1000)


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail

    return emit


def _samples(seed, persons, frames, **kw):
    ds = generate_persons(n_persons=persons, samples_each=frames, seed=seed, **kw)
    return build_normalized_dataset(ds.records, ds.calibration, ds.spec, geo.GENERIC_FACE_MODEL,
                                    ds.load_image).samples  # fmt: skip


def test_1_pnp_recovery(verdict):
    scenes = [generate_pnp_scene(seed=i) for i in range(100)]
    t0 = time.perf_counter()
    fits = [geo.solve_pnp(sc.face, sc.landmarks, sc.camera) for sc in scenes]
    elapsed = time.perf_counter() - t0
    rot = max(geo.rotation_angle_deg(f.pose.rotation, sc.pose.rotation) for f, sc in zip(fits, scenes))
    trans = max(np.linalg.norm(f.pose.translation - sc.pose.translation) for f, sc in zip(fits, scenes))
    rms = max(f.rms for f in fits)
    ok = rot < 0.1 and trans < 0.5 and rms < 1e-6 and elapsed < 2.0
    verdict("PnP recovery", ok, f"max rot {rot:.2e} deg, max trans {trans:.2e} mm, "
            f"max rms {rms:.2e} px, {elapsed:.2f} s for 100 poses")  # fmt: skip


def test_2_normalization_invariant(verdict):
    rng = np.random.default_rng(2)
    spec = geo.NormalizationSpec()
    cam = geo.CameraIntrinsics(1000.0, 1000.0, 320.0, 240.0)
    worst = worst_s = 0.0
    for _ in range(1000):
        e = np.array([rng.uniform(-200, 200), rng.uniform(-150, 150), rng.uniform(300, 1200)])
        R_r = geo.euler_to_matrix(*np.radians(rng.uniform([-40, -30, -20], [40, 30, 20])))
        xf = geo.compute_normalization(e, R_r, spec, cam)
        worst = max(worst, np.abs(spec.camera.project(xf.M @ e) - [30.0, 18.0]).max())
        q = xf.W @ np.append(cam.project(e), 1.0)
        worst = max(worst, np.abs(q[:2] / q[2] - [30.0, 18.0]).max())
        e600 = e / np.linalg.norm(e) * 600.0
        worst_s = max(worst_s, np.abs(geo.compute_normalization(e600, R_r, spec, cam).S - np.eye(3)).max())
    verdict("normalization invariant", worst < 1e-6 and worst_s < 1e-12,
            f"max centre offset {worst:.2e} px, max |S-I| at 600 mm {worst_s:.2e}")  # fmt: skip


def test_3_gradient_check(verdict):
    t0 = time.perf_counter()
    arch = CnnArchitecture()
    model = CnnModel(arch, init_params(arch, seed=3, dtype=np.float64), dtype="float64")
    rng = np.random.default_rng(3)
    for k in PARAM_NAMES:
        if k.endswith("_b"):
            model.params[k][:] = rng.uniform(-0.05, 0.05, model.params[k].shape)
    imgs = rng.integers(0, 256, (2, 36, 60), dtype=np.uint8)
    feat, y = rng.normal(0, 0.2, (2, 2)), rng.normal(0, 0.2, (2, 2))
    _, grads = cnn_gradients(model, imgs, feat, y)
    errs = []
    step = 1e-5
    for name in PARAM_NAMES:
        w = model.params[name].reshape(-1)
        for i in rng.choice(w.size, size=min(w.size, 30), replace=False):
            old = w[i]
            w[i] = old + step
            lp, _ = cnn_gradients(model, imgs, feat, y)
            w[i] = old - step
            lm, _ = cnn_gradients(model, imgs, feat, y)
            w[i] = old
            num, ana = (lp - lm) / (2 * step), grads[name].reshape(-1)[i]
            errs.append(abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    errs = np.array(errs)
    frac = float(np.mean(errs < 1e-4))
    elapsed = time.perf_counter() - t0
    ok = len(errs) >= 200 and frac >= 0.95 and elapsed < 60
    verdict("gradient check", ok, f"{len(errs)} params over {len(PARAM_NAMES)} tensors, "
            f"{100 * frac:.1f}% below 1e-4 (median {np.median(errs):.1e}), {elapsed:.1f} s")  # fmt: skip


@pytest.mark.slow
def test_4_end_to_end_lopo(verdict):
    t0 = time.perf_counter()
    samples = _samples(seed=1, persons=8, frames=400)
    cfg = EstimatorConfig(kind="cnn", train=TrainConfig(iterations=3000, seed=0, **PILOT_TRAIN))
    rep = leave_one_person_out(samples, cfg)
    elapsed = time.perf_counter() - t0
    ok = rep.overall_mean < 5.0 and rep.overall_mean <= rep.baseline_mean / 3 and elapsed < 15 * 60
    verdict("end-to-end LOPO", ok, f"{len(samples)} samples, CNN {rep.overall_mean:.2f} deg vs mean "
            f"predictor {rep.baseline_mean:.2f} deg, {elapsed:.0f} s")  # fmt: skip


@pytest.mark.slow
def test_5_cross_range_degradation(verdict):
    full = _samples(21, 4, 250)
    narrow = _samples(21, 4, 250, gaze_yaw=(-6.0, 6.0))
    test = _samples(22, 2, 200)
    cfg = EstimatorConfig(kind="cnn", train=TrainConfig(iterations=1500, seed=0, **PILOT_TRAIN))
    edges = np.arange(-18.0, 19.0, 4.0)
    res = {}
    for name, train in (("full", full), ("narrow", narrow)):
        err = geo.angular_error(fit_estimator(train, cfg).predict(test), test.g)
        res[name] = error_by_bin(np.degrees(test.g[:, 0]), err, edges, "gaze_yaw")
    edge = {k: float(np.mean(r.means[[0, -1]])) for k, r in res.items()}
    curv = float(res["narrow"].coeffs[0])
    ok = edge["narrow"] > edge["full"] and curv > 0
    verdict("cross-range degradation", ok, f"edge-bin error narrow {edge['narrow']:.2f} deg vs "
            f"full {edge['full']:.2f} deg, narrow curvature {curv:.4f}")  # fmt: skip


def test_6_invariant_bundle(verdict, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    checks = {}
    img = rng.integers(0, 256, (36, 60), dtype=np.uint8)
    h, g = rng.uniform(-0.5, 0.5, 2), rng.uniform(-0.5, 0.5, 2)
    back = geo.flip_sample(*geo.flip_sample(img, h, g))
    checks["flip involution"] = (np.array_equal(back[0], img) and np.array_equal(back[1], h)
                                 and np.array_equal(back[2], g))  # fmt: skip
    a = np.stack([rng.uniform(-np.pi / 2 + 0.01, np.pi / 2 - 0.01, 1000),
                  rng.uniform(-np.pi / 2 + 0.01, np.pi / 2 - 0.01, 1000)], 1)  # fmt: skip
    checks["angle round-trip"] = np.abs(geo.vector_to_angles(geo.angles_to_vector(a)) - a).max() < 1e-12
    b = a[rng.permutation(1000)]
    c = a[rng.permutation(1000)]
    eab, ebc, eac = geo.angular_error(a, b), geo.angular_error(b, c), geo.angular_error(a, c)
    checks["angular error metric"] = (
        np.all(geo.angular_error(a, a) == 0) and np.allclose(eab, geo.angular_error(b, a))
        and np.all(eac <= eab + ebc + 1e-9) and geo.angular_error([0, 0], [np.pi / 2, 0]) == pytest.approx(90)
    )  # fmt: skip
    eq = equalize_histogram(img)
    order = np.argsort(img, axis=None, kind="stable")
    checks["equalization monotone"] = bool(np.all(np.diff(eq.ravel()[order].astype(int)) >= 0))
    s = _samples(6, 2, 40)
    q = s.patches[::5]
    exhaustive = knn_fit(s.patches, s.h, s.g, k=5).predict(q, s.h[::5])
    one = knn_fit(s.patches, s.h, s.g, k=5, clusters=1).predict(q, s.h[::5])
    checks["kNN 1-cluster equivalence"] = np.array_equal(exhaustive, one)
    w = {"w": np.zeros(1)}
    adam_step(w, {"w": np.ones(1)}, AdamState(), TrainConfig(dtype="float64"), 1)
    checks["Adam hand oracle"] = abs(w["w"][0] - (-1e-5 / (1 + 1e-8))) < 1e-18
    same = True
    for kind in ("cnn", "knn", "linear", "mean"):
        cfg = EstimatorConfig(kind=kind, train=TrainConfig(iterations=3, batch_size=8))
        est = fit_estimator(s, cfg)
        save_estimator(tmp_path / f"{kind}.ckpt", est, cfg)
        same &= np.array_equal(load_estimator(tmp_path / f"{kind}.ckpt").predict(s), est.predict(s))
    checks["checkpoint bit identity"] = same
    elapsed = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    verdict("invariant bundle", not failed and elapsed < 60,
            f"{len(checks) - len(failed)}/{len(checks)} checks ok{' (failed: ' + ', '.join(failed) + ')' if failed else ''}"
            f", {elapsed:.1f} s")  # fmt: skip


def test_7_fusion(verdict):
    lines, ok = [], True
    for corrupt in (None, "left", "right"):
        s = _samples(31, 4, 150, corrupt_eye=corrupt)
        rep = leave_one_person_out(s, EstimatorConfig(kind="knn"))
        fr = fusion_eval(s, rep.table.predictions_for(s.ids))
        ok &= fr.oracle_best_eye <= fr.per_eye_mean
        if corrupt is not None:
            ok &= fr.geometric_fusion < fr.per_eye_mean
        lines.append(f"{corrupt or 'clean'}: per-eye {fr.per_eye_mean:.2f} best {fr.oracle_best_eye:.2f} "
                     f"fused {fr.geometric_fusion:.2f}")  # fmt: skip
    verdict("fusion", ok, "; ".join(lines))


def _pipeline(root: Path) -> list[str]:
    cwd = os.getcwd()
    os.chdir(root)
    try:
        steps = [
            ["synth", "--persons", "3", "--samples", "20", "--seed", "8", "--out-dir", "syn", "--flip"],
            ["eval", "--train", "syn/archive", "--estimator", "knn", "--out-dir", "lopo", "--fuse-eyes",
             "--resolutions", "60x36,15x9"],
            ["train", "--train", "syn/archive", "--estimator", "cnn", "--iterations", "20",
             "--batch-size", "8", "--seed", "8", "--out-dir", "model"],
            ["eval", "--model", "model/model.ckpt", "--test", "syn/archive", "--out-dir", "ev"],
            ["report", "--in-dir", "lopo", "--out-dir", "rep"],
        ]  # fmt: skip
        return [str(cli_main(s)) for s in steps]
    finally:
        os.chdir(cwd)


def test_8_cli_determinism(verdict, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    codes = _pipeline(tmp_path / "a") + _pipeline(tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                   if p.is_file() and p.suffix in (".csv", ".tsv", ".txt", ".ckpt"))  # fmt: skip
    differ = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    n_csv = sum(f.suffix == ".csv" for f in files)
    ok = set(codes) == {"0"} and not differ and n_csv >= 10
    verdict("CLI determinism", ok, f"{len(files)} output files ({n_csv} CSV) compared, "
            f"{len(differ)} differ{': ' + ', '.join(differ) if differ else ''}; exit codes {codes}")  # fmt: skip
