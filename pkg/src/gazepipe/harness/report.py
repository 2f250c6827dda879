"""Per-sample prediction tables, aggregated error reports, binned analysis and CSV I/O.

All CSV floats are written with ``repr`` so files round-trip exactly and
reruns with the same seed are byte-identical.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InsufficientBins, ParseError
from ..geometry import angular_error

PREDICTION_COLUMNS = (
    "sample_id", "person", "eye", "fold", "g_yaw", "g_pitch", "pred_yaw", "pred_pitch",
    "base_yaw", "base_pitch", "error_deg", "baseline_error_deg", "face_lr_diff",
)  # fmt: skip

# default gaze-yaw bin edges, degrees
YAW_EDGES = tuple(float(v) for v in range(-24, 25, 4))
INTENSITY_BINS = 8


@dataclass
class PredictionTable:
    """One row per evaluated sample. Angles in radians."""

    ids: list[str]
    person: np.ndarray
    eye: np.ndarray
    fold: np.ndarray
    g: np.ndarray
    pred: np.ndarray
    base: np.ndarray
    face_lr_diff: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def errors(self) -> np.ndarray:
        return np.atleast_1d(angular_error(self.pred, self.g))

    @property
    def baseline_errors(self) -> np.ndarray:
        return np.atleast_1d(angular_error(self.base, self.g))

    @classmethod
    def from_samples(cls, samples, pred, base, fold: int = 0) -> "PredictionTable":
        n = len(samples)
        return cls(
            ids=list(samples.ids), person=np.asarray(samples.person, dtype=object),
            eye=np.asarray(samples.eye, dtype=object), fold=np.full(n, fold),
            g=np.asarray(samples.g, float), pred=np.asarray(pred, float).reshape(n, 2),
            base=np.asarray(base, float).reshape(n, 2),
            face_lr_diff=np.asarray(samples.face_lr_diff, float),
        )  # fmt: skip

    def predictions_for(self, ids) -> np.ndarray:
        """Predicted angles reordered to match ``ids``."""
        pos = {k: i for i, k in enumerate(self.ids)}
        try:
            return self.pred[[pos[k] for k in ids]]
        except KeyError as exc:
            raise KeyError(f"no prediction for sample {exc.args[0]!r}") from None

    @classmethod
    def concat(cls, parts: list["PredictionTable"]) -> "PredictionTable":
        return cls(
            ids=[i for p in parts for i in p.ids],
            **{
                f: np.concatenate([getattr(p, f) for p in parts])
                for f in ("person", "eye", "fold", "g", "pred", "base", "face_lr_diff")
            },
        )


@dataclass
class BinResult:
    axis: str
    edges: np.ndarray
    counts: np.ndarray
    means: np.ndarray  # nan for empty bins
    coeffs: np.ndarray  # (a, b, c) of a*x^2 + b*x + c over non-empty bin centres

    @property
    def centres(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def quadratic_fit(x, y) -> np.ndarray:
    """Least-squares (a, b, c) for y ~ a x^2 + b x + c."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.stack([x**2, x, np.ones_like(x)], axis=1)
    coeffs, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coeffs


def error_by_bin(values, errors, edges, axis: str = "") -> BinResult:
    """Mean error per bin of ``values`` and a quadratic fit over the bin centres.

    ``edges`` is an increasing edge array or a bin count (equal-width bins over
    the value range). Bins are half-open except the last, which is closed.
    """
    values, errors = np.asarray(values, float), np.asarray(errors, float)
    if np.isscalar(edges) or np.ndim(edges) == 0:
        lo, hi = (float(values.min()), float(values.max())) if len(values) else (0.0, 1.0)
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, int(edges) + 1)
    edges = np.asarray(edges, float)
    idx = np.searchsorted(edges, values, side="right") - 1
    idx[values == edges[-1]] = len(edges) - 2
    inside = (idx >= 0) & (idx < len(edges) - 1)
    nb = len(edges) - 1
    counts = np.bincount(idx[inside], minlength=nb)
    sums = np.bincount(idx[inside], weights=errors[inside], minlength=nb)
    means = np.full(nb, np.nan)
    means[counts > 0] = sums[counts > 0] / counts[counts > 0]
    occupied = counts > 0
    if occupied.sum() < 3:
        raise InsufficientBins(f"{int(occupied.sum())} non-empty bins; a quadratic fit needs 3")
    centres = 0.5 * (edges[:-1] + edges[1:])
    coeffs = quadratic_fit(centres[occupied], means[occupied])
    return BinResult(axis, edges, counts, means, coeffs)


@dataclass
class PersonStats:
    person: str
    n: int
    mean: float
    std: float
    baseline_mean: float


@dataclass
class EvalReport:
    protocol: str
    persons: list[PersonStats]
    overall_mean: float
    overall_std: float
    baseline_mean: float
    n: int
    bins: dict[str, BinResult] = field(default_factory=dict)
    config: dict[str, str] = field(default_factory=dict)
    table: PredictionTable | None = None

    def person(self, name: str) -> PersonStats:
        return next(p for p in self.persons if p.person == name)


def build_report(table: PredictionTable, protocol: str, config: dict | None = None) -> EvalReport:
    """Aggregate a prediction table. Overall mean = mean over samples, which is
    the sample-count-weighted mean of the per-person means."""
    err, base = table.errors, table.baseline_errors
    persons = []
    for p in sorted(set(table.person.tolist())):
        m = table.person == p
        persons.append(PersonStats(p, int(m.sum()), float(err[m].mean()), float(err[m].std()),
                                   float(base[m].mean())))  # fmt: skip
    bins = {}
    g_yaw_deg = np.degrees(table.g[:, 0])
    for axis, values, edges in (
        ("gaze_yaw", g_yaw_deg, YAW_EDGES),
        ("intensity_diff", table.face_lr_diff, INTENSITY_BINS),
    ):
        try:
            bins[axis] = error_by_bin(values, err, edges, axis)
        except InsufficientBins:
            pass
    return EvalReport(
        protocol=protocol, persons=persons, overall_mean=float(err.mean()),
        overall_std=float(err.std()), baseline_mean=float(base.mean()), n=len(table),
        bins=bins, config=dict(config or {}), table=table,
    )  # fmt: skip


# ---------------------------------------------------------------------------
# CSV


def _r(x) -> str:
    return repr(float(x))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_predictions(path, table: PredictionTable) -> None:
    err, base = table.errors, table.baseline_errors
    rows = [
        [table.ids[i], table.person[i], table.eye[i], int(table.fold[i]),
         _r(table.g[i, 0]), _r(table.g[i, 1]), _r(table.pred[i, 0]), _r(table.pred[i, 1]),
         _r(table.base[i, 0]), _r(table.base[i, 1]), _r(err[i]), _r(base[i]),
         _r(table.face_lr_diff[i])]
        for i in range(len(table))
    ]  # fmt: skip
    _write_csv(path, PREDICTION_COLUMNS, rows)


def read_predictions(path) -> PredictionTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTION_COLUMNS:
            raise ParseError("unexpected predictions header", path, 1)
        rows = list(reader)
    try:
        f = np.array([[float(v) for v in r[4:10]] + [float(r[12])] for r in rows]).reshape(-1, 7)
        fold = np.array([int(r[3]) for r in rows], dtype=int)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed predictions row: {exc}", path) from None
    return PredictionTable(
        ids=[r[0] for r in rows], person=np.array([r[1] for r in rows], dtype=object),
        eye=np.array([r[2] for r in rows], dtype=object), fold=fold,
        g=f[:, 0:2], pred=f[:, 2:4], base=f[:, 4:6], face_lr_diff=f[:, 6],
    )  # fmt: skip


def write_report(path, report: EvalReport) -> None:
    rows = [["person", p.person, p.n, _r(p.mean), _r(p.std), _r(p.baseline_mean)]
            for p in report.persons]  # fmt: skip
    rows.append(["overall", "all", report.n, _r(report.overall_mean), _r(report.overall_std),
                 _r(report.baseline_mean)])  # fmt: skip
    _write_csv(path, ("scope", "name", "n", "mean_deg", "std_deg", "baseline_mean_deg"), rows)


def read_report_overall(path) -> float:
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["scope"] == "overall":
                return float(row["mean_deg"])
    raise ParseError("report has no overall row", path)


def write_bins(path, result: BinResult) -> None:
    rows = [
        [_r(result.edges[i]), _r(result.edges[i + 1]), int(result.counts[i]),
         "" if np.isnan(result.means[i]) else _r(result.means[i])]
        for i in range(len(result.counts))
    ]  # fmt: skip
    a, b, c = result.coeffs
    rows.append(["fit", "a*x^2+b*x+c", "", f"{_r(a)};{_r(b)};{_r(c)}"])
    _write_csv(path, ("lo", "hi", "count", "mean_deg"), rows)


def write_config(path, config: dict) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in config.items()))
