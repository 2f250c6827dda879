"""Calibration/annotation formats, the normalized-sample archive, the ingestion
pipeline and dataset statistics.

File formats
------------
Calibration (``key=value`` per line, ``#`` comments)::

    fx=960
    fy=960
    cx=320
    cy=240
    screen_r=r00,r01,r02,r10,r11,r12,r20,r21,r22   # optional
    screen_t=tx,ty,tz                              # optional, mm

Annotations (one record per line, whitespace-separated ``key=value`` fields)::

    person=p00 image=frames/p00_0000.pgm size=640x480 landmarks=u0,v0,...,u5,v5 target=x,y,z pupils=lu,lv,ru,rv timestamp=2016-01-01T00:00:00

``size`` and ``pupils`` are optional. Landmarks follow
``geometry.LANDMARK_NAMES``; ``target`` is the gaze target in camera
coordinates (mm); ``pupils`` holds the left then right pupil centre in image px.

Archive: a directory holding ``manifest.tsv`` and ``patches/<sample_id>.pgm``.
Angles in the manifest are radians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import geometry as geo
from .errors import (
    ComputationError,
    EmptyInput,
    EmptyOutput,
    InputError,
    ParseError,
    ValidationError,
)
from .imaging import equalize_histogram, perspective_warp, read_pgm, to_grayscale, write_pgm

MIN_COVERAGE = 0.9
MAX_REPROJECTION_RMS = 20.0

MANIFEST_COLUMNS = (
    "sample_id", "person", "eye", "h_yaw", "h_pitch", "g_yaw", "g_pitch",
    "pupil_u", "pupil_v", "patch",
    # extension columns: provenance needed to regenerate labels and fuse eyes
    "record", "flipped", "e_x", "e_y", "e_z",
    "R00", "R01", "R02", "R10", "R11", "R12", "R20", "R21", "R22",
    "target_x", "target_y", "target_z", "face_mean", "face_lr_diff",
)  # fmt: skip


def _fmt(x: float) -> str:
    return repr(float(x))


def _floats(text: str, n: int | None, what: str, path, line) -> np.ndarray:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise ParseError(f"{what}: not a list of numbers: {text!r}", path, line) from None
    if n is not None and len(vals) != n:
        raise ParseError(f"{what}: expected {n} values, got {len(vals)}", path, line)
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(f"{what}: non-finite value", path, line)
    return np.array(vals)


# ---------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationFile:
    camera: geo.CameraIntrinsics
    screen_r: np.ndarray | None = None
    screen_t: np.ndarray | None = None


def parse_calibration(path) -> CalibrationFile:
    vals: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ("fx", "fy", "cx", "cy", "screen_r", "screen_t"):
            raise ParseError(f"unknown calibration key {key!r}", path, lineno)
        vals[key] = (value, lineno)
    for key in ("fx", "fy", "cx", "cy"):
        if key not in vals:
            raise ParseError(f"missing calibration key {key!r}", path)
    num = {k: _floats(vals[k][0], 1, k, path, vals[k][1])[0] for k in ("fx", "fy", "cx", "cy")}
    if num["fx"] <= 0 or num["fy"] <= 0:
        raise ValidationError(f"{path}: focal lengths must be positive")
    calib = CalibrationFile(geo.CameraIntrinsics(num["fx"], num["fy"], num["cx"], num["cy"]))
    if "screen_r" in vals:
        calib.screen_r = _floats(vals["screen_r"][0], 9, "screen_r", path, vals["screen_r"][1]).reshape(3, 3)
    if "screen_t" in vals:
        calib.screen_t = _floats(vals["screen_t"][0], 3, "screen_t", path, vals["screen_t"][1])
    return calib


def write_calibration(path, calib: CalibrationFile) -> None:
    cam = calib.camera
    lines = [f"fx={_fmt(cam.fx)}", f"fy={_fmt(cam.fy)}", f"cx={_fmt(cam.cx)}", f"cy={_fmt(cam.cy)}"]
    if calib.screen_r is not None:
        lines.append("screen_r=" + ",".join(_fmt(v) for v in np.ravel(calib.screen_r)))
    if calib.screen_t is not None:
        lines.append("screen_t=" + ",".join(_fmt(v) for v in calib.screen_t))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# annotations


@dataclass
class AnnotationRecord:
    person: str
    image: str
    landmarks: np.ndarray  # (6, 2) px
    target: np.ndarray  # (3,) mm, camera coordinates
    timestamp: str
    pupils: np.ndarray | None = None  # (2, 2): left, right
    size: tuple[int, int] | None = None  # (width, height)

    def __eq__(self, other):
        if not isinstance(other, AnnotationRecord):
            return NotImplemented
        same_pupils = (self.pupils is None and other.pupils is None) or (
            self.pupils is not None
            and other.pupils is not None
            and np.array_equal(self.pupils, other.pupils)
        )
        return (
            self.person == other.person
            and self.image == other.image
            and np.array_equal(self.landmarks, other.landmarks)
            and np.array_equal(self.target, other.target)
            and self.timestamp == other.timestamp
            and self.size == other.size
            and same_pupils
        )


def _check_bounds(rec: AnnotationRecord, width: int, height: int) -> None:
    lm = rec.landmarks
    if np.any(lm < 0) or np.any(lm[:, 0] > width - 1) or np.any(lm[:, 1] > height - 1):
        raise ValidationError(f"landmark outside the {width}x{height} image for {rec.image}")


def format_record(rec: AnnotationRecord) -> str:
    fields = [f"person={rec.person}", f"image={rec.image}"]
    if rec.size is not None:
        fields.append(f"size={rec.size[0]}x{rec.size[1]}")
    fields.append("landmarks=" + ",".join(_fmt(v) for v in rec.landmarks.ravel()))
    fields.append("target=" + ",".join(_fmt(v) for v in rec.target))
    if rec.pupils is not None:
        fields.append("pupils=" + ",".join(_fmt(v) for v in rec.pupils.ravel()))
    fields.append(f"timestamp={rec.timestamp}")
    return " ".join(fields)


def parse_record(line: str, path=None, lineno: int | None = None) -> AnnotationRecord:
    kv: dict[str, str] = {}
    for tok in line.split():
        if "=" not in tok:
            raise ParseError(f"field without '=': {tok!r}", path, lineno)
        k, v = tok.split("=", 1)
        if k in kv:
            raise ParseError(f"duplicate field {k!r}", path, lineno)
        kv[k] = v
    unknown = set(kv) - {"person", "image", "size", "landmarks", "target", "pupils", "timestamp"}
    if unknown:
        raise ParseError(f"unknown field(s) {sorted(unknown)}", path, lineno)
    for k in ("person", "image", "landmarks", "target", "timestamp"):
        if k not in kv:
            raise ParseError(f"missing field {k!r}", path, lineno)
    if not kv["person"]:
        raise ParseError("empty person id", path, lineno)
    try:
        datetime.fromisoformat(kv["timestamp"])
    except ValueError:
        raise ParseError(f"timestamp is not ISO-8601: {kv['timestamp']!r}", path, lineno) from None
    size = None
    if "size" in kv:
        try:
            w, h = (int(s) for s in kv["size"].lower().split("x"))
        except ValueError:
            raise ParseError(f"size must be WxH, got {kv['size']!r}", path, lineno) from None
        size = (w, h)
    rec = AnnotationRecord(
        person=kv["person"],
        image=kv["image"],
        landmarks=_floats(kv["landmarks"], 12, "landmarks", path, lineno).reshape(6, 2),
        target=_floats(kv["target"], 3, "target", path, lineno),
        timestamp=kv["timestamp"],
        pupils=_floats(kv["pupils"], 4, "pupils", path, lineno).reshape(2, 2) if "pupils" in kv else None,
        size=size,
    )
    if size is not None:
        try:
            _check_bounds(rec, *size)
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return rec


def parse_annotations(path) -> list[AnnotationRecord]:
    records = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        records.append(parse_record(line, path, lineno))
    return records


def write_annotations(path, records: Iterable[AnnotationRecord]) -> None:
    lines = ["# gazepipe annotations v1"] + [format_record(r) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# normalized samples


@dataclass
class NormalizedSample:
    sample_id: str
    person: str
    eye: str
    patch: np.ndarray
    h: np.ndarray
    g: np.ndarray
    pupil: np.ndarray | None = None


@dataclass
class SampleSet:
    """Columnar store of normalized samples (one row per eye patch)."""

    ids: list[str]
    person: np.ndarray
    eye: np.ndarray
    patches: np.ndarray  # (N, H, W) uint8
    h: np.ndarray  # (N, 2)
    g: np.ndarray  # (N, 2)
    pupil: np.ndarray  # (N, 2), nan when unknown
    record: np.ndarray  # (N,) int
    flipped: np.ndarray  # (N,) bool
    e_r: np.ndarray  # (N, 3)
    R: np.ndarray  # (N, 3, 3)
    target: np.ndarray  # (N, 3)
    face_mean: np.ndarray  # (N,)
    face_lr_diff: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> NormalizedSample:
        pupil = None if np.any(np.isnan(self.pupil[i])) else self.pupil[i].copy()
        return NormalizedSample(
            self.ids[i], str(self.person[i]), str(self.eye[i]), self.patches[i],
            self.h[i].copy(), self.g[i].copy(), pupil,
        )  # fmt: skip

    @property
    def persons(self) -> list[str]:
        return sorted(set(self.person.tolist()))

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return SampleSet(
            ids=[self.ids[i] for i in idx],
            **{f: getattr(self, f)[idx] for f in _ARRAY_FIELDS},
        )

    @classmethod
    def empty(cls, height: int = 36, width: int = 60) -> "SampleSet":
        return cls(
            ids=[], person=np.array([], dtype=object), eye=np.array([], dtype=object),
            patches=np.zeros((0, height, width), np.uint8), h=np.zeros((0, 2)),
            g=np.zeros((0, 2)), pupil=np.zeros((0, 2)), record=np.zeros(0, int),
            flipped=np.zeros(0, bool), e_r=np.zeros((0, 3)), R=np.zeros((0, 3, 3)),
            target=np.zeros((0, 3)), face_mean=np.zeros(0), face_lr_diff=np.zeros(0),
        )  # fmt: skip

    @classmethod
    def concat(cls, parts: Sequence["SampleSet"]) -> "SampleSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            ids=[i for p in parts for i in p.ids],
            **{f: np.concatenate([getattr(p, f) for p in parts]) for f in _ARRAY_FIELDS},
        )

    def with_patches(self, patches: np.ndarray) -> "SampleSet":
        out = self.subset(np.arange(len(self)))
        out.patches = np.asarray(patches, dtype=np.uint8)
        return out


_ARRAY_FIELDS = (
    "person", "eye", "patches", "h", "g", "pupil", "record", "flipped",
    "e_r", "R", "target", "face_mean", "face_lr_diff",
)  # fmt: skip


def flip_samples(samples: SampleSet) -> SampleSet:
    """Horizontally mirrored copies (patch columns reversed, yaw negated)."""
    out = samples.subset(np.arange(len(samples)))
    width = samples.patches.shape[2]
    out.patches = np.ascontiguousarray(samples.patches[:, :, ::-1])
    out.h = samples.h * np.array([-1.0, 1.0])
    out.g = samples.g * np.array([-1.0, 1.0])
    out.pupil = samples.pupil.copy()
    out.pupil[:, 0] = (width - 1) - samples.pupil[:, 0]
    out.flipped = ~samples.flipped
    out.ids = [f"{i}f" for i in samples.ids]
    return out


# ---------------------------------------------------------------------------
# archive


def write_archive(directory, samples: SampleSet) -> None:
    root = Path(directory)
    (root / "patches").mkdir(parents=True, exist_ok=True)
    rows = ["\t".join(MANIFEST_COLUMNS)]
    for i, sid in enumerate(samples.ids):
        rel = f"patches/{sid}.pgm"
        write_pgm(root / rel, samples.patches[i])
        R = samples.R[i].ravel()
        vals = [
            sid, str(samples.person[i]), str(samples.eye[i]),
            *(_fmt(v) for v in samples.h[i]), *(_fmt(v) for v in samples.g[i]),
            *(_fmt(v) for v in samples.pupil[i]), rel,
            str(int(samples.record[i])), str(int(samples.flipped[i])),
            *(_fmt(v) for v in samples.e_r[i]), *(_fmt(v) for v in R),
            *(_fmt(v) for v in samples.target[i]),
            _fmt(samples.face_mean[i]), _fmt(samples.face_lr_diff[i]),
        ]  # fmt: skip
        rows.append("\t".join(vals))
    (root / "manifest.tsv").write_text("\n".join(rows) + "\n")


def read_archive(directory) -> SampleSet:
    root = Path(directory)
    manifest = root / "manifest.tsv"
    if not manifest.exists():
        raise InputError(f"no manifest.tsv in {root}")
    lines = manifest.read_text().splitlines()
    header = lines[0].split("\t")
    if tuple(header[: len(MANIFEST_COLUMNS)]) != MANIFEST_COLUMNS:
        raise ParseError("unexpected manifest header", manifest, 1)
    cols: dict[str, list[str]] = {c: [] for c in MANIFEST_COLUMNS}
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(parts)}", manifest, lineno)
        for c, v in zip(header, parts):
            if c in cols:
                cols[c].append(v)
    if not cols["sample_id"]:
        return SampleSet.empty()

    def arr(*names):
        return np.array([[float(v) for v in row] for row in zip(*(cols[n] for n in names))])

    patches = np.stack([read_pgm(root / p) for p in cols["patch"]])
    return SampleSet(
        ids=cols["sample_id"],
        person=np.array(cols["person"], dtype=object),
        eye=np.array(cols["eye"], dtype=object),
        patches=patches,
        h=arr("h_yaw", "h_pitch"),
        g=arr("g_yaw", "g_pitch"),
        pupil=arr("pupil_u", "pupil_v"),
        record=np.array([int(v) for v in cols["record"]]),
        flipped=np.array([v == "1" for v in cols["flipped"]]),
        e_r=arr("e_x", "e_y", "e_z"),
        R=arr(*(f"R{i}{j}" for i in range(3) for j in range(3))).reshape(-1, 3, 3),
        target=arr("target_x", "target_y", "target_z"),
        face_mean=arr("face_mean")[:, 0],
        face_lr_diff=arr("face_lr_diff")[:, 0],
    )


# ---------------------------------------------------------------------------
# ingestion


@dataclass
class IngestResult:
    samples: SampleSet
    failures: list[tuple[int, str]] = field(default_factory=list)
    n_records: int = 0

    @property
    def n_ok(self) -> int:
        return self.n_records - len(self.failures)


def face_region_stats(img: np.ndarray, landmarks: np.ndarray) -> tuple[float, float]:
    """Mean intensity of the face box and its left-half minus right-half mean."""
    lo, hi = landmarks.min(axis=0), landmarks.max(axis=0)
    w, h = hi - lo
    x0 = int(np.clip(np.floor(lo[0] - 0.25 * w), 0, img.shape[1] - 1))
    x1 = int(np.clip(np.ceil(hi[0] + 0.25 * w), x0 + 1, img.shape[1]))
    y0 = int(np.clip(np.floor(lo[1] - 0.6 * h), 0, img.shape[0] - 1))
    y1 = int(np.clip(np.ceil(hi[1] + 0.3 * h), y0 + 1, img.shape[0]))
    return image_intensity_stats(img[y0:y1, x0:x1])


def image_intensity_stats(img: np.ndarray) -> tuple[float, float]:
    img = np.asarray(img, dtype=float)
    half = img.shape[1] // 2
    if half == 0:
        return float(img.mean()), 0.0
    left = img[:, :half].mean()
    right = img[:, img.shape[1] - half :].mean()
    return float(img.mean()), float(left - right)


def default_image_loader(root) -> Callable[[AnnotationRecord], np.ndarray]:
    root = Path(root)

    def load(rec: AnnotationRecord) -> np.ndarray:
        img = read_pgm(root / rec.image)
        return img if img.ndim == 2 else to_grayscale(img)

    return load


def normalize_record(
    rec: AnnotationRecord,
    img: np.ndarray,
    cam: geo.CameraIntrinsics,
    spec: geo.NormalizationSpec,
    face: geo.FaceModel,
    min_coverage: float = MIN_COVERAGE,
    max_rms: float = MAX_REPROJECTION_RMS,
) -> list[dict]:
    """Both eye samples of one record, or an exception explaining the rejection."""
    _check_bounds(rec, img.shape[1], img.shape[0])
    pose = geo.estimate_head_pose(face, rec.landmarks, cam, max_rms=max_rms)
    face_mean, face_lr = face_region_stats(img, rec.landmarks)
    out = []
    for k, eye in enumerate(geo.EYES):
        e_r = geo.eye_center_camera(pose, face, eye)
        xf = geo.compute_normalization(e_r, pose.rotation, spec, cam)
        patch, coverage = perspective_warp(img, xf.W, spec.out_width, spec.out_height)
        if coverage < min_coverage:
            raise ValidationError(f"{eye} eye warp coverage {coverage:.3f} < {min_coverage}")
        g = geo.normalize_gaze(geo.gaze_target_to_vector(rec.target, e_r), xf)
        h = geo.normalize_head(pose.rotation, xf)
        pupil = np.array([np.nan, np.nan])
        if rec.pupils is not None:
            p = xf.W @ np.append(rec.pupils[k], 1.0)
            pupil = p[:2] / p[2]
        out.append(
            dict(
                eye=eye, patch=equalize_histogram(patch), h=h, g=g, pupil=pupil,
                e_r=e_r, R=xf.R, face_mean=face_mean, face_lr_diff=face_lr,
            )
        )  # fmt: skip
    return out


def build_normalized_dataset(
    records: Sequence[AnnotationRecord],
    calib: CalibrationFile,
    spec: geo.NormalizationSpec | None = None,
    face: geo.FaceModel | None = None,
    load_image: Callable[[AnnotationRecord], np.ndarray] | None = None,
    flip_augment: bool = False,
    min_coverage: float = MIN_COVERAGE,
    max_rms: float = MAX_REPROJECTION_RMS,
) -> IngestResult:
    """Run pose estimation, normalization, warping and equalization per record.

    Records that fail (pose divergence, low warp coverage, out-of-bounds
    landmarks, gaze behind the eye) are skipped and reported in ``failures``.
    Sample ids are ``<record index>_<eye initial>``, in input order.
    """
    spec = spec or geo.NormalizationSpec()
    face = face or geo.GENERIC_FACE_MODEL
    if load_image is None:
        load_image = default_image_loader(".")
    rows: list[dict] = []
    failures: list[tuple[int, str]] = []
    for idx, rec in enumerate(records):
        try:
            img = load_image(rec)
            eyes = normalize_record(rec, img, calib.camera, spec, face, min_coverage, max_rms)
        except (InputError, ComputationError) as exc:
            failures.append((idx, f"{type(exc).__name__}: {exc}"))
            continue
        for s in eyes:
            s.update(record=idx, person=rec.person, target=rec.target, sample_id=f"{idx:06d}_{s['eye'][0].upper()}")
            rows.append(s)
    if not rows:
        raise EmptyOutput(f"all {len(records)} records failed normalization")
    samples = SampleSet(
        ids=[r["sample_id"] for r in rows],
        person=np.array([r["person"] for r in rows], dtype=object),
        eye=np.array([r["eye"] for r in rows], dtype=object),
        patches=np.stack([r["patch"] for r in rows]),
        h=np.array([r["h"] for r in rows]),
        g=np.array([r["g"] for r in rows]),
        pupil=np.array([r["pupil"] for r in rows]),
        record=np.array([r["record"] for r in rows]),
        flipped=np.zeros(len(rows), bool),
        e_r=np.array([r["e_r"] for r in rows]),
        R=np.array([r["R"] for r in rows]),
        target=np.array([r["target"] for r in rows]),
        face_mean=np.array([r["face_mean"] for r in rows]),
        face_lr_diff=np.array([r["face_lr_diff"] for r in rows]),
    )
    if flip_augment:
        samples = SampleSet.concat([samples, flip_samples(samples)])
    return IngestResult(samples, failures, len(records))


def regenerate_angles(
    samples: SampleSet,
    i: int,
    record: AnnotationRecord,
    calib: CalibrationFile,
    face: geo.FaceModel | None = None,
    max_rms: float = MAX_REPROJECTION_RMS,
) -> tuple[np.ndarray, np.ndarray]:
    """Recompute (h, g) of sample ``i`` from its stored rotation and its source record."""
    face = face or geo.GENERIC_FACE_MODEL
    pose = geo.estimate_head_pose(face, record.landmarks, calib.camera, max_rms=max_rms)
    R = samples.R[i]
    xf = geo.NormalizationTransform(R=R, S=np.eye(3), M=R, W=np.eye(3))
    g = geo.normalize_gaze(geo.gaze_target_to_vector(samples.target[i], samples.e_r[i]), xf)
    h = geo.normalize_head(pose.rotation, xf)
    if samples.flipped[i]:
        h, g = h * np.array([-1.0, 1.0]), g * np.array([-1.0, 1.0])
    return h, g


# ---------------------------------------------------------------------------
# statistics


@dataclass
class DatasetStats:
    n: int
    mean_intensity: np.ndarray
    lr_difference: np.ndarray
    mean_hist: tuple[np.ndarray, np.ndarray]
    lr_hist: tuple[np.ndarray, np.ndarray]
    per_person: dict[str, int]
    gaze_hist2d: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    head_hist2d: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None


def dataset_statistics(data, bins: int = 32, angle_bins: int = 24) -> DatasetStats:
    """Illumination and label-distribution statistics.

    ``data`` is either a :class:`SampleSet` (face-region statistics stored at
    ingestion, plus 2D gaze/head histograms in degrees) or a sequence of
    grayscale images (each image treated as the face region).
    """
    if isinstance(data, SampleSet):
        if len(data) == 0:
            raise EmptyInput("no samples")
        means, diffs = data.face_mean.astype(float), data.face_lr_diff.astype(float)
        persons, counts = np.unique(data.person.astype(str), return_counts=True)
        per_person = dict(zip(persons.tolist(), counts.tolist()))
        g, h = np.degrees(data.g), np.degrees(data.h)
        gaze2d = np.histogram2d(g[:, 0], g[:, 1], bins=angle_bins)
        head2d = np.histogram2d(h[:, 0], h[:, 1], bins=angle_bins)
    else:
        images = list(data)
        if not images:
            raise EmptyInput("no images")
        stats = np.array([image_intensity_stats(im) for im in images])
        means, diffs = stats[:, 0], stats[:, 1]
        per_person, gaze2d, head2d = {}, None, None
    mean_hist = np.histogram(means, bins=bins, range=(0.0, 255.0))
    lim = max(1.0, float(np.abs(diffs).max()))
    lr_hist = np.histogram(diffs, bins=bins, range=(-lim, lim))
    return DatasetStats(len(means), means, diffs, mean_hist, lr_hist, per_person, gaze2d, head2d)
