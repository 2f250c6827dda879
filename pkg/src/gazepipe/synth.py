"""Parametric eye renderer and synthetic scene generator.

The renderer is deliberately analyzable rather than photorealistic: the iris
is a disc whose centre sits ``KAPPA * (tan(yaw), -tan(pitch))`` px from the
patch centre, clipped by two parabolic eyelids whose socket shifts with the
head angles, plus an affine illumination ramp and Gaussian noise.

Full frames are produced by evaluating the same appearance function through
the exact normalization warp of each eye, so running the ingestion pipeline on
generated records recovers the generating labels up to pose-estimation error.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

import numpy as np

from . import geometry as geo
from .dataset_io import AnnotationRecord, CalibrationFile
from .errors import OutOfRangeGaze

KAPPA = 20.0  # iris displacement, px per unit tan(angle)
HEAD_SHIFT = 8.0  # eye-socket displacement, px per unit tan(head angle)
MAX_GAZE_DEG = 30.0

GAZE_YAW_RANGE = (-18.0, 18.0)
GAZE_PITCH_RANGE = (-1.5, 20.0)

FRAME_SIZE = (640, 480)
FRAME_CAMERA = geo.CameraIntrinsics(960.0, 960.0, 320.0, 240.0)


@dataclass(frozen=True)
class EyeAppearance:
    iris_radius: float = 8.0
    sclera: float = 205.0
    iris: float = 70.0
    pupil: float = 25.0
    skin: float = 150.0
    aperture: float = 10.0  # upper-lid height above the socket centre, px
    half_width: float = 22.0
    illum_dx: float = 0.0  # intensity per px
    illum_dy: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0


def eye_intensity(x, y, g, h, app: EyeAppearance) -> np.ndarray:
    """Noise- and shading-free intensity at patch coordinates relative to the centre."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = HEAD_SHIFT * np.tan(h[0]), -HEAD_SHIFT * np.tan(h[1])
    xr, yr = x - sx, y - sy
    prof = 1.0 - (xr / app.half_width) ** 2
    upper, lower = -app.aperture * prof, 0.7 * app.aperture * prof
    opening = np.clip(np.minimum(yr - upper, lower - yr) + 0.5, 0.0, 1.0) * (prof > 0)
    ix, iy = KAPPA * np.tan(g[0]), -KAPPA * np.tan(g[1])
    d = np.hypot(x - ix, y - iy)
    iris_cov = np.clip(app.iris_radius - d + 0.5, 0.0, 1.0)
    pupil_cov = np.clip(0.45 * app.iris_radius - d + 0.5, 0.0, 1.0)
    ball = app.sclera * (1.0 - iris_cov) + app.iris * iris_cov
    ball = ball * (1.0 - pupil_cov) + app.pupil * pupil_cov
    return app.skin * (1.0 - opening) + ball * opening


def _check_gaze(g) -> None:
    if np.any(np.abs(np.degrees(g)) > MAX_GAZE_DEG):
        raise OutOfRangeGaze(f"gaze {np.degrees(g)} deg outside +-{MAX_GAZE_DEG} deg")


def render_eye(g, h, app: EyeAppearance, width: int = 60, height: int = 36, rng=None) -> np.ndarray:
    """Render a normalized eye patch for gaze ``g`` and head angles ``h`` (radians)."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    _check_gaze(g)
    v, u = np.mgrid[0:height, 0:width].astype(float)
    x, y = u - (width - 1) / 2.0, v - (height - 1) / 2.0
    img = eye_intensity(x, y, g, h, app) + app.illum_dx * x + app.illum_dy * y
    if app.noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(app.seed)
        img = img + rng.normal(0.0, app.noise_sigma, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def iris_centre(g, width: int = 60, height: int = 36) -> np.ndarray:
    """Iris centre in patch pixel coordinates."""
    return np.array(
        [(width - 1) / 2.0 + KAPPA * np.tan(g[0]), (height - 1) / 2.0 - KAPPA * np.tan(g[1])]
    )


def sample_appearance(rng: np.random.Generator, seed: int = 0) -> EyeAppearance:
    return EyeAppearance(
        iris_radius=rng.uniform(7.0, 9.5),
        sclera=rng.uniform(175.0, 230.0),
        iris=rng.uniform(40.0, 100.0),
        pupil=rng.uniform(10.0, 35.0),
        skin=rng.uniform(110.0, 175.0),
        aperture=rng.uniform(9.0, 12.0),
        half_width=rng.uniform(20.0, 24.0),
        noise_sigma=rng.uniform(1.5, 4.0),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# PnP scenes


@dataclass
class PnPScene:
    face: geo.FaceModel
    pose: geo.HeadPose
    landmarks: np.ndarray
    clean_landmarks: np.ndarray
    camera: geo.CameraIntrinsics
    frame_size: tuple[int, int]


def random_rotation(rng: np.random.Generator, max_deg: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return geo.rotvec_to_matrix(axis * np.radians(rng.uniform(0.0, max_deg)))


def generate_pnp_scene(
    rot_max_deg: float = 40.0,
    depth: tuple[float, float] = (400.0, 800.0),
    lateral: float = 50.0,
    noise: float = 0.0,
    seed: int | np.random.Generator = 0,
    face: geo.FaceModel | None = None,
    camera: geo.CameraIntrinsics = FRAME_CAMERA,
    frame_size: tuple[int, int] = FRAME_SIZE,
) -> PnPScene:
    """Random pose of the face model and its (optionally noisy) 2D projection."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    face = face or geo.GENERIC_FACE_MODEL
    w, h = frame_size
    for _ in range(1000):  # redraw until every landmark lands inside the frame
        R = random_rotation(rng, rot_max_deg)
        t = np.array(
            [rng.uniform(-lateral, lateral), rng.uniform(-lateral, lateral), rng.uniform(*depth)]
        )
        pose = geo.HeadPose(R, t)
        clean = camera.project(pose.transform(face.landmarks))
        if np.all((clean >= 0) & (clean < [w - 1, h - 1])):
            break
    else:
        raise ValueError("pose ranges never place the face inside the frame")
    noisy = clean + rng.normal(0.0, noise, clean.shape) if noise > 0 else clean.copy()
    return PnPScene(face, pose, noisy, clean, camera, frame_size)


# ---------------------------------------------------------------------------
# person datasets


@dataclass
class SynthConfig:
    n_persons: int = 8
    samples_each: int = 400
    seed: int = 0
    gaze_yaw: tuple[float, float] = GAZE_YAW_RANGE  # degrees
    gaze_pitch: tuple[float, float] = GAZE_PITCH_RANGE
    head_yaw: tuple[float, float] = (-15.0, 15.0)
    head_pitch: tuple[float, float] = (-10.0, 10.0)
    head_roll: tuple[float, float] = (-5.0, 5.0)
    lateral: tuple[float, float] = (60.0, 40.0)  # |x|, |y| mm
    depth: tuple[float, float] = (500.0, 700.0)
    target_distance: tuple[float, float] = (0.7, 1.0)  # fraction of face distance
    landmark_noise: float = 0.3  # px
    illum_sigma: float = 0.25  # per-sample horizontal shading slope, intensity/px
    corrupt_eye: str | None = None  # "left"/"right": shadow + noise on that eye
    camera: geo.CameraIntrinsics = FRAME_CAMERA
    frame_size: tuple[int, int] = FRAME_SIZE


@dataclass
class _SampleState:
    pose: geo.HeadPose
    target: np.ndarray
    g: np.ndarray  # (2, 2) per eye (geo.EYES order), normalized with the true pose
    h: np.ndarray
    xforms: list
    illum: tuple[float, float]
    shadow: tuple[float, float]
    noise_seed: int


@dataclass
class SyntheticDataset:
    config: SynthConfig
    appearances: list[EyeAppearance]
    records: list[AnnotationRecord] = field(default_factory=list)
    states: list[_SampleState] = field(default_factory=list)
    spec: geo.NormalizationSpec = field(default_factory=geo.NormalizationSpec)

    @property
    def calibration(self) -> CalibrationFile:
        return CalibrationFile(self.config.camera)

    @property
    def poses(self) -> list[geo.HeadPose]:
        return [s.pose for s in self.states]

    @property
    def true_gaze(self) -> np.ndarray:
        """(N, 2, 2): per record, per eye (left, right), (yaw, pitch)."""
        return np.array([s.g for s in self.states])

    def person_index(self, i: int) -> int:
        return i // self.config.samples_each

    def frame(self, i: int) -> np.ndarray:
        return render_frame(self, i)

    def load_image(self, rec: AnnotationRecord) -> np.ndarray:
        return self.frame(self._index[rec.image])

    def __post_init__(self):
        self._index: dict[str, int] = {}

    def _register(self, rec: AnnotationRecord, state: _SampleState) -> None:
        self._index[rec.image] = len(self.records)
        self.records.append(rec)
        self.states.append(state)


def _uniform_deg(rng, lo_hi):
    return np.radians(rng.uniform(*lo_hi))


def generate_persons(config: SynthConfig | None = None, **overrides) -> SyntheticDataset:
    """Synthetic persons with annotated full-frame samples.

    Every random draw is keyed by (seed, person, sample), so regenerating with
    the same configuration reproduces the dataset exactly.
    """
    cfg = replace(config or SynthConfig(), **overrides)
    if cfg.n_persons < 1 or cfg.samples_each < 1:
        raise ValueError("need at least one person and one sample")
    spec = geo.NormalizationSpec()
    face = geo.GENERIC_FACE_MODEL
    apps = [
        sample_appearance(np.random.default_rng([cfg.seed, p]), seed=p) for p in range(cfg.n_persons)
    ]
    ds = SyntheticDataset(cfg, apps, spec=spec)
    t0 = datetime(2016, 1, 1)
    for p in range(cfg.n_persons):
        for k in range(cfg.samples_each):
            rng = np.random.default_rng([cfg.seed, p, k, 1])
            R = geo.euler_to_matrix(
                _uniform_deg(rng, cfg.head_yaw), _uniform_deg(rng, cfg.head_pitch),
                _uniform_deg(rng, cfg.head_roll),
            )  # fmt: skip
            t = np.array(
                [
                    rng.uniform(-cfg.lateral[0], cfg.lateral[0]),
                    rng.uniform(-cfg.lateral[1], cfg.lateral[1]),
                    rng.uniform(*cfg.depth),
                ]
            )
            pose = geo.HeadPose(R, t)
            g_ref = np.array([_uniform_deg(rng, cfg.gaze_yaw), _uniform_deg(rng, cfg.gaze_pitch)])
            centre_xf = geo.compute_normalization(t, R, spec, cfg.camera)
            direction = geo.denormalize_gaze(g_ref, centre_xf)
            target = t + rng.uniform(*cfg.target_distance) * np.linalg.norm(t) * direction
            xforms, gs, hs = [], [], []
            for eye in geo.EYES:
                e_r = geo.eye_center_camera(pose, face, eye)
                xf = geo.compute_normalization(e_r, R, spec, cfg.camera)
                xforms.append(xf)
                gs.append(geo.normalize_gaze(geo.gaze_target_to_vector(target, e_r), xf))
                hs.append(geo.normalize_head(R, xf))
            clean = cfg.camera.project(pose.transform(face.landmarks))
            landmarks = clean + rng.normal(0.0, cfg.landmark_noise, clean.shape)
            pupils = []
            for xf, g in zip(xforms, gs):
                q = np.linalg.solve(xf.W, np.append(iris_centre(g, spec.out_width, spec.out_height), 1.0))
                pupils.append(q[:2] / q[2])
            state = _SampleState(
                pose=pose, target=target, g=np.array(gs), h=np.array(hs), xforms=xforms,
                illum=(rng.normal(0.0, cfg.illum_sigma), rng.normal(0.0, 0.2 * cfg.illum_sigma)),
                shadow=(rng.uniform(0, 2 * np.pi), rng.uniform(-8.0, 8.0)),
                noise_seed=int(rng.integers(2**31)),
            )  # fmt: skip
            rec = AnnotationRecord(
                person=f"p{p:02d}",
                image=f"frames/p{p:02d}_{k:04d}.pgm",
                landmarks=landmarks,
                target=target,
                timestamp=(t0 + timedelta(days=p, seconds=30 * k)).isoformat(),
                pupils=np.array(pupils),
                size=cfg.frame_size,
            )
            ds._register(rec, state)
    return ds


def render_frame(ds: SyntheticDataset, i: int) -> np.ndarray:
    """Full camera frame of record ``i``: skin with shading, both eyes, noise."""
    cfg, st = ds.config, ds.states[i]
    app = ds.appearances[ds.person_index(i)]
    width, height = cfg.frame_size
    centre = cfg.camera.project(st.pose.translation)
    gx, gy = st.illum
    xs = np.arange(width, dtype=float) - centre[0]
    ys = np.arange(height, dtype=float) - centre[1]
    frame = app.skin + gx * xs[None, :] + gy * ys[:, None]
    pw, ph = ds.spec.out_width, ds.spec.out_height
    corners = np.array([[-3, -3, 1], [pw + 2, -3, 1], [-3, ph + 2, 1], [pw + 2, ph + 2, 1]], float)
    for k, eye in enumerate(geo.EYES):
        xf = st.xforms[k]
        q = np.linalg.solve(xf.W, corners.T)
        q = q[:2] / q[2]
        x0, y0 = np.floor(q.min(axis=1)).astype(int)
        x1, y1 = np.ceil(q.max(axis=1)).astype(int) + 1
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, width), min(y1, height)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1].astype(float)
        p = xf.W @ np.stack([xx.ravel(), yy.ravel(), np.ones(xx.size)])
        u = (p[0] / p[2]).reshape(xx.shape) - (pw - 1) / 2.0
        v = (p[1] / p[2]).reshape(xx.shape) - (ph - 1) / 2.0
        patch = eye_intensity(u, v, st.g[k], st.h[k], app) - app.skin
        rng = np.random.default_rng([st.noise_seed, k])  # independent stream per eye
        if cfg.corrupt_eye == eye:
            ang, off = st.shadow
            shade = (u * np.cos(ang) + v * np.sin(ang)) > off
            base = frame[y0:y1, x0:x1] + patch
            patch = np.where(shade, 0.35 * base, base) - frame[y0:y1, x0:x1]
            patch = patch + rng.normal(0.0, 12.0, patch.shape)
        frame[y0:y1, x0:x1] += patch
        frame[y0:y1, x0:x1] += rng.normal(0.0, app.noise_sigma, patch.shape)
    return np.clip(np.rint(frame), 0, 255).astype(np.uint8)
