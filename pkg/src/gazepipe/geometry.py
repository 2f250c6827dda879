"""3D geometry: head frame, PnP head pose, eye-image normalization, angle
conventions, flip symmetry, two-eye fusion and angular error.

Conventions
-----------
Camera coordinates are x right, y down, z forward, in millimetres. A direction
(x, y, z) with z < 0 points back toward the camera and is encoded as

    pitch = arcsin(-y),  yaw = arctan2(-x, -z)

so (yaw, pitch) = (0, 0) means "looking straight into the camera". Angle pairs
are always stored as ``(yaw, pitch)`` in radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCamera,
    CoincidentPoints,
    DegenerateGeometry,
    DegenerateLandmarks,
    OpposedDirections,
    OutOfHemisphere,
    PoseDivergence,
    RollResidual,
)

DEGENERACY_TOL = 1e-9

LANDMARK_NAMES = (
    "right_eye_outer",
    "right_eye_inner",
    "left_eye_inner",
    "left_eye_outer",
    "mouth_right",
    "mouth_left",
)
EYES = ("left", "right")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def project(self, points: np.ndarray) -> np.ndarray:
        """Pinhole projection of (..., 3) camera-space points to (..., 2) pixels."""
        p = np.asarray(points, dtype=float)
        return np.stack(
            [self.fx * p[..., 0] / p[..., 2] + self.cx, self.fy * p[..., 1] / p[..., 2] + self.cy],
            axis=-1,
        )


@dataclass(frozen=True)
class FaceModel:
    """Six landmarks in head coordinates (mm), ordered as ``LANDMARK_NAMES``."""

    landmarks: np.ndarray

    def __post_init__(self):
        lm = np.asarray(self.landmarks, dtype=float)
        if lm.shape != (6, 3):
            raise ValueError(f"face model needs 6x3 landmarks, got {lm.shape}")
        object.__setattr__(self, "landmarks", lm)

    def eye_center(self, eye: str) -> np.ndarray:
        if eye == "right":
            return 0.5 * (self.landmarks[0] + self.landmarks[1])
        if eye == "left":
            return 0.5 * (self.landmarks[2] + self.landmarks[3])
        raise ValueError(f"eye must be 'left' or 'right', got {eye!r}")

    @property
    def e_h_left(self) -> np.ndarray:
        return self.eye_center("left")

    @property
    def e_h_right(self) -> np.ndarray:
        return self.eye_center("right")


@dataclass(frozen=True)
class HeadPose:
    rotation: np.ndarray
    translation: np.ndarray

    def transform(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class NormalizationSpec:
    d_n: float = 600.0
    camera: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics(960.0, 960.0, 30.0, 18.0)
    )
    out_width: int = 60
    out_height: int = 36

    def __post_init__(self):
        if self.d_n <= 0:
            raise ValueError("d_n must be positive")
        if self.out_width <= 0 or self.out_height <= 0:
            raise ValueError("output size must be positive")


@dataclass(frozen=True)
class NormalizationTransform:
    R: np.ndarray
    S: np.ndarray
    M: np.ndarray
    W: np.ndarray


# ---------------------------------------------------------------------------
# small helpers


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotvec_to_matrix(rv: np.ndarray) -> np.ndarray:
    """Rodrigues formula."""
    rv = np.asarray(rv, dtype=float)
    theta = np.linalg.norm(rv)
    if theta < 1e-12:
        return np.eye(3) + skew(rv)
    k = skew(rv / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rotation_angle_deg(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic distance between two rotations, degrees."""
    D = np.asarray(Ra).T @ np.asarray(Rb)
    s = 0.5 * np.linalg.norm([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]])
    c = 0.5 * (np.trace(D) - 1.0)
    return float(np.degrees(np.arctan2(s, c)))


def euler_to_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """R = Ry(yaw) @ Rx(pitch) @ Rz(roll), radians."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return ry @ rx @ rz


# ---------------------------------------------------------------------------
# head frame


def build_head_frame(landmarks3d) -> tuple[np.ndarray, FaceModel]:
    """Head frame from six 3D landmarks.

    The x-axis runs from the right-eye midpoint to the left-eye midpoint, the
    y-axis lies in the eyes/mouth triangle pointing toward the mouth, and z = x × y
    points backwards from the face. Returns the rotation whose columns are those
    axes (expressed in the input frame) and the landmarks re-expressed in the head
    frame, centred between the eyes.
    """
    p = np.asarray(landmarks3d, dtype=float)
    if p.shape != (6, 3):
        raise DegenerateLandmarks(f"expected 6x3 landmarks, got {p.shape}")
    right = 0.5 * (p[0] + p[1])
    left = 0.5 * (p[2] + p[3])
    mouth = 0.5 * (p[4] + p[5])
    span = np.linalg.norm(left - right)
    if span < DEGENERACY_TOL:
        raise DegenerateLandmarks("eye midpoints coincide")
    x = (left - right) / span
    origin = 0.5 * (left + right)
    down = mouth - origin
    if np.linalg.norm(down) < DEGENERACY_TOL:
        raise DegenerateLandmarks("mouth midpoint coincides with the eye midpoint")
    if np.linalg.norm(np.cross(x, _unit(down))) < DEGENERACY_TOL:
        raise DegenerateLandmarks("eye and mouth midpoints are collinear")
    y = _unit(down - np.dot(down, x) * x)
    z = np.cross(x, y)
    R = np.column_stack([x, y, z])
    return R, FaceModel((p - origin) @ R)


def _generic_face_model() -> FaceModel:
    # person-independent mean shape, mm; outer eye corners sit deeper than inner ones
    raw = np.array(
        [
            [-45.0, 0.0, 12.0],
            [-15.0, 0.0, -8.0],
            [15.0, 0.0, -8.0],
            [45.0, 0.0, 12.0],
            [-25.0, 68.0, -5.0],
            [25.0, 68.0, -5.0],
        ]
    )
    return build_head_frame(raw)[1]


GENERIC_FACE_MODEL = _generic_face_model()


# ---------------------------------------------------------------------------
# PnP


@dataclass
class PnPResult:
    pose: HeadPose
    rms: float
    cost_trace: list[float]
    iterations: int


def reprojection_residuals(R, t, points3d, points2d, cam: CameraIntrinsics) -> np.ndarray:
    pc = points3d @ R.T + t
    return (cam.project(pc) - points2d).ravel()


def _rms(res: np.ndarray) -> float:
    return float(np.sqrt(np.mean(res.reshape(-1, 2) ** 2 @ np.ones(2))))


def _normalized_coords(points2d, cam):
    return np.column_stack(
        [(points2d[:, 0] - cam.cx) / cam.fx, (points2d[:, 1] - cam.cy) / cam.fy]
    )


def _nearest_rotation(A: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(A)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def _init_dlt(X: np.ndarray, xn: np.ndarray):
    """Linear [R|t] from >= 6 non-coplanar correspondences (normalized coords)."""
    c = X.mean(axis=0)
    s = np.sqrt(np.mean(np.sum((X - c) ** 2, axis=1)))
    Xs = (X - c) / s
    n = len(X)
    A = np.zeros((2 * n, 12))
    for i in range(n):
        Xh = np.append(Xs[i], 1.0)
        A[2 * i, 0:4] = Xh
        A[2 * i, 8:12] = -xn[i, 0] * Xh
        A[2 * i + 1, 4:8] = Xh
        A[2 * i + 1, 8:12] = -xn[i, 1] * Xh
    P = np.linalg.svd(A)[2][-1].reshape(3, 4)
    if np.linalg.det(P[:, :3]) < 0:
        P = -P
    U, sv, Vt = np.linalg.svd(P[:, :3])
    R = U @ Vt
    scale = sv.mean()
    t = P[:, 3] / scale
    # undo the point normalization: R Xs + t = R (X - c)/s + t
    t = s * t - R @ c
    return R, t


def _init_planar(X: np.ndarray, xn: np.ndarray):
    """Homography-based [R|t] treating the model as its best-fit plane."""
    c = X.mean(axis=0)
    _, _, Vt = np.linalg.svd(X - c)
    B = Vt.T.copy()
    if np.linalg.det(B) < 0:
        B[:, 2] = -B[:, 2]
    ab = (X - c) @ B[:, :2]
    n = len(X)
    A = np.zeros((2 * n, 9))
    for i in range(n):
        q = np.array([ab[i, 0], ab[i, 1], 1.0])
        A[2 * i, 0:3] = q
        A[2 * i, 6:9] = -xn[i, 0] * q
        A[2 * i + 1, 3:6] = q
        A[2 * i + 1, 6:9] = -xn[i, 1] * q
    H = np.linalg.svd(A)[2][-1].reshape(3, 3)
    if H[2, 2] < 0:
        H = -H
    lam = 2.0 / (np.linalg.norm(H[:, 0]) + np.linalg.norm(H[:, 1]))
    r1, r2 = lam * H[:, 0], lam * H[:, 1]
    Rp = _nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    tp = lam * H[:, 2]
    R = Rp @ B.T
    return R, tp - R @ c


def _lm_refine(R, t, X, uv, cam, max_iter=50, grad_tol=1e-10, step_tol=1e-13):
    """Levenberg-Marquardt on reprojection error with a left-multiplicative rotation update.

    Damping starts at 1e-3, x10 on a rejected step and /10 on an accepted one.
    Only steps that lower the cost are accepted, so the cost trace is
    non-increasing.
    """
    lam = 1e-3
    res = reprojection_residuals(R, t, X, uv, cam)
    cost = 0.5 * float(res @ res)
    trace = [cost]
    n = len(X)
    it = 0
    while it < max_iter:
        it += 1
        rx = X @ R.T
        pc = rx + t
        x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
        dproj = np.zeros((n, 2, 3))
        dproj[:, 0, 0] = cam.fx / z
        dproj[:, 0, 2] = -cam.fx * x / z**2
        dproj[:, 1, 1] = cam.fy / z
        dproj[:, 1, 2] = -cam.fy * y / z**2
        # d(R X)/d(omega) = -[R X]_x
        neg_skew = np.zeros((n, 3, 3))
        neg_skew[:, 0, 1], neg_skew[:, 0, 2] = rx[:, 2], -rx[:, 1]
        neg_skew[:, 1, 0], neg_skew[:, 1, 2] = -rx[:, 2], rx[:, 0]
        neg_skew[:, 2, 0], neg_skew[:, 2, 1] = rx[:, 1], -rx[:, 0]
        J = np.concatenate([dproj @ neg_skew, dproj], axis=2).reshape(2 * n, 6)
        g = J.T @ res
        if np.linalg.norm(g) < grad_tol:
            break
        JtJ = J.T @ J
        try:
            delta = np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ)), -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        R_new = rotvec_to_matrix(delta[:3]) @ R
        t_new = t + delta[3:]
        res_new = reprojection_residuals(R_new, t_new, X, uv, cam)
        cost_new = 0.5 * float(res_new @ res_new)
        if np.isfinite(cost_new) and cost_new < cost:
            R, t, res, cost = R_new, t_new, res_new, cost_new
            trace.append(cost)
            lam /= 10.0
            if np.linalg.norm(delta) < step_tol * (1.0 + np.linalg.norm(t)):
                break
        else:
            lam *= 10.0
            if lam > 1e16:
                break
    return R, t, trace, it


def solve_pnp(face: FaceModel, landmarks2d, cam: CameraIntrinsics) -> PnPResult:
    """Linear initialization followed by LM refinement, no validity checks.

    A DLT and a planar-homography initializer are both computed; the one with
    the lower reprojection error is refined, and the other is refined too when
    the first ends above 1 px RMS.
    """
    X = face.landmarks
    uv = np.asarray(landmarks2d, dtype=float)
    if uv.shape != (len(X), 2) or len(X) < 6:
        raise ValueError(f"need >= 6 2D landmarks matching the model, got {uv.shape}")
    xn = _normalized_coords(uv, cam)
    inits = []
    for init in (_init_dlt, _init_planar):
        try:
            R0, t0 = init(X, xn)
        except np.linalg.LinAlgError:
            continue
        # a linear solve can land on the mirrored, behind-camera solution
        if np.all(np.isfinite(t0)) and t0[2] > 0:
            inits.append((_rms(reprojection_residuals(R0, t0, X, uv, cam)), R0, t0))
    inits.sort(key=lambda item: item[0])
    best = None
    for _, R0, t0 in inits:
        R, t, trace, it = _lm_refine(R0, t0, X, uv, cam)
        R = _nearest_rotation(R)
        rms = _rms(reprojection_residuals(R, t, X, uv, cam))
        if best is None or rms < best.rms:
            best = PnPResult(HeadPose(R, t), rms, trace, it)
        if best.rms <= 1.0:
            break
    if best is None:
        raise PoseDivergence("no initializer produced a pose in front of the camera")
    return best


def estimate_head_pose(
    face: FaceModel, landmarks2d, cam: CameraIntrinsics, max_rms: float = 20.0
) -> HeadPose:
    fit = solve_pnp(face, landmarks2d, cam)
    if not fit.rms <= max_rms:
        raise PoseDivergence(f"reprojection RMS {fit.rms:.3f} px exceeds {max_rms} px")
    if fit.pose.translation[2] <= 0:
        raise BehindCamera(f"estimated face depth {fit.pose.translation[2]:.3f} mm")
    return fit.pose


def eye_center_camera(pose: HeadPose, face: FaceModel, eye: str) -> np.ndarray:
    return pose.rotation @ face.eye_center(eye) + pose.translation


# ---------------------------------------------------------------------------
# normalization


def compute_normalization(
    e_r, R_r, spec: NormalizationSpec | None = None, C_r: CameraIntrinsics | None = None
) -> NormalizationTransform:
    spec = spec or NormalizationSpec()
    e_r = np.asarray(e_r, dtype=float)
    dist = np.linalg.norm(e_r)
    if not (dist > 0 and e_r[2] > 0):
        raise DegenerateGeometry(f"eye centre must lie in front of the camera, got {e_r}")
    z_c = e_r / dist
    x_head = np.asarray(R_r, dtype=float)[:, 0]
    y_dir = np.cross(z_c, x_head)
    if np.linalg.norm(y_dir) < DEGENERACY_TOL:
        raise DegenerateGeometry("head x-axis is parallel to the eye direction")
    y_c = _unit(y_dir)
    x_c = np.cross(y_c, z_c)
    R = np.vstack([x_c, y_c, z_c])
    S = np.diag([1.0, 1.0, spec.d_n / dist])
    M = S @ R
    C_r = C_r if C_r is not None else spec.camera
    W = spec.camera.matrix @ M @ np.linalg.inv(C_r.matrix)
    return NormalizationTransform(R=R, S=S, M=M, W=W)


def angles_to_vector(a) -> np.ndarray:
    """(yaw, pitch) -> unit vector; works on (..., 2) arrays."""
    a = np.asarray(a, dtype=float)
    yaw, pitch = a[..., 0], a[..., 1]
    return np.stack(
        [-np.cos(pitch) * np.sin(yaw), -np.sin(pitch), -np.cos(pitch) * np.cos(yaw)], axis=-1
    )


def vector_to_angles(v) -> np.ndarray:
    """Unit vector(s) with z < 0 -> (yaw, pitch)."""
    v = np.asarray(v, dtype=float)
    if np.any(v[..., 2] >= 0):
        raise OutOfHemisphere("direction must point toward the camera (z < 0)")
    pitch = np.arcsin(np.clip(-v[..., 1], -1.0, 1.0))
    yaw = np.arctan2(-v[..., 0], -v[..., 2])
    return np.stack([yaw, pitch], axis=-1)


def normalize_gaze(g_r, xform: NormalizationTransform) -> np.ndarray:
    # rotation only: S would bend directions
    return vector_to_angles(_unit(xform.R @ np.asarray(g_r, dtype=float)))


def normalize_head(R_r, xform: NormalizationTransform, tol: float = 1e-6) -> np.ndarray:
    """Head angles in normalized space: direction of the face normal (-z_head)."""
    Rn = xform.R @ np.asarray(R_r, dtype=float)
    roll = np.arcsin(np.clip(Rn[1, 0], -1.0, 1.0))
    if abs(roll) > tol:
        raise RollResidual(f"normalized head roll {roll:.3e} rad is not zero")
    return vector_to_angles(-Rn[:, 2])


def gaze_target_to_vector(target, e_r) -> np.ndarray:
    d = np.asarray(target, dtype=float) - np.asarray(e_r, dtype=float)
    n = np.linalg.norm(d)
    if n < DEGENERACY_TOL:
        raise CoincidentPoints("gaze target coincides with the eye centre")
    return d / n


def denormalize_gaze(angles, xform: NormalizationTransform) -> np.ndarray:
    """Normalized (yaw, pitch) back to a camera-space unit direction."""
    return xform.R.T @ angles_to_vector(angles)


# ---------------------------------------------------------------------------
# flip, error, fusion


def flip_sample(image: np.ndarray, h, g):
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    return (
        np.ascontiguousarray(image[:, ::-1]),
        np.array([-h[0], h[1]]),
        np.array([-g[0], g[1]]),
    )


def _as_direction(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 2:
        return angles_to_vector(a)
    if a.shape[-1] == 3:
        return a / np.linalg.norm(a, axis=-1, keepdims=True)
    raise ValueError(f"expected (..., 2) angles or (..., 3) vectors, got {a.shape}")


def angular_error(a, b) -> np.ndarray | float:
    """Angle between two directions (vectors or (yaw, pitch) pairs), degrees."""
    va, vb = _as_direction(a), _as_direction(b)
    # atan2 form stays accurate for nearly parallel directions, unlike arccos
    cross = np.linalg.norm(np.cross(va, vb), axis=-1)
    err = np.degrees(np.arctan2(cross, np.sum(va * vb, axis=-1)))
    return float(err) if np.ndim(err) == 0 else err


def fuse_both_eyes(g_left, g_right, e_left, e_right):
    s = np.asarray(g_left, dtype=float) + np.asarray(g_right, dtype=float)
    n = np.linalg.norm(s)
    if n < 1e-6:
        raise OpposedDirections("left and right gaze directions cancel")
    origin = 0.5 * (np.asarray(e_left, dtype=float) + np.asarray(e_right, dtype=float))
    return origin, s / n
