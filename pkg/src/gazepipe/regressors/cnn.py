"""Two-stage convolutional gaze regressor with hand-written backpropagation.

Layout: conv1 -> ReLU -> maxpool1 -> conv2 -> ReLU -> maxpool2 -> flatten,
concatenated with the auxiliary feature vector -> fc1 -> ReLU -> fc2 (2 outputs).
Convolutions run as im2col + matrix multiply. Tensors are NCHW.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .. import kernels
from ..errors import EmptyTrainingSet, NonFiniteLoss, ShapeMismatch
from .optim import AdamState, TrainConfig, adam_step

PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


@dataclass(frozen=True)
class CnnArchitecture:
    in_width: int = 60
    in_height: int = 36
    feat_dim: int = 2
    conv1_maps: int = 20
    conv1_kernel: int = 5
    conv1_pad: int = 0
    pool1_size: int = 2
    pool1_stride: int = 2
    conv2_maps: int = 50
    conv2_kernel: int = 5
    conv2_pad: int = 0
    pool2_size: int = 2
    pool2_stride: int = 2
    fc1_units: int = 500
    n_out: int = 2

    def __post_init__(self):
        for name, (h, w) in self.shapes().items():
            if h < 1 or w < 1:
                raise ShapeMismatch(
                    f"{self.in_width}x{self.in_height} input collapses at {name} ({w}x{h})"
                )

    def shapes(self) -> dict[str, tuple[int, int]]:
        """Spatial (height, width) after each stage."""
        h, w = self.in_height, self.in_width
        out = {}
        h, w = (_out_size(n, self.conv1_kernel, 1, self.conv1_pad) for n in (h, w))
        out["conv1"] = (h, w)
        h, w = (_out_size(n, self.pool1_size, self.pool1_stride, 0) for n in (h, w))
        out["pool1"] = (h, w)
        h, w = (_out_size(n, self.conv2_kernel, 1, self.conv2_pad) for n in (h, w))
        out["conv2"] = (h, w)
        h, w = (_out_size(n, self.pool2_size, self.pool2_stride, 0) for n in (h, w))
        out["pool2"] = (h, w)
        return out

    @property
    def flat_dim(self) -> int:
        h, w = self.shapes()["pool2"]
        return self.conv2_maps * h * w

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        k1, k2 = self.conv1_kernel, self.conv2_kernel
        fc1_in = self.flat_dim + self.feat_dim
        return {
            "conv1_w": (self.conv1_maps, 1, k1, k1),
            "conv1_b": (self.conv1_maps,),
            "conv2_w": (self.conv2_maps, self.conv1_maps, k2, k2),
            "conv2_b": (self.conv2_maps,),
            "fc1_w": (self.fc1_units, fc1_in),
            "fc1_b": (self.fc1_units,),
            "fc2_w": (self.n_out, self.fc1_units),
            "fc2_b": (self.n_out,),
        }

    @classmethod
    def for_resolution(cls, width: int, height: int, feat_dim: int = 2) -> "CnnArchitecture":
        """Architecture adapted to a ``width`` x ``height`` input.

        60x36 uses the standard layout. Inputs with width - 28 == height - 16 >= 0
        get a size-preserving conv1 followed by a stride-1 pool that lands on the
        standard 28x16 map, so everything after pool1 matches the 60x36 model.
        Anything smaller keeps its resolution through size-preserving convolutions
        and drops pool1.
        """
        if (width, height) == (60, 36):
            return cls(feat_dim=feat_dim)
        if width >= 28 and width - 28 == height - 16:
            return cls(
                in_width=width, in_height=height, feat_dim=feat_dim,
                conv1_pad=2, pool1_size=width - 27, pool1_stride=1,
            )  # fmt: skip
        return cls(
            in_width=width, in_height=height, feat_dim=feat_dim,
            conv1_pad=2, pool1_size=1, pool1_stride=1, conv2_pad=2,
        )  # fmt: skip


def init_params(arch: CnnArchitecture, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases.

    Layers feeding a ReLU use limit sqrt(6 / fan_in); the linear output layer
    uses sqrt(3 / fan_in).
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[1:]))
        gain = 3.0 if name == "fc2_w" else 6.0
        lim = np.sqrt(gain / fan_in)
        params[name] = rng.uniform(-lim, lim, size=shape).astype(dtype)
    return params


# ---------------------------------------------------------------------------
# layers


def _conv_forward(x, w, b, pad):
    n, _, h, wd = x.shape
    f, _, kh, kw = w.shape
    oh, ow = _out_size(h, kh, 1, pad), _out_size(wd, kw, 1, pad)
    cols = kernels.im2col(np.ascontiguousarray(x), kh, kw, 1, pad)
    out = cols @ w.reshape(f, -1).T
    out += b
    out = np.ascontiguousarray(out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))
    return out, cols


def _conv_backward(dout, cols, x_shape, w, pad, need_dx=True):
    f = w.shape[0]
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dmat.sum(axis=0)
    dx = None
    if need_dx:
        dcols = np.ascontiguousarray(dmat @ w.reshape(f, -1))
        dx = kernels.col2im(dcols, x_shape, w.shape[2], w.shape[3], 1, pad)
    return dx, dw, db


def _pool_forward(x, size, stride):
    if size == 1 and stride == 1:
        return x, None
    return kernels.maxpool_forward(x, size, stride)


def _pool_backward(dout, arg, shape):
    if arg is None:
        return dout
    return kernels.maxpool_backward(np.ascontiguousarray(dout), arg, shape[2], shape[3])


def forward(params, arch: CnnArchitecture, x: np.ndarray, feat: np.ndarray, keep: bool = False):
    """Network output for ``x`` (N, 1, H, W) and ``feat`` (N, F).

    With ``keep`` the intermediate activations needed by :func:`backward` are
    returned alongside the output.
    """
    a1, cols1 = _conv_forward(x, params["conv1_w"], params["conv1_b"], arch.conv1_pad)
    np.maximum(a1, 0, out=a1)
    p1, arg1 = _pool_forward(a1, arch.pool1_size, arch.pool1_stride)
    a2, cols2 = _conv_forward(p1, params["conv2_w"], params["conv2_b"], arch.conv2_pad)
    np.maximum(a2, 0, out=a2)
    p2, arg2 = _pool_forward(a2, arch.pool2_size, arch.pool2_stride)
    n = x.shape[0]
    z = np.concatenate([p2.reshape(n, -1), feat.astype(p2.dtype, copy=False)], axis=1)
    h1 = z @ params["fc1_w"].T
    h1 += params["fc1_b"]
    np.maximum(h1, 0, out=h1)
    out = h1 @ params["fc2_w"].T
    out += params["fc2_b"]
    if not keep:
        return out, None
    cache = dict(x_shape=x.shape, cols1=cols1, a1=a1, arg1=arg1, p1=p1, cols2=cols2, a2=a2,
                 arg2=arg2, p2_shape=p2.shape, z=z, h1=h1)  # fmt: skip
    return out, cache


def backward(params, arch: CnnArchitecture, cache, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given dLoss/dOutput."""
    g = {}
    h1, z = cache["h1"], cache["z"]
    g["fc2_w"] = dout.T @ h1
    g["fc2_b"] = dout.sum(axis=0)
    dh1 = dout @ params["fc2_w"]
    dh1 *= h1 > 0
    g["fc1_w"] = dh1.T @ z
    g["fc1_b"] = dh1.sum(axis=0)
    dz = dh1 @ params["fc1_w"]
    p2_shape = cache["p2_shape"]
    dp2 = dz[:, : arch.flat_dim].reshape(p2_shape)
    a2 = cache["a2"]
    da2 = _pool_backward(dp2, cache["arg2"], a2.shape)
    da2 *= a2 > 0
    dp1, g["conv2_w"], g["conv2_b"] = _conv_backward(
        da2, cache["cols2"], cache["p1"].shape, params["conv2_w"], arch.conv2_pad
    )
    a1 = cache["a1"]
    da1 = _pool_backward(dp1, cache["arg1"], a1.shape)
    da1 = da1 * (a1 > 0)
    _, g["conv1_w"], g["conv1_b"] = _conv_backward(
        da1, cache["cols1"], cache["x_shape"], params["conv1_w"], arch.conv1_pad, need_dx=False
    )
    return g


def loss_and_grads(params, arch, x, feat, y):
    """Summed squared error sum_i ||f(x_i) - y_i||^2 and its gradients."""
    out, cache = forward(params, arch, x, feat, keep=True)
    diff = out - y.astype(out.dtype, copy=False)
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.sum(diff.astype(np.float64) ** 2))
    grads = backward(params, arch, cache, 2.0 * diff)
    return loss, grads


# ---------------------------------------------------------------------------
# model


def patches_to_input(patches: np.ndarray, dtype) -> np.ndarray:
    """uint8 (N, H, W) -> (N, 1, H, W) scaled to [0, 1]."""
    p = np.asarray(patches)
    return (p.astype(dtype) / dtype(255.0))[:, None, :, :]


class CnnModel:
    kind = "cnn"

    def __init__(self, arch: CnnArchitecture, params: dict[str, np.ndarray], dtype="float32"):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        self.params = {k: np.ascontiguousarray(params[k], dtype=self.dtype) for k in PARAM_NAMES}

    def predict(self, patches: np.ndarray, feat: np.ndarray, batch: int = 256) -> np.ndarray:
        """Gaze angles (N, 2) float64 for uint8 patches (N, H, W)."""
        patches = np.asarray(patches)
        feat = np.asarray(feat, dtype=float).reshape(len(patches), -1)
        if patches.shape[1:] != (self.arch.in_height, self.arch.in_width):
            raise ShapeMismatch(
                f"patch {patches.shape[2]}x{patches.shape[1]} does not match "
                f"network input {self.arch.in_width}x{self.arch.in_height}"
            )
        if feat.shape[1] != self.arch.feat_dim:
            raise ShapeMismatch(f"feature length {feat.shape[1]} != {self.arch.feat_dim}")
        out = np.empty((len(patches), self.arch.n_out))
        for s in range(0, len(patches), batch):
            x = patches_to_input(patches[s : s + batch], self.dtype.type)
            f = feat[s : s + batch].astype(self.dtype)
            out[s : s + batch], _ = forward(self.params, self.arch, x, f)
        return out

    def state(self) -> tuple[dict, dict[str, np.ndarray]]:
        meta = {f"arch.{k}": v for k, v in asdict(self.arch).items()}
        meta["dtype"] = self.dtype.name
        return meta, dict(self.params)

    @classmethod
    def from_state(cls, meta: dict, tensors: dict) -> "CnnModel":
        fields = {k[5:]: int(v) for k, v in meta.items() if k.startswith("arch.")}
        return cls(CnnArchitecture(**fields), tensors, dtype=meta["dtype"])


def cnn_forward(model: CnnModel, patch: np.ndarray, feat) -> np.ndarray:
    """Single-sample prediction (yaw, pitch) in radians."""
    return model.predict(np.asarray(patch)[None], np.asarray(feat, dtype=float)[None])[0]


def cnn_gradients(model: CnnModel, patches, feat, targets) -> tuple[float, dict[str, np.ndarray]]:
    """Batch loss and its gradient for every parameter, in the model's dtype."""
    patches = np.asarray(patches)
    if len(patches) == 0:
        raise EmptyTrainingSet("empty batch")
    x = patches_to_input(patches, model.dtype.type)
    f = np.asarray(feat, dtype=model.dtype).reshape(len(patches), -1)
    y = np.asarray(targets, dtype=model.dtype)
    return loss_and_grads(model.params, model.arch, x, f, y)


def train_cnn(
    patches: np.ndarray,
    feat: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig | None = None,
    arch: CnnArchitecture | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> tuple[CnnModel, np.ndarray]:
    """Minibatch Adam on the summed squared angle error.

    Returns the model and the per-iteration minibatch loss trace. Minibatches
    are drawn from a seeded permutation that is reshuffled after each pass.
    """
    config = config or TrainConfig()
    patches = np.asarray(patches)
    n = len(patches)
    if n == 0:
        raise EmptyTrainingSet("no training samples")
    feat = np.asarray(feat, dtype=float).reshape(n, -1)
    targets = np.asarray(targets, dtype=float)
    if arch is None:
        arch = CnnArchitecture.for_resolution(patches.shape[2], patches.shape[1], feat.shape[1])
    if patches.shape[1:] != (arch.in_height, arch.in_width) or feat.shape[1] != arch.feat_dim:
        raise ShapeMismatch("training data does not match the architecture")
    dtype = np.dtype(config.dtype)
    rng = np.random.default_rng(config.seed)
    params = init_params(arch, seed=int(rng.integers(2**31)), dtype=dtype)
    x_all = patches_to_input(patches, dtype.type)
    f_all = feat.astype(dtype)
    y_all = targets.astype(dtype)
    bs = min(config.batch_size, n)
    state = AdamState()
    trace = np.empty(config.iterations)
    order, pos = rng.permutation(n), 0
    for it in range(1, config.iterations + 1):
        if pos + bs > n:
            order, pos = rng.permutation(n), 0
        idx = order[pos : pos + bs]
        pos += bs
        loss, grads = loss_and_grads(params, arch, x_all[idx], f_all[idx], y_all[idx])
        if not np.isfinite(loss):
            raise NonFiniteLoss(it, loss)
        adam_step(params, grads, state, config, it)
        trace[it - 1] = loss
        if callback is not None:
            callback(it, loss)
    return CnnModel(arch, params, dtype=dtype), trace
