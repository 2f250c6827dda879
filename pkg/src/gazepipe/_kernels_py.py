"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, stride, pad):
    n_img, n_ch, h, w = x.shape
    oh, ow = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    # (N, C, OH, OW, kh, kw) -> (N, OH, OW, C, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n_img * oh * ow, n_ch * kh * kw
    )


def col2im(cols, x_shape, kh, kw, stride, pad):
    n_img, n_ch, h, w = x_shape
    oh, ow = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)
    c6 = cols.reshape(n_img, oh, ow, n_ch, kh, kw)
    dx = np.zeros((n_img, n_ch, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ky in range(kh):
        for kx in range(kw):
            dx[:, :, ky : ky + stride * oh : stride, kx : kx + stride * ow : stride] += (
                c6[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
            )
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(dx)


def maxpool_forward(x, size, stride):
    n_img, n_ch, h, w = x.shape
    oh, ow = (h - size) // stride + 1, (w - size) // stride + 1
    win = sliding_window_view(x, (size, size), axis=(2, 3))
    win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    flat = win.reshape(n_img, n_ch, oh, ow, size * size)
    local = np.argmax(flat, axis=-1)  # first maximum in scan order
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    ky, kx = np.divmod(local, size)
    oy = np.arange(oh)[:, None] * stride
    ox = np.arange(ow)[None, :] * stride
    arg = (oy + ky) * w + (ox + kx)
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(dout, arg, h, w):
    n_img, n_ch = dout.shape[:2]
    base = (np.arange(n_img * n_ch, dtype=np.int64) * (h * w)).reshape(n_img, n_ch, 1, 1)
    flat = np.bincount(
        (arg + base).ravel(), weights=dout.ravel().astype(np.float64), minlength=n_img * n_ch * h * w
    )
    return flat.astype(dout.dtype, copy=False).reshape(n_img, n_ch, h, w)


def warp_bilinear(src, inv, out_w, out_h):
    h, w = src.shape
    v, u = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    px = inv[0, 0] * u + inv[0, 1] * v + inv[0, 2]
    py = inv[1, 0] * u + inv[1, 1] * v + inv[1, 2]
    pz = inv[2, 0] * u + inv[2, 1] * v + inv[2, 2]
    front = pz > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(front, px / np.where(front, pz, 1.0), -1.0)
        y = np.where(front, py / np.where(front, pz, 1.0), -1.0)
    mask = front & (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xs, ys = x[mask], y[mask]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.minimum(x0, max(w - 2, 0))
    y0 = np.minimum(y0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    s = src.astype(np.float64)
    a, b, c, d = s[y0, x0], s[y0, x1], s[y1, x0], s[y1, x1]
    out = np.zeros((out_h, out_w), dtype=np.float64)
    out[mask] = (
        (1.0 - fx) * (1.0 - fy) * a + fx * (1.0 - fy) * b + (1.0 - fx) * fy * c + fx * fy * d
    )
    return out, mask.astype(np.uint8)


# Moments below this are flushed to zero: they cannot move a weight measurably
# and would otherwise decay into subnormals, which are very slow on x86.
MOMENT_FLOOR = 1e-30


def adam_update(w, g, m, v, lr, beta1, beta2, eps, corr1, corr2):
    dt = w.dtype.type
    b1, b2 = dt(beta1), dt(beta2)
    ob1, ob2 = dt(1.0 - beta1), dt(1.0 - beta2)
    m *= b1
    m += ob1 * g
    v *= b2
    v += ob2 * (g * g)
    m[np.abs(m) < dt(MOMENT_FLOOR)] = 0
    v[v < dt(MOMENT_FLOOR)] = 0
    step = (m / dt(corr1)) / (np.sqrt(v / dt(corr2)) + dt(eps))
    step *= dt(lr)
    w -= step
