# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: im2col/col2im, max pooling, bilinear warp sampling, Adam.

Every function here has a drop-in twin in ``_kernels_py`` with the same
signature and output layout.
"""
import numpy as np

from libc.math cimport fabs, floor, sqrt

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n_img = x.shape[0], n_ch = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n_img * oh * ow, n_ch * kh * kw), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t n, oy, ox, c, ky, kx, iy, ix, row, col
    with nogil:
        for n in range(n_img):
            for oy in range(oh):
                for ox in range(ow):
                    row = (n * oh + oy) * ow + ox
                    col = 0
                    for c in range(n_ch):
                        for ky in range(kh):
                            iy = oy * stride - pad + ky
                            for kx in range(kw):
                                ix = ox * stride - pad + kx
                                if 0 <= iy < h and 0 <= ix < w:
                                    out[row, col] = x[n, c, iy, ix]
                                else:
                                    out[row, col] = 0
                                col += 1
    return out_arr


def col2im(real[:, ::1] cols, tuple x_shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n_img = x_shape[0], n_ch = x_shape[1]
    cdef Py_ssize_t h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    dx_arr = np.zeros((n_img, n_ch, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t n, oy, ox, c, ky, kx, iy, ix, row, col
    with nogil:
        for n in range(n_img):
            for oy in range(oh):
                for ox in range(ow):
                    row = (n * oh + oy) * ow + ox
                    col = 0
                    for c in range(n_ch):
                        for ky in range(kh):
                            iy = oy * stride - pad + ky
                            for kx in range(kw):
                                ix = ox * stride - pad + kx
                                if 0 <= iy < h and 0 <= ix < w:
                                    dx[n, c, iy, ix] += cols[row, col]
                                col += 1
    return dx_arr


def maxpool_forward(real[:, :, :, ::1] x, int size, int stride):
    cdef Py_ssize_t n_img = x.shape[0], n_ch = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - size) // stride + 1
    cdef Py_ssize_t ow = (w - size) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n_img, n_ch, oh, ow), dtype=dtype)
    arg_arr = np.empty((n_img, n_ch, oh, ow), dtype=np.int64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t n, c, oy, ox, ky, kx, iy, ix, best_idx
    cdef real best, val
    with nogil:
        for n in range(n_img):
            for c in range(n_ch):
                for oy in range(oh):
                    for ox in range(ow):
                        iy = oy * stride
                        ix = ox * stride
                        best = x[n, c, iy, ix]
                        best_idx = iy * w + ix
                        for ky in range(size):
                            for kx in range(size):
                                val = x[n, c, iy + ky, ix + kx]
                                # strict > keeps the first maximum in scan order
                                if val > best:
                                    best = val
                                    best_idx = (iy + ky) * w + ix + kx
                        out[n, c, oy, ox] = best
                        arg[n, c, oy, ox] = best_idx
    return out_arr, arg_arr


def maxpool_backward(real[:, :, :, ::1] dout, long long[:, :, :, ::1] arg, int h, int w):
    cdef Py_ssize_t n_img = dout.shape[0], n_ch = dout.shape[1]
    cdef Py_ssize_t oh = dout.shape[2], ow = dout.shape[3]
    dtype = np.float32 if real is float else np.float64
    dx_arr = np.zeros((n_img, n_ch, h * w), dtype=dtype)
    cdef real[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t n, c, oy, ox
    with nogil:
        for n in range(n_img):
            for c in range(n_ch):
                for oy in range(oh):
                    for ox in range(ow):
                        dx[n, c, arg[n, c, oy, ox]] += dout[n, c, oy, ox]
    return dx_arr.reshape(n_img, n_ch, h, w)


def warp_bilinear(const unsigned char[:, ::1] src, double[:, ::1] inv, int out_w, int out_h):
    """Sample ``src`` at inv @ (u, v, 1) for every destination pixel.

    Returns float64 samples and a uint8 mask of in-bounds destinations.
    """
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    out_arr = np.zeros((out_h, out_w), dtype=np.float64)
    mask_arr = np.zeros((out_h, out_w), dtype=np.uint8)
    cdef double[:, ::1] out = out_arr
    cdef unsigned char[:, ::1] mask = mask_arr
    cdef Py_ssize_t u, v, x0, y0, x1, y1
    cdef double px, py, pz, x, y, fx, fy, a, b, c, d
    with nogil:
        for v in range(out_h):
            for u in range(out_w):
                px = inv[0, 0] * u + inv[0, 1] * v + inv[0, 2]
                py = inv[1, 0] * u + inv[1, 1] * v + inv[1, 2]
                pz = inv[2, 0] * u + inv[2, 1] * v + inv[2, 2]
                if pz <= 0:
                    continue
                x = px / pz
                y = py / pz
                if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                    continue
                x0 = <Py_ssize_t>floor(x)
                y0 = <Py_ssize_t>floor(y)
                if x0 > w - 2:
                    x0 = w - 2 if w >= 2 else 0
                if y0 > h - 2:
                    y0 = h - 2 if h >= 2 else 0
                x1 = x0 + 1 if x0 + 1 < w else x0
                y1 = y0 + 1 if y0 + 1 < h else y0
                fx = x - x0
                fy = y - y0
                a = src[y0, x0]
                b = src[y0, x1]
                c = src[y1, x0]
                d = src[y1, x1]
                out[v, u] = ((1.0 - fx) * (1.0 - fy) * a + fx * (1.0 - fy) * b
                             + (1.0 - fx) * fy * c + fx * fy * d)
                mask[v, u] = 1
    return out_arr, mask_arr


def adam_update(real[::1] w, real[::1] g, real[::1] m, real[::1] v,
                double lr, double beta1, double beta2, double eps,
                double corr1, double corr2):
    """In-place bias-corrected Adam step on flat parameter/state buffers."""
    cdef Py_ssize_t i, n = w.shape[0]
    cdef real b1 = <real>beta1, b2 = <real>beta2
    cdef real ob1 = <real>(1.0 - beta1), ob2 = <real>(1.0 - beta2)
    cdef real c1 = <real>corr1, c2 = <real>corr2, step = <real>lr, e = <real>eps
    cdef real gi, mi, vi
    cdef real floor_ = <real>1e-30  # subnormal guard, see _kernels_py.MOMENT_FLOOR
    with nogil:
        for i in range(n):
            gi = g[i]
            mi = b1 * m[i] + ob1 * gi
            vi = b2 * v[i] + ob2 * (gi * gi)
            if fabs(mi) < floor_:
                mi = 0
            if vi < floor_:
                vi = 0
            m[i] = mi
            v[i] = vi
            w[i] = w[i] - (mi / c1) / (<real>sqrt(vi / c2) + e) * step
