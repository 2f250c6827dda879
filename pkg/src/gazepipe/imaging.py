"""8-bit grayscale image primitives.

Images are ``(height, width)`` uint8 arrays, row-major. Pixel ``(u, v)`` is
column ``u``, row ``v``, with its centre at integer coordinates.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import kernels
from .errors import ParseError, SingularWarp


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def perspective_warp(src: np.ndarray, W, out_w: int, out_h: int) -> tuple[np.ndarray, float]:
    """Warp ``src`` by the homography ``W`` (source px -> destination px).

    Each destination pixel is mapped through ``W^-1`` and sampled bilinearly.
    Samples falling outside the source are set to 0. Returns the warped image
    and the fraction of destination pixels that landed inside the source.
    """
    W = np.asarray(W, dtype=float)
    if abs(np.linalg.det(W)) < 1e-12:
        raise SingularWarp(f"|det W| = {abs(np.linalg.det(W)):.3e}")
    src = np.ascontiguousarray(src, dtype=np.uint8)
    inv = np.ascontiguousarray(np.linalg.inv(W))
    values, mask = kernels.warp_bilinear(src, inv, int(out_w), int(out_h))
    coverage = float(mask.mean()) if mask.size else 0.0
    return _to_uint8(values), coverage


def equalize_histogram(img: np.ndarray) -> np.ndarray:
    """out = round(255 * cdf(v)), cdf(v) = fraction of pixels <= v."""
    img = np.asarray(img, dtype=np.uint8)
    counts = np.bincount(img.ravel(), minlength=256)
    cdf = np.cumsum(counts) / img.size
    lut = np.rint(255.0 * cdf).astype(np.uint8)
    return lut[img]


def _cubic_weights(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic kernel weights for taps at offsets -1, 0, 1, 2."""
    d = np.stack([1.0 + t, t, 1.0 - t, 2.0 - t], axis=-1)
    w = np.where(
        d <= 1.0,
        (a + 2.0) * d**3 - (a + 3.0) * d**2 + 1.0,
        a * d**3 - 5.0 * a * d**2 + 8.0 * a * d - 4.0 * a,
    )
    return w


def _resample_matrix(n_in: int, n_out: int, method: str) -> np.ndarray:
    """(n_out, n_in) interpolation matrix, half-pixel aligned, edge-clamped."""
    if n_in == n_out:
        return np.eye(n_in)
    scale = n_in / n_out
    pos = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(pos).astype(int)
    t = pos - base
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if method == "bicubic":
        w = _cubic_weights(t)
        offsets = (-1, 0, 1, 2)
    elif method == "bilinear":
        w = np.stack([1.0 - t, t], axis=-1)
        offsets = (0, 1)
    else:
        raise ValueError(f"unknown resize method {method!r}")
    for j, off in enumerate(offsets):
        idx = np.clip(base + off, 0, n_in - 1)
        np.add.at(mat, (rows, idx), w[:, j])
    return mat


def resize(img: np.ndarray, w: int, h: int, method: str = "bicubic") -> np.ndarray:
    """Separable resampling; bicubic uses the Catmull-Rom kernel (a = -0.5)."""
    if w < 1 or h < 1:
        raise ValueError("target size must be at least 1x1")
    img = np.asarray(img, dtype=np.uint8)
    if img.shape == (h, w):
        return img.copy()
    ry = _resample_matrix(img.shape[0], h, method)
    rx = _resample_matrix(img.shape[1], w, method)
    return _to_uint8(ry @ img.astype(float) @ rx.T)


def resize_batch(imgs: np.ndarray, w: int, h: int, method: str = "bicubic") -> np.ndarray:
    """Resize a stack of (N, H, W) images with shared interpolation matrices."""
    imgs = np.asarray(imgs, dtype=np.uint8)
    if imgs.shape[1:] == (h, w):
        return imgs.copy()
    ry = _resample_matrix(imgs.shape[1], h, method)
    rx = _resample_matrix(imgs.shape[2], w, method)
    out = np.einsum("ij,njk,lk->nil", ry, imgs.astype(float), rx, optimize=True)
    return _to_uint8(out)


def to_grayscale(rgb) -> np.ndarray:
    """Luma 0.299 R + 0.587 G + 0.114 B, rounded; accepts (..., 3)."""
    rgb = np.asarray(rgb, dtype=float)
    return _to_uint8(rgb @ np.array([0.299, 0.587, 0.114]))


# ---------------------------------------------------------------------------
# binary PGM (P5, maxval 255)


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def _pgm_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte before the raster


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ParseError(f"not a binary PGM (magic {tokens[0]!r})", path)
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ParseError(f"only 8-bit PGM supported (maxval {maxval})", path)
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise ParseError("truncated PGM raster", path)
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def pgm_size(path) -> tuple[int, int]:
    """(width, height) from a PGM header without reading the raster."""
    with open(path, "rb") as fh:
        head = fh.read(256)
    tokens, _ = _pgm_tokens(head, 3)
    return int(tokens[1]), int(tokens[2])
