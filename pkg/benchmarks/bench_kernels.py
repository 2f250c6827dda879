"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes match one training step of the default 60x36 network at batch 8 and
one 60x36 normalization warp from a 640x480 frame.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from gazepipe import _kernels_py

try:
    from gazepipe import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(rng):
    x = rng.random((8, 1, 36, 60), dtype=np.float32)
    a1 = rng.random((8, 20, 32, 56), dtype=np.float32)
    p1 = rng.random((8, 20, 16, 28), dtype=np.float32)
    cols2 = rng.random((8 * 12 * 24, 20 * 25), dtype=np.float32)
    a2 = rng.random((8, 50, 12, 24), dtype=np.float32)
    frame = rng.integers(0, 256, (480, 640), dtype=np.uint8)
    inv = np.array([[1.2, 0.05, 280.0], [-0.04, 1.2, 200.0], [0.0, 0.0, 1.0]])
    n = 50 * 20 * 25 + 500 * (50 * 6 * 12 + 2)
    w, g = rng.random(n, dtype=np.float32), rng.random(n, dtype=np.float32)
    m, v = np.zeros(n, np.float32), np.zeros(n, np.float32)

    def pool_bwd(k):
        out, arg = k.maxpool_forward(a2, 2, 2)
        return lambda: k.maxpool_backward(np.ascontiguousarray(out), arg, 12, 24)

    return {
        "im2col conv1": lambda k: (lambda: k.im2col(x, 5, 5, 1, 0)),
        "im2col conv2": lambda k: (lambda: k.im2col(p1, 5, 5, 1, 0)),
        "col2im conv2": lambda k: (lambda: k.col2im(cols2, p1.shape, 5, 5, 1, 0)),
        "maxpool fwd": lambda k: (lambda: k.maxpool_forward(a1, 2, 2)),
        "maxpool bwd": pool_bwd,
        "warp 60x36": lambda k: (lambda: k.warp_bilinear(frame, inv, 60, 36)),
        "adam (full net)": lambda k: (lambda: k.adam_update(w, g, m, v, 1e-5, 0.9, 0.95, 1e-8, 0.1, 0.05)),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = [("python", _kernels_py)] + ([("cython", _compiled)] if _compiled else [])
    print(f"{'kernel':<18}" + "".join(f"{name + ' ms':>12}" for name, _ in backends) + f"{'speedup':>10}")
    for label, make in cases(np.random.default_rng(0)).items():
        times = []
        for _, mod in backends:
            fn = make(mod)
            fn()
            times.append(min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3)
        speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else f"{'n/a':>10}"
        print(f"{label:<18}" + "".join(f"{t:>12.3f}" for t in times) + speed)
    if _compiled is None:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
