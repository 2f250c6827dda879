"""Model checkpoint files.

Layout: an ASCII header of newline-terminated lines, then a binary block.

    gazepipe-model 1
    kind=<cnn|knn|linear|mean>
    width=<int>
    height=<int>
    features.use_head_pose=<0|1>
    features.use_pupil=<0|1>
    model.<key>=<value>          model-specific metadata (architecture, dtype, k, ...)
    config.<key>=<value>         training configuration echo, informational only
    tensor <name> <d0>x<d1>...   one line per tensor, in block order
    end

The block holds every tensor as little-endian float64, C order, concatenated
in the order of the ``tensor`` lines. float32 parameters widen to float64
exactly and are narrowed back on load, so reloaded models predict bit-for-bit
identically.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ParseError
from .estimator import MODEL_CLASSES, Estimator, EstimatorConfig, FeatureSpec

MAGIC = "gazepipe-model 1"


def save_estimator(path, est: Estimator, config: EstimatorConfig | None = None) -> None:
    meta, tensors = est.model.state()
    lines = [
        MAGIC,
        f"kind={est.kind}",
        f"width={est.width}",
        f"height={est.height}",
        f"features.use_head_pose={int(est.features.use_head_pose)}",
        f"features.use_pupil={int(est.features.use_pupil)}",
    ]
    lines += [f"model.{k}={v}" for k, v in meta.items()]
    if config is not None:
        lines += [f"config.{k}={v}" for k, v in config.echo().items()]
    blobs = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        lines.append(f"tensor {name} " + "x".join(str(d) for d in arr.shape))
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for b in blobs:
            fh.write(b)


def load_estimator(path) -> Estimator:
    data = Path(path).read_bytes()
    header, pos, lines = {}, 0, []
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ParseError("checkpoint header has no 'end' line", path)
        line = data[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if line == "end":
            break
        lines.append(line)
    if not lines or lines[0] != MAGIC:
        raise ParseError("not a gazepipe checkpoint", path, 1)
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for no, line in enumerate(lines[1:], start=2):
        if line.startswith("tensor "):
            parts = line.split(" ")
            if len(parts) != 3:
                raise ParseError(f"malformed tensor line {line!r}", path, no)
            dims = tuple(int(d) for d in parts[2].split("x")) if parts[2] else ()
            shapes.append((parts[1], dims))
        elif "=" in line:
            k, v = line.split("=", 1)
            header[k] = v
        else:
            raise ParseError(f"malformed header line {line!r}", path, no)
    tensors = {}
    for name, dims in shapes:
        nbytes = 8 * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(data):
            raise ParseError(f"truncated tensor block at {name}", path)
        tensors[name] = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=pos).reshape(dims)
        pos += nbytes
    if pos != len(data):
        raise ParseError("trailing bytes after tensor block", path)
    kind = header.get("kind")
    if kind not in MODEL_CLASSES:
        raise ParseError(f"unknown model kind {kind!r}", path)
    meta = {k[6:]: v for k, v in header.items() if k.startswith("model.")}
    model = MODEL_CLASSES[kind].from_state(meta, {k: v.astype(float) for k, v in tensors.items()})
    features = FeatureSpec(
        use_head_pose=header["features.use_head_pose"] == "1",
        use_pupil=header["features.use_pupil"] == "1",
    )
    return Estimator(model, features, int(header["width"]), int(header["height"]))
