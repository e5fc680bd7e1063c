"""8-bit binary PPM (P6) frame I/O."""
from __future__ import annotations

import re

import numpy as np

from .core import Frame

_HEADER = re.compile(rb"P6\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s")


def read_ppm(path) -> np.ndarray:
    """Pixels of a P6 file as an H x W x 3 float array in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    m = _HEADER.match(data)
    if m is None:
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    w, h, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    body = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=m.end())
    return body.reshape(h, w, 3).astype(float) / maxval


def write_ppm(path, pixels: np.ndarray) -> None:
    px = np.asarray(pixels, dtype=float)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError("PPM output needs an H x W x 3 array")
    h, w = px.shape[:2]
    body = np.round(np.clip(px, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(body.tobytes())


def load_frame(path, index: int, fps: float = 25.0) -> Frame:
    return Frame(index, index / fps, read_ppm(path))
