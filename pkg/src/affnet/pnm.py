"""Minimal binary PGM/PPM (P5/P6) reading and writing."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import FormatError

_HEADER = re.compile(rb"\A(P[56])\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def to_u8(plane: np.ndarray) -> np.ndarray:
    """Min-max normalize one plane to 0..255 (a constant plane maps to 0)."""
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = plane.min(), plane.max()
    if hi <= lo:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.round((plane - lo) / (hi - lo) * 255).astype(np.uint8)


def write_pgm(path, plane: np.ndarray) -> None:
    img = to_u8(plane)
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_pnm(path) -> np.ndarray:
    """``uint8`` array ``[H, W]`` for P5 or ``[3, H, W]`` for P6."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read image: {exc.strerror}", path) from exc
    m = _HEADER.match(data)
    if not m:
        raise FormatError("not a binary PGM/PPM file", path)
    kind, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise FormatError(f"only 8-bit images are supported (maxval {maxval})", path)
    planes = 3 if kind == b"P6" else 1
    body = data[m.end():]
    if len(body) != w * h * planes:
        raise FormatError(f"expected {w * h * planes} pixel bytes, found {len(body)}", path)
    arr = np.frombuffer(body, dtype=np.uint8)
    if planes == 1:
        return arr.reshape(h, w).copy()
    return arr.reshape(h, w, 3).transpose(2, 0, 1).copy()
