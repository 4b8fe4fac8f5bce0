"""Writer for the FMAP interchange format consumed by the segmentation toolkit.

Little-endian: magic "FMAP", u32 version=1, u32 h, u32 w, u32 d, u32 dtype
code (0 = float32), then h*w*d float32 values row-major (row, col, channel).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4s5I")
MAGIC = b"FMAP"
VERSION = 1
DTYPE_F32 = 0


def write_fmap(features_hwd: np.ndarray, path) -> None:
    if features_hwd.ndim != 3:
        raise ValueError(f"expected (h, w, d) features, got shape {features_hwd.shape}")
    h, w, d = features_hwd.shape
    if h < 2 or w < 2 or d < 1:
        raise ValueError(f"feature grid {h}x{w}x{d} below the 2x2x1 minimum")
    if not np.isfinite(features_hwd).all():
        raise ValueError("features contain NaN or Inf")
    header = _HEADER.pack(MAGIC, VERSION, h, w, d, DTYPE_F32)
    Path(path).write_bytes(header + features_hwd.astype("<f4").tobytes())
