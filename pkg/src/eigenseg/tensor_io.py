"""Bit-exact I/O for feature maps, label masks, saliency maps and eigenvector images.

Two container formats are used:

FMAP (dense feature tensor, little-endian):
    bytes 0-3   magic ``46 4D 41 50`` ("FMAP")
    u32         version, currently 1
    u32 u32 u32 h, w, d
    u32         dtype code, 0 = IEEE-754 binary32
    payload     h*w*d float32 values, row-major (row, col, channel)

PGM (masks, saliency, eigenvector images): binary "P5" with ASCII
width/height/maxval header; samples are 1 byte up to maxval 255 and
2 bytes big-endian above that, per the netpbm convention.

All readers are strict: any malformed header field or payload length
mismatch raises a typed error instead of guessing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, TruncationError

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1
FMAP_DTYPE_F32 = 0
_FMAP_HEADER = struct.Struct("<4s5I")

PGM_MAX_LABEL = 65535


@dataclass(frozen=True)
class FeatureMap:
    """Dense h*w*d feature tensor for one frame.

    ``data`` is float32 with shape (h, w, d); treated as immutable after
    construction and safe to share across threads.
    """

    height: int
    width: int
    channels: int
    data: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        if self.height < 2 or self.width < 2 or self.channels < 1:
            raise DataError(
                f"feature grid must be at least 2x2x1, got "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.data.shape != (self.height, self.width, self.channels):
            raise DataError(
                f"data shape {self.data.shape} does not match declared "
                f"{(self.height, self.width, self.channels)}"
            )
        if self.data.dtype != np.float32:
            raise DataError(f"feature data must be float32, got {self.data.dtype}")
        if not np.isfinite(self.data).all():
            raise DataError("feature data contains NaN or Inf")

    @property
    def num_pixels(self) -> int:
        return self.height * self.width

    def as_matrix(self) -> np.ndarray:
        """Pixels-by-channels view, one row per pixel in row-major order."""
        return self.data.reshape(self.num_pixels, self.channels)


@dataclass(frozen=True)
class LabelMask:
    """Integer-labeled segmentation grid."""

    height: int
    width: int
    labels: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DataError(f"mask dims must be positive, got {self.height}x{self.width}")
        if self.labels.shape != (self.height, self.width):
            raise DataError(
                f"labels shape {self.labels.shape} does not match "
                f"{(self.height, self.width)}"
            )
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise DataError(f"labels must be integers, got {self.labels.dtype}")
        if self.labels.min() < 0:
            raise DataError("labels must be non-negative")
        if self.labels.max() > PGM_MAX_LABEL:
            raise DataError(f"labels must be < {PGM_MAX_LABEL + 1}")

    @property
    def num_labels(self) -> int:
        """Count of distinct labels present."""
        return int(np.unique(self.labels).size)


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel saliency in [0, 1]; all zeros when the source signal is constant."""

    height: int
    width: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise DataError(
                f"values shape {self.values.shape} does not match "
                f"{(self.height, self.width)}"
            )
        if not np.isfinite(self.values).all():
            raise DataError("saliency contains NaN or Inf")
        vmin, vmax = float(self.values.min()), float(self.values.max())
        if vmin < 0.0 or vmax > 1.0:
            raise DataError(f"saliency out of [0, 1]: min={vmin}, max={vmax}")
        if vmax != vmin and (vmin != 0.0 or vmax != 1.0):
            raise DataError("non-constant saliency must span [0, 1] exactly")
        if vmax == vmin and vmin != 0.0:
            raise DataError(f"constant saliency must be all zeros, got {vmin}")


def read_feature_map(path) -> FeatureMap:
    """Read an FMAP file. ``source_id`` is derived from the file stem."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _FMAP_HEADER.size:
        raise TruncationError(f"{path.name}: file shorter than the FMAP header")
    magic, version, h, w, d, dtype_code = _FMAP_HEADER.unpack_from(raw)
    if magic != FMAP_MAGIC:
        raise FormatError(f"{path.name}: bad magic {magic!r}, expected {FMAP_MAGIC!r}")
    if version != FMAP_VERSION:
        raise FormatError(f"{path.name}: unsupported FMAP version {version}")
    if dtype_code != FMAP_DTYPE_F32:
        raise FormatError(f"{path.name}: unknown dtype code {dtype_code}")
    if h < 2 or w < 2 or d < 1:
        raise FormatError(f"{path.name}: invalid dims {h}x{w}x{d}")
    expected = h * w * d * 4
    payload = raw[_FMAP_HEADER.size:]
    if len(payload) != expected:
        raise TruncationError(
            f"{path.name}: declared {h}x{w}x{d} needs {expected} payload bytes, "
            f"found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, d)
    if not np.isfinite(data).all():
        raise DataError(f"{path.name}: payload contains NaN or Inf")
    # native-endian float32 copy so downstream math never sees byte-swapped views
    return FeatureMap(h, w, d, data.astype(np.float32), source_id=path.stem)


def write_feature_map(fm: FeatureMap, path) -> None:
    header = _FMAP_HEADER.pack(
        FMAP_MAGIC, FMAP_VERSION, fm.height, fm.width, fm.channels, FMAP_DTYPE_F32
    )
    Path(path).write_bytes(header + fm.data.astype("<f4").tobytes())


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Scan ``count`` whitespace-separated header tokens, honoring # comments."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data):
            ch = data[pos:pos + 1]
            if ch == b"#":
                nl = data.find(b"\n", pos)
                if nl < 0:
                    raise FormatError("unterminated comment in PGM header")
                pos = nl + 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("PGM header ended before all fields were read")
        tokens.append(data[start:pos])
    return tokens, pos


def _read_pgm(path) -> tuple[int, int, int, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] != b"P5":
        kind = raw[:2].decode("ascii", "replace")
        raise FormatError(f"{path.name}: not a binary P5 PGM (magic {kind!r})")
    tokens, pos = _pgm_tokens(raw[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"{path.name}: non-numeric PGM header field") from exc
    if width < 1 or height < 1:
        raise FormatError(f"{path.name}: invalid PGM dims {width}x{height}")
    if not 0 < maxval <= PGM_MAX_LABEL:
        raise FormatError(f"{path.name}: PGM maxval {maxval} out of range")
    body = raw[2 + pos:]
    if not body[:1].isspace():
        raise FormatError(f"{path.name}: missing whitespace after PGM maxval")
    body = body[1:]
    itemsize = 1 if maxval <= 255 else 2
    expected = width * height * itemsize
    if len(body) != expected:
        raise TruncationError(
            f"{path.name}: {width}x{height} at maxval {maxval} needs {expected} "
            f"raster bytes, found {len(body)}"
        )
    dtype = np.uint8 if itemsize == 1 else ">u2"
    samples = np.frombuffer(body, dtype=dtype).reshape(height, width)
    if samples.max(initial=0) > maxval:
        raise DataError(f"{path.name}: sample exceeds declared maxval {maxval}")
    return width, height, maxval, samples.astype(np.int32)


def _write_pgm(samples: np.ndarray, maxval: int, path) -> None:
    height, width = samples.shape
    header = b"P5\n%d %d\n%d\n" % (width, height, maxval)
    if maxval <= 255:
        body = samples.astype(np.uint8).tobytes()
    else:
        body = samples.astype(">u2").tobytes()
    Path(path).write_bytes(header + body)


def read_mask(path) -> LabelMask:
    width, height, _maxval, samples = _read_pgm(path)
    return LabelMask(height, width, samples)


def write_mask(mask: LabelMask, path) -> None:
    """Write labels as P5 PGM; 8-bit when all labels fit, 16-bit otherwise."""
    maxval = 255 if int(mask.labels.max()) <= 255 else PGM_MAX_LABEL
    _write_pgm(mask.labels, maxval, path)


def write_saliency(sal: SaliencyMap, path) -> None:
    """Quantize [0, 1] saliency onto a 16-bit grayscale PGM."""
    samples = np.rint(sal.values * PGM_MAX_LABEL).astype(np.int64)
    _write_pgm(samples, PGM_MAX_LABEL, path)


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Affine map onto [0, 1]; constant input maps to all zeros."""
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax == vmin:
        return np.zeros_like(values, dtype=np.float64)
    return (values.astype(np.float64) - vmin) / (vmax - vmin)


def export_eigenvector_image(v: np.ndarray, height: int, width: int, path) -> None:
    """Render one eigenvector as a min-max normalized 16-bit grayscale PGM."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != height * width:
        raise DataError(
            f"eigenvector length {v.size} does not match grid {height}x{width}"
        )
    if not np.isfinite(v).all():
        raise DataError("eigenvector contains NaN or Inf")
    unit = minmax_normalize(v.reshape(height, width))
    samples = np.rint(unit * PGM_MAX_LABEL).astype(np.int64)
    _write_pgm(samples, PGM_MAX_LABEL, path)
