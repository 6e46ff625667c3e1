"""Curation of cubemap depth samples stored as 16-bit integers.

Raw values encode depth in units of 1/512 m, with 0 meaning "no depth".
A sample is rejected when its reprojected ERP depth exceeds the overflow
threshold anywhere, or when too few ERP pixels carry depth.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .maps import DepthMap, ErpGrid
from .sphere import CubeDepthFace, Face, cube_zbuffer_to_erp

DEPTH_UNITS_PER_METER = 512
MAX_RAW = np.iinfo(np.uint16).max
OVERFLOW_THRESHOLD = 127.5
MIN_VALID_RATIO = 0.08


class Reason(str, enum.Enum):
    DEPTH_OVERFLOW = "depth_overflow"
    TOO_SPARSE = "too_sparse"
    IO_ERROR = "io_error"


@dataclass(frozen=True)
class EncodedDepth:
    raw: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.raw)
        if raw.ndim != 2:
            raise ValueError(f"encoded depth must be 2-D, got {raw.shape}")
        if raw.dtype != np.uint16:
            if raw.size and (raw.min() < 0 or raw.max() > MAX_RAW or not np.all(raw == np.round(raw))):
                raise ValueError("encoded depth values must be integers in [0, 65535]")
            raw = raw.astype(np.uint16)
        object.__setattr__(self, "raw", raw)

    @property
    def height(self) -> int:
        return self.raw.shape[0]

    @property
    def width(self) -> int:
        return self.raw.shape[1]


@dataclass(frozen=True)
class CurationVerdict:
    accepted: bool
    reasons: list = field(default_factory=list)
    max_depth: float = 0.0
    valid_ratio: float = 0.0

    def to_record(self, sample_id: str) -> dict:
        return {
            "id": sample_id,
            "accepted": self.accepted,
            "reasons": [Reason(r).value for r in self.reasons],
            "max_depth": self.max_depth,
            "valid_ratio": self.valid_ratio,
        }


def _raw(e) -> np.ndarray:
    return e.raw if isinstance(e, EncodedDepth) else EncodedDepth(e).raw


def decode_values(e) -> tuple[np.ndarray, np.ndarray]:
    raw = _raw(e)
    return raw.astype(np.float64) / DEPTH_UNITS_PER_METER, raw != 0


def decode_depth_u16(e) -> DepthMap:
    """Metric depth ``raw / 512``; raw 0 is an invalid pixel."""
    values, mask = decode_values(e)
    return DepthMap(values, mask)


def encode_depth_u16(depth, mask=None) -> np.ndarray:
    """Inverse of :func:`decode_depth_u16`, saturating at 65535 (~128 m).

    Invalid pixels encode as 0. Depths below half a unit would round to
    the 0 sentinel and are stored as 1 instead.
    """
    if isinstance(depth, DepthMap):
        values, mask = depth.values, depth.mask
    else:
        values = np.asarray(depth, dtype=np.float64)
        if mask is None:
            mask = np.isfinite(values) & (np.nan_to_num(values) > 0)
    raw = np.clip(np.rint(np.where(mask, values, 0.0) * DEPTH_UNITS_PER_METER), 1, MAX_RAW)
    return np.where(mask, raw, 0).astype(np.uint16)


def curation_verdict(
    d: DepthMap,
    overflow_threshold: float = OVERFLOW_THRESHOLD,
    min_valid_ratio: float = MIN_VALID_RATIO,
) -> CurationVerdict:
    """Reject when ``max(d) > overflow_threshold`` or ``valid_ratio < min_valid_ratio``.

    Equality on either threshold is accepted. The ratio is taken over all
    pixels of the map.
    """
    valid = d.valid_values()
    max_depth = float(valid.max()) if valid.size else 0.0
    ratio = valid.size / d.values.size if d.values.size else 0.0
    reasons = []
    if max_depth > overflow_threshold:
        reasons.append(Reason.DEPTH_OVERFLOW)
    if ratio < min_valid_ratio:
        reasons.append(Reason.TOO_SPARSE)
    return CurationVerdict(not reasons, reasons, max_depth, ratio)


FaceInput = Union[Mapping, list]


def decode_faces(faces: FaceInput) -> list[CubeDepthFace]:
    """Decode ``{face: raw}`` (or ``[(face, raw), ...]``) into Z-buffer faces."""
    items = faces.items() if isinstance(faces, Mapping) else faces
    out = []
    for name, raw in items:
        values, mask = decode_values(raw)
        out.append(CubeDepthFace(Face(name), values, mask))
    return out


def curate_sample(
    faces: FaceInput,
    grid,
    overflow_threshold: float = OVERFLOW_THRESHOLD,
    min_valid_ratio: float = MIN_VALID_RATIO,
) -> tuple[CurationVerdict, DepthMap]:
    """Decode, reproject to ERP and judge one sample."""
    if not isinstance(grid, ErpGrid):
        grid = ErpGrid(*grid)
    erp = cube_zbuffer_to_erp(decode_faces(faces), grid)
    return curation_verdict(erp, overflow_threshold, min_valid_ratio), erp


def encode_faces(faces) -> dict:
    """``{face name: uint16 raw}`` for Z-buffer faces, the on-disk form."""
    return {Face(f.face).value: encode_depth_u16(f.zbuf, f.mask) for f in faces}
