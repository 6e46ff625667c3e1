"""Masked depth and disparity maps shared by every module.

A map is a 2-D float64 array plus a boolean validity mask of the same
shape. Geometry operations additionally require the array to sit on an
equirectangular grid (``W == 2 * H``); losses and metrics accept any shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ErpGrid:
    height: int
    width: int

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError(f"grid dimensions must be positive, got {self.height}x{self.width}")
        if self.width != 2 * self.height:
            raise ValueError(f"ERP grid needs W == 2H, got H={self.height}, W={self.width}")

    @classmethod
    def from_height(cls, height: int) -> "ErpGrid":
        return cls(int(height), 2 * int(height))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.height * self.width


def _prepare(values, mask) -> tuple[np.ndarray, np.ndarray]:
    values = np.array(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"maps are 2-D, got shape {values.shape}")
    if mask is None:
        mask = np.isfinite(values)
    else:
        mask = np.array(mask, dtype=bool)
        if mask.shape != values.shape:
            raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
    values.setflags(write=False)
    mask.setflags(write=False)
    return values, mask


class _MaskedMap:
    values: np.ndarray
    mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def grid(self) -> ErpGrid:
        return ErpGrid(*self.values.shape)

    @property
    def n_valid(self) -> int:
        return int(self.mask.sum())

    def valid_values(self) -> np.ndarray:
        return self.values[self.mask]

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Copy of the values with invalid pixels replaced by ``fill``."""
        return np.where(self.mask, self.values, fill)

    def roll_cols(self, k: int):
        return type(self)(np.roll(self.values, k, axis=1), np.roll(self.mask, k, axis=1))


@dataclass(frozen=True, eq=False)
class DepthMap(_MaskedMap):
    """Euclidean ray distance in meters. Valid entries are finite and > 0."""

    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        values, mask = _prepare(self.values, self.mask)
        if self.mask is None:
            mask = mask & (np.nan_to_num(values, nan=0.0) > 0)
            mask.setflags(write=False)
        bad = mask & ~(np.isfinite(values) & (values > 0))
        if bad.any():
            raise ValueError(f"{int(bad.sum())} valid depth entries are non-finite or non-positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)


@dataclass(frozen=True, eq=False)
class DisparityMap(_MaskedMap):
    """Inverse depth in 1/meters. Zero and negative entries are allowed."""

    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        values, mask = _prepare(self.values, self.mask)
        bad = mask & ~np.isfinite(values)
        if bad.any():
            raise ValueError(f"{int(bad.sum())} valid disparity entries are non-finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)


def as_masked(x, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(values, mask)`` for a map or a plain array.

    Plain arrays of any shape are accepted; their default mask is
    ``isfinite``. An explicit ``mask`` is intersected with the map's own.
    """
    if isinstance(x, _MaskedMap):
        values, own = x.values, x.mask
    else:
        values = np.asarray(x, dtype=np.float64)
        own = np.isfinite(values)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != values.shape:
            raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
        own = own & mask
    return values, own
