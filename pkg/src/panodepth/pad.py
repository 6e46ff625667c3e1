"""Circular padding for ERP feature maps and a reference convolution.

Arrays are H x W or H x W x C; the first two axes are always (row, col).
"""

from __future__ import annotations

import enum

import numpy as np


class Padding(str, enum.Enum):
    ZERO = "zero"
    CIRCULAR = "circular"


def circular_pad(x, p: int) -> np.ndarray:
    """Pad an ERP tensor by ``p`` pixels on every side with its spherical neighbours.

    Vertical phase: the ``p`` rows nearest each pole are flipped and rolled
    by ``W/2`` columns, so pad row ``i`` above the image is ``x[p-1-i]``
    seen from the opposite meridian (and symmetrically at the bottom).
    Horizontal phase: the vertically padded array wraps left/right, which
    also fills the corners.

    >>> circular_pad(np.array([[1, 2, 3, 4], [5, 6, 7, 8]]), 1)[0].tolist()
    [2, 3, 4, 1, 2, 3]
    """
    x = np.asarray(x)
    if x.ndim not in (2, 3):
        raise ValueError(f"expected H x W or H x W x C, got shape {x.shape}")
    h, w = x.shape[:2]
    if p < 1:
        raise ValueError("pad width must be >= 1")
    if p > h:
        raise ValueError(f"pad width {p} exceeds height {h}")
    if w % 2:
        raise ValueError(f"width must be even for the half-width roll, got {w}")
    half = w // 2
    top = np.roll(x[:p][::-1], -half, axis=1)
    bottom = np.roll(x[h - p:][::-1], -half, axis=1)
    mid = np.concatenate([top, x, bottom], axis=0)
    return np.concatenate([mid[:, -p:], mid, mid[:, :p]], axis=1)


def zero_pad(x, p: int) -> np.ndarray:
    x = np.asarray(x)
    widths = [(p, p), (p, p)] + [(0, 0)] * (x.ndim - 2)
    return np.pad(x, widths)


def conv2d(x, kernel, padding="zero") -> np.ndarray:
    """Stride-1 cross-correlation with 'same' output size.

    ``kernel`` is K x K x C_in x C_out (a K x K kernel is taken as single
    channel in and out). The input may be H x W (one channel) or H x W x C.
    """
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[..., None]
    if kernel.ndim == 2:
        kernel = kernel[:, :, None, None]
    k = kernel.shape[0]
    if kernel.ndim != 4 or kernel.shape[1] != k or k % 2 == 0:
        raise ValueError(f"kernel must be K x K x C_in x C_out with odd K, got {kernel.shape}")
    if kernel.shape[2] != x.shape[2]:
        raise ValueError(f"kernel expects {kernel.shape[2]} channels, input has {x.shape[2]}")
    p = (k - 1) // 2
    padding = Padding(padding)
    if p == 0:
        xp = x
    elif padding is Padding.CIRCULAR:
        xp = circular_pad(x, p)
    else:
        xp = zero_pad(x, p)
    h, w = x.shape[:2]
    out = np.zeros((h, w, kernel.shape[3]))
    for i in range(k):
        for j in range(k):
            out += xp[i:i + h, j:j + w] @ kernel[i, j]
    return out[..., 0] if squeeze and kernel.shape[3] == 1 else out


def box_kernel(size: int = 3, channels: int = 1) -> np.ndarray:
    """Normalized averaging kernel applied per channel."""
    kernel = np.zeros((size, size, channels, channels))
    for c in range(channels):
        kernel[:, :, c, c] = 1.0 / size**2
    return kernel


def seam_discrepancy(x) -> float:
    """Mean |x[:, 0] - x[:, W-1]| over rows and channels (the ERP seam)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] < 2:
        raise ValueError("need at least two columns")
    return float(np.mean(np.abs(x[:, 0] - x[:, -1])))
