"""Evaluation alignment protocols and the depth metric suite."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .maps import DepthMap, DisparityMap, ErpGrid, as_masked
from .sphere import depth_to_disparity, disparity_to_depth

DELTA1_THRESHOLD = 1.25
CSV_HEADER = ("id", "absrel", "mae", "rmse", "rmselog", "delta1", "n_valid")


class SingularAlignmentError(ValueError):
    """The alignment normal equations have no unique solution."""


class Protocol(str, enum.Enum):
    SCALE_DISPARITY = "scale_disparity"
    AFFINE_DISPARITY = "affine_disparity"
    AFFINE_DEPTH = "affine_depth"
    NONE = "none"


@dataclass(frozen=True)
class AffineParams:
    scale: float
    shift: float = 0.0

    def apply(self, x):
        return self.scale * np.asarray(x, dtype=np.float64) + self.shift


def _flat(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    m = np.isfinite(pred) & np.isfinite(gt)
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    return pred[m], gt[m]


def lsq_affine(pred, gt, mask=None) -> AffineParams:
    """Least-squares ``scale * pred + shift ~ gt`` via the 2 x 2 normal equations."""
    p, g = _flat(pred, gt, mask)
    n = p.size
    if n < 2:
        raise SingularAlignmentError(f"need at least 2 valid pixels, got {n}")
    # normal equations in centered form: same solution, better conditioned
    pm, gm = p.mean(), g.mean()
    pc = p - pm
    sxx = float(np.dot(pc, pc))
    if np.ptp(p) <= 1e-12 * max(1.0, abs(pm)) or sxx == 0.0:
        raise SingularAlignmentError("prediction is constant on the mask")
    scale = float(np.dot(pc, g - gm)) / sxx
    return AffineParams(scale, float(gm - scale * pm))


def lsq_scale(pred, gt, mask=None) -> AffineParams:
    p, g = _flat(pred, gt, mask)
    denom = float(np.dot(p, p))
    if denom <= 0:
        raise SingularAlignmentError("prediction is zero on the mask")
    return AffineParams(float(np.dot(p, g)) / denom, 0.0)


def align(pred, gt_depth: DepthMap, protocol) -> DepthMap:
    """Align a prediction to ground truth and return aligned depth.

    ``scale_disparity`` / ``affine_disparity`` fit a disparity prediction
    (depth predictions are inverted first) against the inverted ground
    truth, then invert back; pixels
    whose aligned disparity is non-positive become invalid. ``affine_depth``
    fits directly in depth space. ``none`` only converts disparity
    predictions to depth.
    """
    protocol = Protocol(protocol)
    gt_disp = depth_to_disparity(gt_depth)
    if protocol is Protocol.AFFINE_DEPTH:
        if not isinstance(pred, DepthMap):
            raise TypeError("affine_depth alignment needs a depth prediction")
        fit = lsq_affine(pred.values, gt_depth.values, pred.mask & gt_depth.mask)
        aligned = fit.apply(pred.values)
        ok = pred.mask & (aligned > 0)
        return DepthMap(np.where(ok, aligned, 0.0), ok)
    if protocol is Protocol.NONE:
        if isinstance(pred, DepthMap):
            return pred
        return disparity_to_depth(pred)
    if isinstance(pred, DepthMap):
        pred = depth_to_disparity(pred)
    elif not isinstance(pred, DisparityMap):
        raise TypeError(f"{protocol.value} alignment needs a DisparityMap or DepthMap")
    m = pred.mask & gt_disp.mask
    solver = lsq_scale if protocol is Protocol.SCALE_DISPARITY else lsq_affine
    fit = solver(pred.values, gt_disp.values, m)
    return disparity_to_depth(DisparityMap(fit.apply(pred.values), pred.mask))


@dataclass(frozen=True)
class MetricsReport:
    absrel: float
    mae: float
    rmse: float
    rmselog: float
    delta1: float
    n_valid: int
    n_nonpositive: int = 0  # excluded from rmselog, counted as delta1 failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("n_nonpositive")
        return d

    def csv_row(self, sample_id: str) -> list:
        return [sample_id, *(repr(float(getattr(self, k))) for k in CSV_HEADER[1:-1]), self.n_valid]


def compute_metrics(pred, gt, region_mask=None) -> MetricsReport:
    """AbsRel, MAE, RMSE, RMSElog (log10) and delta1 over the common valid pixels.

    ``pred`` and ``gt`` are ``DepthMap`` objects or plain arrays. Ground
    truth must be positive wherever it is used.
    """
    p, mp = as_masked(pred)
    g, mg = as_masked(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    m = mp & mg
    if region_mask is not None:
        m &= np.asarray(region_mask, dtype=bool)
    if not m.any():
        raise ValueError("empty evaluation mask")
    p, g = p[m], g[m]
    if np.any(g <= 0):
        raise ValueError("ground-truth depth must be > 0")
    diff = p - g
    pos = p > 0
    n_nonpos = int(p.size - pos.sum())
    if pos.any():
        rmselog = math.sqrt(np.mean((np.log10(p[pos]) - np.log10(g[pos])) ** 2))
    else:
        rmselog = math.nan
    ratio = np.maximum(p[pos] / g[pos], g[pos] / p[pos])
    return MetricsReport(
        absrel=float(np.mean(np.abs(diff) / g)),
        mae=float(np.mean(np.abs(diff))),
        rmse=math.sqrt(np.mean(diff**2)),
        rmselog=rmselog,
        delta1=float(np.count_nonzero(ratio < DELTA1_THRESHOLD) / p.size),
        n_valid=int(p.size),
        n_nonpositive=n_nonpos,
    )


def mean_report(reports: Iterable[MetricsReport]) -> MetricsReport:
    """Per-sample mean of every metric, compensated summation in input order."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    n = len(reports)
    mean = {k: math.fsum(getattr(r, k) for r in reports) / n for k in ("absrel", "mae", "rmse", "rmselog", "delta1")}
    return MetricsReport(
        **mean,
        n_valid=sum(r.n_valid for r in reports),
        n_nonpositive=sum(r.n_nonpositive for r in reports),
    )


def boundary_mask(grid, margin: int) -> np.ndarray:
    """True on the ``margin``-pixel band along all four ERP edges."""
    if margin < 1:
        raise ValueError("margin must be >= 1")
    h, w = grid.shape if isinstance(grid, ErpGrid) else grid
    mask = np.zeros((h, w), dtype=bool)
    mask[:margin] = True
    mask[h - margin:] = True
    mask[:, :margin] = True
    mask[:, w - margin:] = True
    return mask


def cap_depth(depth: DepthMap, min_depth: Optional[float] = None, max_depth: Optional[float] = None) -> DepthMap:
    """Clip valid depth into ``[min_depth, max_depth]``."""
    lo = min_depth if min_depth is not None else 0.0
    hi = max_depth if max_depth is not None else np.inf
    if lo < 0 or hi <= lo:
        raise ValueError(f"bad depth caps [{lo}, {hi}]")
    values = np.clip(depth.values, lo, hi)
    return DepthMap(np.where(depth.mask, values, 0.0), depth.mask)


def range_mask(depth: DepthMap, min_depth: Optional[float] = None, max_depth: Optional[float] = None) -> np.ndarray:
    m = depth.mask.copy()
    if min_depth is not None:
        m &= depth.values >= min_depth
    if max_depth is not None:
        m &= depth.values <= max_depth
    return m
