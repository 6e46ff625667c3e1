"""Robust disparity normalization, the scale-invariant loss and its siblings.

All losses take two disparity maps (``DisparityMap`` or plain arrays) and
evaluate over the intersection of their validity masks. Robust statistics
are computed over that same intersection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .maps import DisparityMap, as_masked

SCALE_EPS = 1e-8
ZERO_RESIDUAL_RTOL = 1e-12


class DegenerateScaleError(ValueError):
    """Robust scale at or below ``SCALE_EPS``; the map cannot be normalized."""


class RobustStats(NamedTuple):
    t: float  # median
    s: float  # mean absolute deviation from the median


class LossValue(NamedTuple):
    value: float
    n_valid: int


def _stats(v: np.ndarray) -> RobustStats:
    t = float(np.median(v))
    return RobustStats(t, float(np.mean(np.abs(v - t))))


def robust_stats(d, mask=None) -> RobustStats:
    values, m = as_masked(d, mask)
    v = values[m]
    if v.size == 0:
        raise ValueError("no valid pixels")
    return _stats(v)


def normalize_scale(d, mask=None):
    """Divide by the robust scale only; the median shift is kept."""
    values, m = as_masked(d, mask)
    stats = robust_stats(values, m)
    if stats.s <= SCALE_EPS:
        raise DegenerateScaleError(f"degenerate scale s={stats.s:.3g}")
    out = np.where(m, values / stats.s, values)
    if isinstance(d, DisparityMap):
        return DisparityMap(out, m)
    return out


def _pair(d_pd, d_gt, mask):
    pd, m_pd = as_masked(d_pd)
    gt, m_gt = as_masked(d_gt)
    if pd.shape != gt.shape:
        raise ValueError(f"shape mismatch {pd.shape} vs {gt.shape}")
    m = m_pd & m_gt
    if mask is not None:
        m &= np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("masks do not intersect")
    return pd, gt, m


def _scaled(v: np.ndarray, shift: bool) -> np.ndarray:
    t, s = _stats(v)
    if s <= SCALE_EPS:
        raise DegenerateScaleError(f"degenerate scale s={s:.3g}")
    return (v - t) / s if shift else v / s


def si_loss(d_pd, d_gt, mask=None) -> LossValue:
    """Mean |d_pd/s(d_pd) - d_gt/s(d_gt)|; invariant to scale, not to shift."""
    pd, gt, m = _pair(d_pd, d_gt, mask)
    a, b = pd[m], gt[m]
    return LossValue(float(np.mean(np.abs(_scaled(a, False) - _scaled(b, False)))), a.size)


def ssi_loss(d_pd, d_gt, mask=None) -> LossValue:
    """Scale-and-shift invariant variant: each side normalized as (d - t) / s."""
    pd, gt, m = _pair(d_pd, d_gt, mask)
    a, b = pd[m], gt[m]
    return LossValue(float(np.mean(np.abs(_scaled(a, True) - _scaled(b, True)))), a.size)


def abs_l1_loss(d_pd, d_gt, mask=None) -> LossValue:
    pd, gt, m = _pair(d_pd, d_gt, mask)
    return LossValue(float(np.mean(np.abs(pd[m] - gt[m]))), int(m.sum()))


def si_loss_subgrad(d_pd, d_gt, mask=None, return_flags: bool = False):
    """Analytic (sub)gradient of :func:`si_loss` with respect to ``d_pd``.

    The median pivot(s) and every sign pattern are held at their current
    values. Pixels where a sign is undefined (a residual that is zero up to
    ``ZERO_RESIDUAL_RTOL``, or a value tied with the median other than the
    pivot itself) get the zero-sign subgradient and are reported in the
    flag mask when ``return_flags``.
    Pixels outside the evaluation mask get gradient 0.
    """
    pd, gt, m = _pair(d_pd, d_gt, mask)
    a, b = pd[m], gt[m]
    n = a.size
    t, s = _stats(a)
    if s <= SCALE_EPS:
        raise DegenerateScaleError(f"degenerate scale s={s:.3g}")
    an, bn = a / s, _scaled(b, False)
    resid = an - bn
    # residuals at rounding level count as zero; their sign is noise
    resid[np.abs(resid) <= ZERO_RESIDUAL_RTOL * np.maximum(np.abs(an), np.abs(bn))] = 0.0
    sig = np.sign(resid)
    dev = np.sign(a - t)

    order = np.argsort(a, kind="stable")
    if n % 2:
        pivots = order[[n // 2]]
        dt = np.zeros(n)
        dt[pivots] = 1.0
    else:
        pivots = order[[n // 2 - 1, n // 2]]
        dt = np.zeros(n)
        dt[pivots] = 0.5
    # ds/dd_j = (1/N) (sign(d_j - t) - sum_i sign(d_i - t) * dt/dd_j)
    ds = (dev - dev.sum() * dt) / n
    g = (sig / s - np.dot(sig, a) / s**2 * ds) / n

    flags_v = resid == 0
    tied = dev == 0
    tied[pivots] = False
    if n % 2 == 0:
        # two distinct central values never tie with their own mean
        tied |= np.isin(np.arange(n), pivots) & (a[pivots[0]] == a[pivots[1]])
    flags_v |= tied

    grad = np.zeros(pd.shape)
    grad[m] = g
    if not return_flags:
        return grad
    flags = np.zeros(pd.shape, dtype=bool)
    flags[m] = flags_v
    return grad, flags


def apply_shift(raw, shift: float):
    """Add a global shift to every pixel; no clamping."""
    if isinstance(raw, DisparityMap):
        return DisparityMap(raw.values + shift, raw.mask)
    return np.asarray(raw, dtype=np.float64) + shift


@dataclass
class ShiftHeadParams:
    """Three-layer MLP ``D -> D//2 -> D//4 -> 1`` with ReLU hidden layers.

    ``weights[k]`` has shape (out, in) and ``biases[k]`` shape (out,).
    """

    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        dims = self.dims
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ValueError("shift head has exactly three layers")
        if dims[0] < 4:
            raise ValueError(f"token dimension must be >= 4, got {dims[0]}")
        expected = head_dims(dims[0])
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (expected[k + 1], expected[k]) or b.shape != (expected[k + 1],):
                raise ValueError(
                    f"layer {k} has weight {w.shape} / bias {b.shape}, "
                    f"expected ({expected[k + 1]}, {expected[k]}) / ({expected[k + 1]},)"
                )

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @classmethod
    def zeros(cls, token_dim: int) -> "ShiftHeadParams":
        dims = head_dims(token_dim)
        return cls(
            [np.zeros((dims[k + 1], dims[k])) for k in range(3)],
            [np.zeros(dims[k + 1]) for k in range(3)],
        )

    @classmethod
    def initialize(cls, token_dim: int, rng: np.random.Generator, hidden_bias: float = 0.1):
        """He-style random weights; small positive hidden biases keep ReLUs active."""
        dims = head_dims(token_dim)
        weights = [rng.normal(0.0, np.sqrt(2.0 / dims[k]), (dims[k + 1], dims[k])) for k in range(3)]
        biases = [np.full(dims[1], hidden_bias), np.full(dims[2], hidden_bias), np.zeros(1)]
        return cls(weights, biases)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])

    def with_flat(self, theta) -> "ShiftHeadParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        weights, biases, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(theta[i:i + w.size].reshape(w.shape))
            i += w.size
            biases.append(theta[i:i + b.size].copy())
            i += b.size
        return ShiftHeadParams(weights, biases)

    def forward(self, tokens) -> np.ndarray:
        """Batched forward pass; ``tokens`` is (D,) or (N, D)."""
        x = np.asarray(tokens, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dims[0]:
            raise ValueError(f"token length {x.shape[1]} != head input {self.dims[0]}")
        h = np.maximum(x @ self.weights[0].T + self.biases[0], 0.0)
        h = np.maximum(h @ self.weights[1].T + self.biases[1], 0.0)
        out = (h @ self.weights[2].T + self.biases[2])[:, 0]
        return out[0] if single else out

    __call__ = forward

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in zip(self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ShiftHeadParams":
        params = cls([l["w"] for l in doc["layers"]], [l["b"] for l in doc["layers"]])
        if "dims" in doc and list(doc["dims"]) != params.dims:
            raise ValueError(f"declared dims {doc['dims']} disagree with layers {params.dims}")
        return params

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ShiftHeadParams":
        return cls.from_dict(json.loads(text))


def head_dims(token_dim: int) -> list[int]:
    return [token_dim, token_dim // 2, token_dim // 4, 1]


def shift_head_forward(params: ShiftHeadParams, token) -> float:
    token = np.asarray(token, dtype=np.float64)
    if token.ndim != 1:
        raise ValueError("token must be a 1-D vector")
    return float(params.forward(token))
