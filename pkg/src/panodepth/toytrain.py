"""Desk-scale shift-learning experiment on procedural ERP scenes.

Each synthetic scene is a box-shaped room with a few spheres, seen from a
camera inside it. A Lambertian shading render is summarised into a small
statistics token (mean, variance, histogram). The "network output" is the
ground-truth disparity corrupted by an unknown positive scale ``a`` and a
shift ``b``; ``b`` is a fixed affine function of the token, so a head that
reads the token can undo it, while ``a`` is random and cannot be
recovered.

Training modes mirror the loss ablation:

* ``base``: shift head on the token, scale-invariant loss;
* ``no_shift``: raw output with the scale-invariant loss, nothing to train;
* ``affine``: raw output with the scale-and-shift invariant loss;
* ``absol``: shift and scale heads, absolute L1 loss on disparity.

Gradients are central finite differences over the head parameters and the
optimizer is gradient descent with momentum 0.9, halving the step size
after 20 steps without improvement.
"""

from __future__ import annotations

import enum
import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .loss import ShiftHeadParams, apply_shift, si_loss, ssi_loss
from .maps import DepthMap, DisparityMap, ErpGrid
from .metrics import MetricsReport, Protocol, align, compute_metrics, mean_report
from .sphere import erp_directions

logger = logging.getLogger(__name__)

DEPTH_RANGE = (0.5, 50.0)
SCALE_RANGE = (0.5, 2.0)
INVERSION_BIAS = 0.05
MAX_PARAMS = 512
DIVERGENCE_LOSS = 1e6
MOMENTUM = 0.9
PLATEAU_STEPS = 20

# hidden shift b = SHIFT_OFFSET + token @ shift_weights(D), |shift_weights| = SHIFT_SPREAD
SHIFT_OFFSET = 0.2
SHIFT_SPREAD = 0.1
_SHIFT_SEED = 360
# scenes whose shading statistics fix the token standardization
REFERENCE_SEEDS = range(10**6, 10**6 + 256)


class Mode(str, enum.Enum):
    BASE = "base"
    NO_SHIFT = "no_shift"
    AFFINE = "affine"
    ABSOL = "absol"


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, curve):
        super().__init__(message)
        self.curve = curve


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    seed: int
    gt_depth: DepthMap
    shading: np.ndarray
    token: np.ndarray
    scale: float  # a
    shift: float  # b

    @property
    def gt_disparity(self) -> np.ndarray:
        return 1.0 / self.gt_depth.values

    @property
    def raw_disparity(self) -> DisparityMap:
        """``a / depth - b``: what an affine-invariant network would emit."""
        return DisparityMap(self.scale * self.gt_disparity - self.shift, self.gt_depth.mask)


def shift_weights(token_dim: int) -> np.ndarray:
    """Hidden linear map from token to shift (fixed, independent of any scene)."""
    rng = np.random.default_rng(_SHIFT_SEED)
    w = rng.uniform(-1.0, 1.0, token_dim)
    return SHIFT_SPREAD * w / np.linalg.norm(w)


def hidden_shift(token) -> float:
    token = np.asarray(token, dtype=np.float64)
    return float(SHIFT_OFFSET + token @ shift_weights(token.shape[-1]))


def shading_stats(shading: np.ndarray, token_dim: int = 16) -> np.ndarray:
    """Mean, variance and a (D-2)-bin histogram (fractions) of a [0, 1] image."""
    if token_dim < 4:
        raise ValueError("token_dim must be >= 4")
    v = shading.ravel()
    hist, _ = np.histogram(np.clip(v, 0.0, 1.0), bins=token_dim - 2, range=(0.0, 1.0))
    return np.concatenate([[v.mean(), v.var()], hist / v.size])


@functools.lru_cache(maxsize=16)
def _token_normalizer(grid: ErpGrid, token_dim: int) -> tuple[np.ndarray, np.ndarray]:
    stats = np.stack([shading_stats(render_room(s, grid)[1], token_dim) for s in REFERENCE_SEEDS])
    mu = stats.mean(axis=0)
    sigma = stats.std(axis=0)
    # entries constant over the reference set (e.g. an always-empty bin) stay at 0
    return mu, np.where(sigma > 1e-9, sigma, 1.0)


def shading_token(shading: np.ndarray, grid, token_dim: int = 16) -> np.ndarray:
    """Shading statistics standardized with fixed reference-set moments."""
    grid = grid if isinstance(grid, ErpGrid) else ErpGrid(*grid)
    mu, sigma = _token_normalizer(grid, token_dim)
    return (shading_stats(shading, token_dim) - mu) / sigma


def _ray_box(dirs, lo, hi):
    """Distance from the origin to the inside walls of box [lo, hi], plus wall ids."""
    with np.errstate(divide="ignore"):
        t_hi = np.where(dirs > 0, hi / dirs, np.inf)
        t_lo = np.where(dirs < 0, lo / dirs, np.inf)
    t_axis = np.minimum(t_hi, t_lo)
    axis = np.argmin(t_axis, axis=-1)
    t = np.take_along_axis(t_axis, axis[..., None], -1)[..., 0]
    positive = np.take_along_axis(dirs, axis[..., None], -1)[..., 0] > 0
    return t, axis * 2 + positive


def render_room(seed: int, grid) -> tuple[np.ndarray, np.ndarray]:
    """Procedural depth (Euclidean, meters) and Lambertian shading for one scene."""
    grid = grid if isinstance(grid, ErpGrid) else ErpGrid(*grid)
    rng = np.random.default_rng(seed)
    dirs = erp_directions(grid)
    # room extents around the camera; x/z log-uniform in size
    half = np.exp(rng.uniform(np.log(1.0), np.log(6.0), 2))
    off = rng.uniform(-0.6, 0.6, 2) * half
    lo = np.array([-half[0] + off[0], -rng.uniform(0.8, 1.8), -half[1] + off[1]])
    hi = np.array([half[0] + off[0], rng.uniform(0.6, 2.5), half[1] + off[1]])
    depth, surf = _ray_box(dirs, lo, hi)
    normals = np.zeros(dirs.shape)
    axis = surf // 2
    sign = np.where(surf % 2 == 1, -1.0, 1.0)  # wall normals point back at the camera
    np.put_along_axis(normals, axis[..., None], sign[..., None], -1)
    albedo = rng.uniform(0.3, 1.0, 6 + 3)
    alb = albedo[surf]

    for k in range(rng.integers(1, 4)):
        for _ in range(20):
            center = rng.uniform(lo + 0.3, hi - 0.3)
            radius = rng.uniform(0.2, 0.8)
            if np.linalg.norm(center) > radius + 0.4:
                break
        else:
            continue
        b = dirs @ center
        disc = b**2 - (center @ center - radius**2)
        hit = disc > 0
        t = np.where(hit, b - np.sqrt(np.where(hit, disc, 0.0)), np.inf)
        closer = hit & (t > 0) & (t < depth)
        depth = np.where(closer, t, depth)
        pts = dirs * depth[..., None]
        n_sph = (pts - center) / radius
        normals = np.where(closer[..., None], n_sph, normals)
        alb = np.where(closer, albedo[6 + k], alb)

    light = rng.normal(size=3)
    light /= np.linalg.norm(light)
    shading = alb * (0.25 + 0.75 * np.clip(normals @ light, 0.0, 1.0))
    return np.clip(depth, *DEPTH_RANGE), shading


def generate_scene(seed: int, grid=(16, 32), token_dim: int = 16) -> SyntheticScene:
    grid = grid if isinstance(grid, ErpGrid) else ErpGrid(*grid)
    depth, shading = render_room(seed, grid)
    token = shading_token(shading, grid, token_dim)
    # separate stream so the corruption does not perturb the geometry draws
    a = float(np.random.default_rng([seed, 1]).uniform(*SCALE_RANGE))
    return SyntheticScene(
        seed=int(seed),
        gt_depth=DepthMap(depth),
        shading=shading,
        token=token,
        scale=a,
        shift=hidden_shift(token),
    )


def generate_scenes(seeds: Sequence[int], grid=(16, 32), token_dim: int = 16, threads: int = 1):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda s: generate_scene(s, grid, token_dim), seeds))
    return [generate_scene(s, grid, token_dim) for s in seeds]


@dataclass
class TrainConfig:
    mode: Mode = Mode.BASE
    steps: int = 2000
    step_size: float = 0.01
    fd_epsilon: float = 1e-4
    n_train: int = 200
    n_val: int = 50
    seed: int = 0
    height: int = 16
    token_dim: int = 16
    threads: int = 1

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.steps <= 0:
            raise ValueError("steps must be > 0")
        if not 0 < self.fd_epsilon <= 1e-3:
            raise ValueError("fd_epsilon must lie in (0, 1e-3]")
        if self.n_train <= 0 or self.n_val <= 0:
            raise ValueError("n_train and n_val must be > 0")

    @property
    def grid(self) -> ErpGrid:
        return ErpGrid.from_height(self.height)

    def train_seeds(self) -> list[int]:
        return [self.seed * 100_003 + i for i in range(self.n_train)]

    def val_seeds(self) -> list[int]:
        return [self.seed * 100_003 + 50_000 + i for i in range(self.n_val)]


class _Batch:
    """Scenes stacked into flat arrays so a loss evaluation is a few vector ops.

    Adding a constant leaves the robust scale unchanged, so the
    scale-invariant loss of ``raw + c`` is ``mean_j |c - q_j| / s(raw)``
    with ``q = s(raw) * gt_hat - raw``. Keeping ``q`` sorted with prefix
    sums turns every evaluation into one binary search per scene.
    """

    def __init__(self, scenes: Sequence[SyntheticScene]):
        self.tokens = np.stack([s.token for s in scenes])
        self.raw = np.stack([s.raw_disparity.values.ravel() for s in scenes])
        self.gt = np.stack([s.gt_disparity.ravel() for s in scenes])
        self.gt_hat = self.gt / _mad(self.gt)[:, None]
        self.s_raw = _mad(self.raw)
        q = np.sort(self.s_raw[:, None] * self.gt_hat - self.raw, axis=1)
        n_scenes, n = q.shape
        self._n = n
        self._cum = np.concatenate([np.zeros((n_scenes, 1)), np.cumsum(q, axis=1)], axis=1)
        # rows laid end to end with a gap wider than any value, for one flat searchsorted
        span = q.max() - q.min() + 1.0
        self._offset = np.arange(n_scenes) * span - q.min()
        self._flat = (q + self._offset[:, None]).ravel()

    def si(self, shift: np.ndarray) -> np.ndarray:
        """Per-scene scale-invariant loss of ``raw + shift``."""
        shift = np.asarray(shift, dtype=np.float64)
        rows = np.arange(len(shift))
        k = np.searchsorted(self._flat, shift + self._offset, side="right") - rows * self._n
        k = np.clip(k, 0, self._n)
        below = self._cum[rows, k]
        above = self._cum[:, -1] - below
        total = shift * k - below + above - shift * (self._n - k)
        return total / self._n / self.s_raw

    def abs_l1(self, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
        d = scale[:, None] * self.raw + shift[:, None]
        return np.mean(np.abs(d - self.gt), axis=1)


def _mad(x: np.ndarray) -> np.ndarray:
    t = np.median(x, axis=1, keepdims=True)
    return np.mean(np.abs(x - t), axis=1)


@dataclass
class Heads:
    shift: Optional[ShiftHeadParams] = None
    scale: Optional[ShiftHeadParams] = None

    @property
    def n_params(self) -> int:
        return sum(h.n_params for h in (self.shift, self.scale) if h is not None)

    def flatten(self) -> np.ndarray:
        parts = [h.flatten() for h in (self.shift, self.scale) if h is not None]
        return np.concatenate(parts) if parts else np.zeros(0)

    def with_flat(self, theta) -> "Heads":
        n = self.shift.n_params if self.shift is not None else 0
        return Heads(
            self.shift.with_flat(theta[:n]) if self.shift is not None else None,
            self.scale.with_flat(theta[n:]) if self.scale is not None else None,
        )

    def to_dict(self) -> dict:
        out = {}
        if self.shift is not None:
            out["shift_head"] = self.shift.to_dict()
        if self.scale is not None:
            out["scale_head"] = self.scale.to_dict()
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "Heads":
        return cls(
            ShiftHeadParams.from_dict(doc["shift_head"]) if "shift_head" in doc else None,
            ShiftHeadParams.from_dict(doc["scale_head"]) if "scale_head" in doc else None,
        )


@dataclass
class TrainResult:
    mode: Mode
    heads: Heads
    curve: list = field(default_factory=list)
    config: Optional[TrainConfig] = None


def _init_head(token_dim: int, rng: np.random.Generator) -> ShiftHeadParams:
    # unit hidden biases and a damped first layer keep every ReLU active at
    # the start; a small output layer starts the shift near zero
    head = ShiftHeadParams.initialize(token_dim, rng, hidden_bias=1.0)
    head.weights[0] *= 0.3
    head.weights[2] *= 0.1
    return head


def init_heads(mode: Mode, token_dim: int, rng: np.random.Generator) -> Heads:
    mode = Mode(mode)
    if mode is Mode.BASE:
        return Heads(shift=_init_head(token_dim, rng))
    if mode is Mode.ABSOL:
        shift = _init_head(token_dim, rng)
        scale = _init_head(token_dim, rng)
        scale.biases[2][:] = 1.0  # start from the identity scale
        return Heads(shift=shift, scale=scale)
    return Heads()


def _objective(mode: Mode, batch: _Batch) -> Callable[[Heads], float]:
    if mode is Mode.BASE:
        return lambda h: float(np.mean(batch.si(h.shift.forward(batch.tokens))))
    if mode is Mode.ABSOL:
        return lambda h: float(
            np.mean(batch.abs_l1(h.scale.forward(batch.tokens), h.shift.forward(batch.tokens)))
        )
    if mode is Mode.NO_SHIFT:
        return lambda h: float(np.mean(batch.si(np.zeros(len(batch.tokens)))))
    if mode is Mode.AFFINE:
        return lambda h: float(np.mean([ssi_loss(r, g).value for r, g in zip(batch.raw, batch.gt)]))
    raise ValueError(mode)


def fd_gradient(f: Callable[[np.ndarray], float], theta: np.ndarray, eps: float, threads: int = 1) -> np.ndarray:
    """Central finite differences, one coordinate at a time."""

    def coord(j):
        e = np.zeros_like(theta)
        e[j] = eps
        return (f(theta + e) - f(theta - e)) / (2.0 * eps)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return np.array(list(pool.map(coord, range(theta.size))))
    return np.array([coord(j) for j in range(theta.size)])


def train(config: TrainConfig, scenes_train=None, scenes_val=None) -> TrainResult:
    """Fit the mode's heads on procedural training scenes.

    The curve holds one record per step: ``{mode, step, train_loss,
    val_loss, step_size, best_loss}``. ``train_loss`` is the loss of the
    parameters after the step (momentum can make it rise transiently);
    ``best_loss`` is the running minimum, which is what the returned heads
    achieve. A plateau halves the step size and restarts from the best
    parameters with zero velocity.
    """
    mode = config.mode
    grid = config.grid
    if scenes_train is None:
        scenes_train = generate_scenes(config.train_seeds(), grid, config.token_dim, config.threads)
    if scenes_val is None:
        scenes_val = generate_scenes(config.val_seeds(), grid, config.token_dim, config.threads)
    train_batch, val_batch = _Batch(scenes_train), _Batch(scenes_val)
    f_train = _objective(mode, train_batch)
    f_val = _objective(mode, val_batch)

    rng = np.random.default_rng(config.seed)
    heads = init_heads(mode, config.token_dim, rng)
    if heads.n_params > MAX_PARAMS:
        raise ValueError(f"{heads.n_params} trainable parameters exceeds the {MAX_PARAMS} limit")

    curve = []
    loss0 = f_train(heads)
    curve.append(_record(mode, 0, loss0, f_val(heads), config.step_size, loss0))
    if heads.n_params == 0:
        return TrainResult(mode, heads, curve, config)

    theta = heads.flatten()
    best_theta, best = theta.copy(), loss0
    velocity = np.zeros_like(theta)
    lr = config.step_size
    stale = 0

    def f(th):
        return f_train(heads.with_flat(th))

    for step in range(1, config.steps + 1):
        grad = fd_gradient(f, theta, config.fd_epsilon, config.threads)
        velocity = MOMENTUM * velocity - lr * grad
        theta = theta + velocity
        loss = f(theta)
        if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
            raise TrainingDivergedError(f"loss {loss:.3g} at step {step}", curve)
        if loss < best:
            best, best_theta, stale = loss, theta.copy(), 0
        else:
            stale += 1
        if stale >= PLATEAU_STEPS:
            lr *= 0.5
            theta, velocity, stale = best_theta.copy(), np.zeros_like(theta), 0
            loss = best
            logger.debug("step %d: plateau, step size -> %.3g", step, lr)
        curve.append(_record(mode, step, loss, f_val(heads.with_flat(theta)), lr, best))
    return TrainResult(mode, heads.with_flat(best_theta), curve, config)


def _record(mode, step, train_loss, val_loss, lr, best) -> dict:
    return {
        "mode": Mode(mode).value,
        "step": step,
        "train_loss": train_loss,
        "val_loss": val_loss,
        "step_size": lr,
        "best_loss": best,
    }


DEFAULT_PROTOCOL = {
    Mode.BASE: Protocol.SCALE_DISPARITY,
    Mode.NO_SHIFT: Protocol.SCALE_DISPARITY,
    Mode.AFFINE: Protocol.AFFINE_DISPARITY,
    Mode.ABSOL: Protocol.NONE,
}
DEFAULT_BIAS = {Mode.BASE: 0.0, Mode.ABSOL: 0.0, Mode.NO_SHIFT: INVERSION_BIAS, Mode.AFFINE: INVERSION_BIAS}


def predict_disparity(mode, scene: SyntheticScene, shift_head=None, scale_head=None) -> DisparityMap:
    """The mode's output disparity; heads may be params or any token -> float callable."""
    mode = Mode(mode)
    raw = scene.raw_disparity
    if mode is Mode.BASE:
        return apply_shift(raw, float(shift_head(scene.token)))
    if mode is Mode.ABSOL:
        return DisparityMap(float(scale_head(scene.token)) * raw.values + float(shift_head(scene.token)), raw.mask)
    return raw


def evaluate_scenes(mode, scenes, shift_head=None, scale_head=None, protocol=None, bias=None) -> list[MetricsReport]:
    mode = Mode(mode)
    protocol = DEFAULT_PROTOCOL[mode] if protocol is None else Protocol(protocol)
    bias = DEFAULT_BIAS[mode] if bias is None else bias
    reports = []
    for scene in scenes:
        disp = apply_shift(predict_disparity(mode, scene, shift_head, scale_head), bias)
        depth = align(disp, scene.gt_depth, protocol)
        reports.append(compute_metrics(depth, scene.gt_depth))
    return reports


def evaluate_run(result_or_mode, scenes, protocol=None, shift_head=None, scale_head=None, bias=None) -> MetricsReport:
    """Mean metrics of a trained result (or a bare mode plus heads) on ``scenes``."""
    if not scenes:
        raise ValueError("no scenes to evaluate")
    if isinstance(result_or_mode, TrainResult):
        mode = result_or_mode.mode
        shift_head = shift_head or result_or_mode.heads.shift
        scale_head = scale_head or result_or_mode.heads.scale
    else:
        mode = Mode(result_or_mode)
    return mean_report(evaluate_scenes(mode, scenes, shift_head, scale_head, protocol, bias))


def mean_si_loss(mode, scenes, shift_head=None, scale_head=None) -> float:
    values = [si_loss(predict_disparity(mode, s, shift_head, scale_head), s.gt_disparity).value for s in scenes]
    return math.fsum(values) / len(values)
