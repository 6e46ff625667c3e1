"""Equirectangular (ERP) geometry.

Coordinate convention, used by every module in the package:

* world axes are y-up with +z forward and +x to the right;
* longitude ``lon = ((col + 0.5) / W) * 2*pi - pi`` and latitude
  ``lat = pi/2 - ((row + 0.5) / H) * pi`` (pixel centers, row 0 at the
  north pole);
* ``dir = (cos(lat) sin(lon), sin(lat), cos(lat) cos(lon))`` so the image
  center (lat 0, lon 0) looks down +z.

Cube faces use the same axes. Each face is described by its outward
normal and the (right, up) axes of its image plane; rows run top to bottom.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .maps import DepthMap, DisparityMap, ErpGrid

logger = logging.getLogger(__name__)


class Face(str, enum.Enum):
    # Declaration order is the tie-break priority at cube edges.
    FRONT = "front"
    BACK = "back"
    RIGHT = "right"
    LEFT = "left"
    UP = "up"
    DOWN = "down"


# face -> (normal, right, up)
FACE_AXES = {
    Face.FRONT: ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    Face.BACK: ((0, 0, -1), (-1, 0, 0), (0, 1, 0)),
    Face.RIGHT: ((1, 0, 0), (0, 0, -1), (0, 1, 0)),
    Face.LEFT: ((-1, 0, 0), (0, 0, 1), (0, 1, 0)),
    Face.UP: ((0, 1, 0), (1, 0, 0), (0, 0, -1)),
    Face.DOWN: ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
}


@dataclass(frozen=True, eq=False)
class CubeDepthFace:
    """Z-buffer depth of one cube face: distance along the face normal, meters."""

    face: Face
    zbuf: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "face", Face(self.face))
        zbuf = np.asarray(self.zbuf, dtype=np.float64)
        if zbuf.ndim != 2 or zbuf.shape[0] != zbuf.shape[1] or zbuf.shape[0] == 0:
            raise ValueError(f"face z-buffer must be a non-empty F x F array, got {zbuf.shape}")
        if self.mask is None:
            mask = np.isfinite(zbuf) & (np.nan_to_num(zbuf, nan=0.0) > 0)
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != zbuf.shape:
                raise ValueError("face mask shape does not match z-buffer")
            if (mask & ~(np.isfinite(zbuf) & (zbuf > 0))).any():
                raise ValueError("valid z-buffer entries must be finite and > 0")
        object.__setattr__(self, "zbuf", zbuf)
        object.__setattr__(self, "mask", mask)

    @property
    def size(self) -> int:
        return self.zbuf.shape[0]


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", points)
        if self.colors is not None:
            colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(colors) != len(points):
                raise ValueError(f"{len(colors)} colors for {len(points)} points")
            object.__setattr__(self, "colors", colors)

    def __len__(self) -> int:
        return len(self.points)


def _grid_of(grid) -> ErpGrid:
    if isinstance(grid, ErpGrid):
        return grid
    return ErpGrid(*grid)


def lonlat_to_dir(lon, lat) -> np.ndarray:
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    c = np.cos(lat)
    return np.stack([c * np.sin(lon), np.sin(lat), c * np.cos(lon)], axis=-1)


def pixel_lonlat(rows, cols, grid) -> tuple[np.ndarray, np.ndarray]:
    """Longitude/latitude of (possibly fractional or out-of-range) pixel coordinates."""
    grid = _grid_of(grid)
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    lon = (cols + 0.5) / grid.width * 2.0 * np.pi - np.pi
    lat = np.pi / 2.0 - (rows + 0.5) / grid.height * np.pi
    return lon, lat


def pixel_to_dir(row: int, col: int, grid) -> np.ndarray:
    """Unit direction through the center of ERP pixel ``(row, col)``."""
    grid = _grid_of(grid)
    if not (0 <= row < grid.height and 0 <= col < grid.width):
        raise IndexError(f"pixel ({row}, {col}) outside {grid.height}x{grid.width} grid")
    return lonlat_to_dir(*pixel_lonlat(row, col, grid))


def erp_directions(grid) -> np.ndarray:
    """H x W x 3 array of unit directions through every pixel center."""
    grid = _grid_of(grid)
    rows, cols = np.meshgrid(np.arange(grid.height), np.arange(grid.width), indexing="ij")
    return lonlat_to_dir(*pixel_lonlat(rows, cols, grid))


def dir_to_pixel(d, grid) -> tuple:
    """Continuous ERP coordinates ``(row, col)`` of a direction.

    Works on a single 3-vector or on an ``(..., 3)`` array. ``col`` wraps
    into ``[-0.5, W - 0.5)`` so that pixel centers map back to their integer
    column; ``row`` is clamped to ``[-0.5, H - 0.5]``, the pixel-center
    extent of the sphere (the exact north pole gives ``row == -0.5``).
    Inputs need not be normalized; zero vectors raise ``ValueError``.
    """
    grid = _grid_of(grid)
    d = np.asarray(d, dtype=np.float64)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise ValueError("direction must be a finite non-zero vector")
    x, y, z = (d[..., i] / norm for i in range(3))
    lon = np.arctan2(x, z)
    lat = np.arcsin(np.clip(y, -1.0, 1.0))
    col = (lon + np.pi) / (2.0 * np.pi) * grid.width - 0.5
    col = np.mod(col + 0.5, grid.width) - 0.5
    row = (np.pi / 2.0 - lat) / np.pi * grid.height - 0.5
    row = np.clip(row, -0.5, grid.height - 0.5)
    if row.ndim == 0:
        return float(row), float(col)
    return row, col


def depth_to_pointcloud(depth: DepthMap, colors=None) -> PointCloud:
    """One 3-D point per valid pixel, in row-major pixel order.

    ``colors`` is an optional H x W x 3 uint8 ERP image sampled at the same
    pixels.
    """
    if depth.n_valid == 0:
        raise ValueError("no valid depth")
    dirs = erp_directions(depth.grid)
    points = dirs[depth.mask] * depth.values[depth.mask][:, None]
    rgb = None
    if colors is not None:
        colors = np.asarray(colors)
        if colors.shape[:2] != depth.shape:
            raise ValueError(f"color image {colors.shape[:2]} does not match depth {depth.shape}")
        if colors.ndim == 2:
            colors = np.repeat(colors[..., None], 3, axis=-1)
        rgb = colors[depth.mask][:, :3]
    return PointCloud(points, rgb)


def disparity_to_depth(disp: DisparityMap, bias: float = 0.0) -> DepthMap:
    """Invert disparity after adding ``bias``.

    Pixels where ``disp + bias <= 0`` cannot be inverted and are marked
    invalid instead of raising; the count is logged.
    """
    if bias < 0:
        raise ValueError("bias must be >= 0")
    shifted = disp.values + bias
    ok = disp.mask & (shifted > 0)
    demoted = int(disp.mask.sum() - ok.sum())
    if demoted:
        logger.debug("disparity_to_depth: %d non-positive pixels marked invalid", demoted)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(ok, 1.0 / np.where(ok, shifted, 1.0), 0.0)
    return DepthMap(values, ok)


def depth_to_disparity(depth: DepthMap) -> DisparityMap:
    values = np.where(depth.mask, 1.0 / np.where(depth.mask, depth.values, 1.0), 0.0)
    return DisparityMap(values, depth.mask.copy())


def _face_pixel_dirs(size: int, face: Face) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions through face pixel centers and the matching cos to the normal."""
    n, r, u = (np.asarray(v, dtype=np.float64) for v in FACE_AXES[face])
    centers = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    b, a = np.meshgrid(-centers, centers, indexing="ij")  # rows go top to bottom
    rays = n + a[..., None] * r + b[..., None] * u
    lengths = np.linalg.norm(rays, axis=-1)
    return rays / lengths[..., None], 1.0 / lengths


def zbuffer_to_range(face: CubeDepthFace) -> np.ndarray:
    """Per face pixel Euclidean distance ``z / cos``, cos taken at the pixel center."""
    _, cos = _face_pixel_dirs(face.size, face.face)
    return np.where(face.mask, face.zbuf / cos, 0.0)


def cube_zbuffer_to_erp(faces: Iterable[CubeDepthFace], grid, eps: float = 1e-12) -> DepthMap:
    """Reproject cube-face Z-buffers into an ERP Euclidean-distance map.

    Every ERP pixel direction is assigned to the provided face whose image
    plane it crosses (largest cosine to the normal, ties broken in
    ``Face`` order), then the nearest face pixel is looked up. Z-buffer
    values are converted to ray distance on the face grid itself, so a
    sampled value is the range of an actual face sample rather than a
    re-projected blend. ERP pixels that land on a missing face or on an
    invalid face pixel are invalid.
    """
    grid = _grid_of(grid)
    faces = list(faces)
    seen = set()
    for f in faces:
        if f.face in seen:
            raise ValueError(f"duplicate face {f.face.value!r}")
        seen.add(f.face)
    faces.sort(key=lambda f: list(Face).index(f.face))

    dirs = erp_directions(grid)
    values = np.zeros(grid.shape)
    mask = np.zeros(grid.shape, dtype=bool)
    best = np.full(grid.shape, -np.inf)
    for f in faces:
        n, r, u = (np.asarray(v, dtype=np.float64) for v in FACE_AXES[f.face])
        cos = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            a = (dirs @ r) / cos
            b = (dirs @ u) / cos
        inside = (cos > 1.0 / np.sqrt(3.0) - eps) & (np.abs(a) <= 1 + eps) & (np.abs(b) <= 1 + eps)
        take = inside & (cos > best)
        if not take.any():
            continue
        size = f.size
        col = np.clip(np.floor((a[take] + 1.0) / 2.0 * size), 0, size - 1).astype(int)
        row = np.clip(np.floor((1.0 - b[take]) / 2.0 * size), 0, size - 1).astype(int)
        rng = zbuffer_to_range(f)
        best[take] = cos[take]
        values[take] = rng[row, col]
        mask[take] = f.mask[row, col]
    values = np.where(mask, values, 0.0)
    return DepthMap(values, mask)


def sphere_faces(radius: float, size: int, faces: Iterable = tuple(Face)) -> list[CubeDepthFace]:
    """Analytic Z-buffers of a sphere of ``radius`` centered on the camera."""
    out = []
    for face in faces:
        face = Face(face)
        _, cos = _face_pixel_dirs(size, face)
        out.append(CubeDepthFace(face, radius * cos))
    return out


def rotate_about_y(points, angle: float) -> np.ndarray:
    """Rotate points by ``angle`` radians of longitude (positive = toward +x from +z)."""
    c, s = np.cos(angle), np.sin(angle)
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.stack([x * c + z * s, y, z * c - x * s], axis=-1)


def smooth_spherical_field(grid, rng: np.random.Generator, n_terms: int = 6, channels: int = 1) -> np.ndarray:
    """Random smooth function of direction sampled at ERP pixel centres, H x W x C.

    Each channel is a sum of plane waves ``amp * cos(freq * <d, v> + phase)``,
    so the field is continuous across the seam and the poles.
    """
    dirs = erp_directions(_grid_of(grid))
    out = np.zeros(dirs.shape[:2] + (channels,))
    for c in range(channels):
        for _ in range(n_terms):
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            amp, freq, phase = rng.normal(), rng.uniform(1.0, 4.0), rng.uniform(0.0, 2 * np.pi)
            out[..., c] += amp * np.cos(freq * (dirs @ v) + phase)
    return out
