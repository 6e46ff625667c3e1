"""Independent reference implementations used by several test modules."""

import math

import numpy as np

from panodepth.curate import encode_faces
from panodepth.sphere import CubeDepthFace, sphere_faces

GRID_STEP = 1e-3
GRID_LO, GRID_HI = -5.0, 5.0


def _axis():
    n = int(round((GRID_HI - GRID_LO) / GRID_STEP))
    return GRID_LO + GRID_STEP * np.arange(n + 1)


def _moments(p, g):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    return p.size, p.sum(), g.sum(), p @ p, p @ g, g @ g


def grid_search_full(p, g):
    """Exhaustive (s, t) scan of sum (s p + t - g)^2 over the whole 2-D grid."""
    axis = _axis()
    n, sp, sg, spp, spg, sgg = _moments(p, g)
    a = spp * axis**2 - 2 * spg * axis
    b = n * axis**2 - 2 * sg * axis
    best = (np.inf, 0.0, 0.0)
    for i in range(0, axis.size, 500):
        s = axis[i:i + 500]
        r = a[i:i + 500, None] + b[None, :] + 2 * sp * np.outer(s, axis) + sgg
        k = np.unravel_index(np.argmin(r), r.shape)
        if r[k] < best[0]:
            best = (r[k], s[k[0]], axis[k[1]])
    return best[1], best[2]


def grid_search(p, g):
    """Same grid optimum, scanning every s and taking the best grid t per row.

    For fixed s the residual is a convex parabola in t, so the best grid t is
    one of the two grid points bracketing the vertex.
    """
    axis = _axis()
    n, sp, sg, spp, spg, sgg = _moments(p, g)
    vertex = (sg - axis * sp) / n
    lo = np.clip(np.floor((vertex - GRID_LO) / GRID_STEP).astype(int), 0, axis.size - 1)
    cand = np.stack([lo, np.minimum(lo + 1, axis.size - 1)])
    t = axis[cand]
    s = axis[None, :]
    r = spp * s**2 + n * t**2 + sgg + 2 * sp * s * t - 2 * spg * s - 2 * sg * t
    j, i = np.unravel_index(np.argmin(r), r.shape)
    return axis[i], t[j, i]


def curation_fixture(size=32):
    """Three encoded four-face samples: one accepted, one overflowing, one sparse."""
    names = ["front", "back", "left", "right"]
    ok = encode_faces(sphere_faces(100.0, size, names))
    overflow = encode_faces(sphere_faces(130.0, size, names))
    sparse = encode_faces(sphere_faces(20.0, size, names))
    keep = np.random.default_rng(0).random((size, size)) < 0.03
    sparse = {k: np.where(keep, v, 0).astype(np.uint16) for k, v in sparse.items()}
    return {"ok": ok, "overflow": overflow, "sparse": sparse}


def analytic_face(face, size, radius):
    """Z-buffer of a camera-centred sphere, written out per face without library helpers."""
    assert face in ("front", "back", "right", "left", "up", "down")
    z = np.empty((size, size))
    for i in range(size):
        for j in range(size):
            a = (j + 0.5) / size * 2 - 1
            b = 1 - (i + 0.5) / size * 2
            # any in-plane axes give the same cosine: 1 / |(a, b, 1)|
            z[i, j] = radius / math.sqrt(1 + a * a + b * b)
    return CubeDepthFace(face, z)
