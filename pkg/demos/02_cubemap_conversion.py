"""
From cube-face z-buffers to an equirectangular depth map
========================================================

Renderers usually hand back planar z per cube face. Converting to a
panorama means turning z into range along each ray and resampling.
A sphere of radius r is the cleanest check: every valid output pixel
should read r.
"""

import numpy as np

from panodepth import ErpGrid
from panodepth.curate import curate_sample, encode_faces
from panodepth.sphere import cube_zbuffer_to_erp, sphere_faces

grid = ErpGrid(32, 64)

for names in (("front", "back", "left", "right"), None):
    faces = sphere_faces(5.0, 48) if names is None else sphere_faces(5.0, 48, names)
    erp = cube_zbuffer_to_erp(faces, grid)
    label = "all six faces" if names is None else "four side faces"
    print(f"{label:16s} coverage {erp.n_valid / erp.values.size:6.1%}  "
          f"max |depth - 5| {np.abs(erp.valid_values() - 5.0).max():.2e}")

# the same faces after 16-bit storage (1/512 m steps), then through curation
verdict, erp = curate_sample(encode_faces(sphere_faces(5.0, 48)), grid)
print("\nafter uint16 round trip, max error", np.abs(erp.valid_values() - 5.0).max())
print("verdict:", verdict)

# a scene that reaches past the storable range is dropped
print("radius 130:", curate_sample(encode_faces(sphere_faces(130.0, 48)), grid)[0])
