"""
Why the left and right edges need to see each other
===================================================

A panorama's first and last columns are neighbours on the sphere.
Zero padding pretends they are not, so a filter applied near the seam
sees a wall of zeros. Circular padding wraps columns and, for the rows
above the poles, reads the row on the opposite meridian.
"""

import numpy as np

from panodepth import ErpGrid
from panodepth.pad import box_kernel, circular_pad, conv2d, seam_discrepancy
from panodepth.sphere import smooth_spherical_field

x = np.array([[1, 2, 3, 4], [5, 6, 7, 8]])
print("circular pad of a 2x4 map, p=1:")
print(circular_pad(x, 1))

grid = ErpGrid(16, 32)
field = smooth_spherical_field(grid, np.random.default_rng(7))
print("\nseam jump of the input    ", round(seam_discrepancy(field), 4))
for mode in ("zero", "circular"):
    print(f"after 3x3 box, {mode:8s}  ", round(seam_discrepancy(conv2d(field, box_kernel(3), mode)), 4))

# circular padding commutes with yaw (a roll of the columns)
k = np.random.default_rng(0).normal(size=(3, 3, 1, 1))
rolled = conv2d(np.roll(field, 5, axis=1), k, "circular")
print("\nroll equivariance error", np.abs(rolled - np.roll(conv2d(field, k, "circular"), 5, axis=1)).max())
