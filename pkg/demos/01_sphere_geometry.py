"""
Pixels, rays and point clouds on the equirectangular grid
=========================================================

Every pixel centre of an H x 2H panorama is a unit ray. Multiplying a
depth map by those rays gives a point cloud whose norms are the depths.
"""

import numpy as np

from panodepth import DepthMap, ErpGrid
from panodepth.sphere import depth_to_pointcloud, dir_to_pixel, erp_directions, pixel_to_dir

grid = ErpGrid.from_height(8)
print("grid", grid.shape)

# the centre pixel of the top row looks almost straight up, +z is forward
print("ray of (0, 8):", np.round(pixel_to_dir(0, 8, grid), 3))
print("ray of (4, 8):", np.round(pixel_to_dir(4, 8, grid), 3))

# the mapping inverts exactly, column wrap included
rows, cols = dir_to_pixel(erp_directions(grid), grid)
print("max round-trip error:", max(np.abs(rows - np.arange(8)[:, None]).max(),
                                   np.abs(cols - np.arange(16)).max()))

# a room of constant depth 3 becomes a sphere of radius 3
cloud = depth_to_pointcloud(DepthMap(np.full(grid.shape, 3.0)))
print("points:", cloud.points.shape, "norm range:",
      np.linalg.norm(cloud.points, axis=1).min(), np.linalg.norm(cloud.points, axis=1).max())
