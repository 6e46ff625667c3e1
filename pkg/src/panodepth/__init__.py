"""Equirectangular depth tools: spherical geometry, circular padding,
scale-invariant disparity losses, evaluation and dataset curation."""

__version__ = "0.1.0"

from .maps import DepthMap, DisparityMap, ErpGrid

__all__ = ["DepthMap", "DisparityMap", "ErpGrid", "__version__"]
