"""Spatial indexing, interpolation and gridding.

Distances are planar in the raw coordinate units (degrees for GDA2020
longitude/latitude); study areas are small enough for this to be adequate.
"""

from .interpolate import (
    DEFAULT_K_MAX,
    EmpiricalVariogram,
    KrigingFallbackWarning,
    VariogramModel,
    empirical_variogram,
    fit_variogram,
    idw_interpolate,
    kriging_interpolate,
    kriging_weights,
)
from .kdtree import SpatialIndex, average_sampling_distance, brute_force_knn, build_index, knn_query
from .raster import NODATA, GridSpec, RasterLayer, rasterize, read_ascii_grid, write_ascii_grid

__all__ = [
    "DEFAULT_K_MAX",
    "EmpiricalVariogram",
    "GridSpec",
    "KrigingFallbackWarning",
    "NODATA",
    "RasterLayer",
    "SpatialIndex",
    "VariogramModel",
    "average_sampling_distance",
    "brute_force_knn",
    "build_index",
    "empirical_variogram",
    "fit_variogram",
    "idw_interpolate",
    "knn_query",
    "kriging_interpolate",
    "kriging_weights",
    "rasterize",
    "read_ascii_grid",
    "write_ascii_grid",
]
