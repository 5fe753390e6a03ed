"""Gridding of point values and ESRI ASCII grid I/O."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .interpolate import (
    DEFAULT_K_MAX,
    KrigingFallbackWarning,
    VariogramModel,
    fit_variogram,
    idw_interpolate,
    kriging_interpolate,
)
from .kdtree import SpatialIndex

NODATA = -9999.0


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float]  # lower-left corner
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValidationError("cell_size must be > 0")
        if self.nx < 1 or self.ny < 1:
            raise ValidationError("grid needs nx, ny >= 1")

    @classmethod
    def covering(cls, points, cell_size: float, pad: float = 0.0) -> "GridSpec":
        pts = np.asarray(points, dtype=float)
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        nx = max(1, int(np.ceil((hi[0] - lo[0]) / cell_size)))
        ny = max(1, int(np.ceil((hi[1] - lo[1]) / cell_size)))
        return cls((float(lo[0]), float(lo[1])), float(cell_size), nx, ny)

    def cell_centers(self) -> np.ndarray:
        """ny x nx x 2 array of centers; row 0 is the northernmost row."""
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.nx) + 0.5) * self.cell_size
        ys = y0 + (self.ny - np.arange(self.ny) - 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True, eq=False)
class RasterLayer:
    grid: GridSpec
    values: np.ndarray  # ny x nx, row 0 north; NaN marks masked cells
    variance: np.ndarray | None = None
    fallback_cells: int = 0


def rasterize(index: SpatialIndex, values, grid: GridSpec, method: str = "idw", **params) -> RasterLayer:
    """Interpolate point values at every cell center of ``grid``.

    ``params``: ``power`` and ``k_max`` for IDW; ``model`` (a fitted
    :class:`VariogramModel`, fitted on the fly when absent), ``kind``,
    ``n_lags`` and ``k_max`` for kriging.
    """
    values = np.asarray(values, dtype=float)
    centers = grid.cell_centers()
    out = np.full((grid.ny, grid.nx), np.nan)
    var = None
    k_max = int(params.get("k_max", DEFAULT_K_MAX))
    fallbacks = 0
    if method == "idw":
        power = float(params.get("power", 2.0))
        for r in range(grid.ny):
            for c in range(grid.nx):
                try:
                    out[r, c] = idw_interpolate(index, values, centers[r, c], power, k_max)
                except (ValueError, ArithmeticError):
                    pass
    elif method == "kriging":
        model = params.get("model")
        if model is None:
            model = fit_variogram(index, values, params.get("kind", "spherical"), int(params.get("n_lags", 12)))
        var = np.full_like(out, np.nan)
        for r in range(grid.ny):
            for c in range(grid.nx):
                try:
                    with warnings.catch_warnings(record=True) as caught:
                        warnings.simplefilter("always", KrigingFallbackWarning)
                        out[r, c], var[r, c] = kriging_interpolate(index, values, model, centers[r, c], k_max)
                    fallbacks += sum(issubclass(w.category, KrigingFallbackWarning) for w in caught)
                except (ValueError, ArithmeticError):
                    pass
        if fallbacks:
            warnings.warn(f"{fallbacks} cells fell back to IDW", KrigingFallbackWarning, stacklevel=2)
    else:
        raise ValidationError(f"unknown interpolation method {method!r}")
    return RasterLayer(grid, out, var, fallbacks)


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def write_ascii_grid(layer: RasterLayer | np.ndarray, path, grid: GridSpec | None = None) -> None:
    """ESRI ASCII grid; NaN cells are written as NODATA (-9999)."""
    if isinstance(layer, RasterLayer):
        grid, values = layer.grid, layer.values
    else:
        values = np.asarray(layer, dtype=float)
        if grid is None:
            raise ValidationError("grid spec required when writing a bare array")
    lines = [
        f"ncols {grid.nx}",
        f"nrows {grid.ny}",
        f"xllcorner {_fmt(grid.origin[0])}",
        f"yllcorner {_fmt(grid.origin[1])}",
        f"cellsize {_fmt(grid.cell_size)}",
        f"NODATA_value {_fmt(NODATA)}",
    ]
    for row in values:
        lines.append(" ".join(_fmt(NODATA) if not np.isfinite(v) else _fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ascii_grid(path) -> RasterLayer:
    text = Path(path).read_text().split("\n")
    header = {}
    i = 0
    while i < len(text) and text[i].split() and not _is_number(text[i].split()[0]):
        key, val = text[i].split()[:2]
        header[key.lower()] = val
        i += 1
    grid = GridSpec(
        (float(header["xllcorner"]), float(header["yllcorner"])),
        float(header["cellsize"]),
        int(header["ncols"]),
        int(header["nrows"]),
    )
    nodata = float(header.get("nodata_value", NODATA))
    vals = np.array([[float(t) for t in line.split()] for line in text[i:] if line.strip()])
    vals = vals.reshape(grid.ny, grid.nx)
    vals[vals == nodata] = np.nan
    return RasterLayer(grid, vals)


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True
