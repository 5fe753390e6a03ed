"""IDW and ordinary kriging over a :class:`SpatialIndex`."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.distance import pdist

from ..errors import FitError, ValidationError
from .kdtree import SpatialIndex

EXACT_TOL = 1e-12
DEFAULT_K_MAX = 32
KRIGING_FALLBACK_VARIANCE = -1.0
MAX_VARIOGRAM_POINTS = 3000


class KrigingFallbackWarning(RuntimeWarning):
    """The kriging system was singular; an IDW estimate was returned instead."""


def idw_interpolate(index: SpatialIndex, values, query, power: float = 2.0, k_max: int = DEFAULT_K_MAX) -> float:
    if power <= 0:
        raise ValidationError("IDW power must be > 0")
    values = np.asarray(values, dtype=float)
    hits = index.query(query, k_max)
    idx = np.array([i for i, _ in hits])
    d = np.array([di for _, di in hits])
    if d[0] < EXACT_TOL:
        return float(values[idx[0]])
    w = d ** (-power)
    return float(np.sum(w * values[idx]) / np.sum(w))


@dataclass(frozen=True)
class VariogramModel:
    kind: str = "spherical"
    nugget: float = 0.0
    sill: float = 1.0
    range_param: float = 1.0
    degenerate: bool = False

    def __post_init__(self):
        if self.kind not in ("spherical", "exponential"):
            raise ValidationError(f"unknown variogram kind {self.kind!r}")
        if self.nugget < 0 or self.sill <= 0 or self.range_param <= 0:
            raise ValidationError("variogram needs nugget >= 0, sill > 0, range > 0")
        if self.sill < self.nugget:
            raise ValidationError("variogram sill must be >= nugget")

    @property
    def partial_sill(self) -> float:
        return self.sill - self.nugget

    def __call__(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        g = _structure(self.kind, h, self.range_param)
        out = self.nugget + self.partial_sill * g
        return np.where(h <= 0, 0.0, out)


def _structure(kind, h, a):
    if kind == "spherical":
        r = np.minimum(h / a, 1.0)
        return 1.5 * r - 0.5 * r**3
    return 1.0 - np.exp(-3.0 * h / a)  # practical range a


@dataclass(frozen=True, eq=False)
class EmpiricalVariogram:
    lags: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray
    edges: np.ndarray


def empirical_variogram(points, values, n_lags: int = 12, max_lag: float | None = None, seed: int = 0):
    """Binned semivariance: mean of half squared differences per lag bin.

    Bins split ``[0, max_lag]`` evenly; ``max_lag`` defaults to half the
    largest pairwise distance. Surveys above ``MAX_VARIOGRAM_POINTS`` points
    are thinned to a seeded random subset of that size.
    """
    pts = np.asarray(points, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(pts) > MAX_VARIOGRAM_POINTS:
        keep = np.sort(np.random.default_rng(seed).choice(len(pts), MAX_VARIOGRAM_POINTS, replace=False))
        pts, v = pts[keep], v[keep]
    d = pdist(pts)
    sq = 0.5 * pdist(v[:, None], "sqeuclidean")
    if max_lag is None:
        max_lag = 0.5 * d.max()
    edges = np.linspace(0.0, max_lag, n_lags + 1)
    which = np.digitize(d, edges[1:-1])  # bin j holds edges[j] <= d < edges[j+1]
    inside = (d > 0) & (d <= max_lag)
    counts = np.bincount(which[inside], minlength=n_lags)
    sums = np.bincount(which[inside], weights=sq[inside], minlength=n_lags)
    lag_sums = np.bincount(which[inside], weights=d[inside], minlength=n_lags)
    ok = counts > 0
    gamma = np.full(n_lags, np.nan)
    lags = 0.5 * (edges[:-1] + edges[1:])
    gamma[ok] = sums[ok] / counts[ok]
    lags[ok] = lag_sums[ok] / counts[ok]
    return EmpiricalVariogram(lags, gamma, counts, edges)


def fit_variogram(index: SpatialIndex, values, kind: str = "spherical", n_lags: int = 12) -> VariogramModel:
    """Fit a nugget + structure model to the binned variogram.

    Residuals are weighted by the square root of the bin pair counts. The
    structured fit competes against a pure-nugget (flat) model by AIC; if the
    flat model wins, the nugget takes the pooled semivariance and the range is
    pinned at its lower bound (half the first lag).
    """
    values = np.asarray(values, dtype=float)
    if len(values) != len(index):
        raise ValidationError("values must align with the index points")
    if len(values) < 10:
        raise FitError("variogram fitting needs at least 10 samples")
    ev = empirical_variogram(index.points, values, n_lags)
    ok = ev.counts > 0
    if ok.sum() < 3:
        raise FitError(f"only {int(ok.sum())} nonempty lag bins; need 3")
    h, g, n = ev.lags[ok], ev.gamma[ok], ev.counts[ok].astype(float)
    lo_range = 0.5 * h[0]
    hi_range = 3.0 * ev.edges[-1]
    gmax = float(g.max())
    if gmax <= 1e-12 * max(1.0, float(np.abs(values).max()) ** 2):
        return VariogramModel(kind, 0.0, 1e-12, lo_range, degenerate=True)
    w = np.sqrt(n)

    def resid(p):
        nugget, psill, a = p
        return w * (nugget + psill * _structure(kind, h, a) - g)

    x0 = [0.1 * g[0], max(gmax - 0.1 * g[0], 1e-12), min(max(0.5 * ev.edges[-1], lo_range * 1.01), hi_range)]
    sol = least_squares(
        resid, x0, bounds=([0.0, 0.0, lo_range], [np.inf, np.inf, hi_range]),
        x_scale=[gmax, gmax, ev.edges[-1]], method="trf",
    )
    nugget, psill, a = (float(t) for t in sol.x)

    flat = float(np.sum(n * g) / n.sum())
    k = len(g)
    sse_struct = max(float(np.sum(sol.fun**2)), 1e-300)
    sse_flat = max(float(np.sum(n * (g - flat) ** 2)), 1e-300)
    aic_struct = k * np.log(sse_struct / k) + 2 * 3
    aic_flat = k * np.log(sse_flat / k) + 2 * 1
    if aic_flat <= aic_struct or psill <= 0.0:
        return VariogramModel(kind, flat, flat, lo_range)
    return VariogramModel(kind, nugget, max(nugget + psill, 1e-12), a)


def kriging_weights(points: np.ndarray, query, model: VariogramModel):
    """Ordinary-kriging weights and Lagrange multiplier for ``query``.

    Solves ``[[G, 1], [1^T, 0]] [w; mu] = [g0; 1]`` with G the pairwise
    semivariances. Returns ``None`` when the system is numerically singular.
    """
    pts = np.asarray(points, dtype=float)
    m = len(pts)
    q = np.asarray(query, dtype=float)
    dd = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    a = np.ones((m + 1, m + 1))
    a[:m, :m] = model(dd)
    a[m, m] = 0.0
    g0 = model(np.sqrt(((pts - q) ** 2).sum(-1)))
    b = np.append(g0, 1.0)
    if np.linalg.cond(a) > 1e12:
        return None
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return None
    return sol[:m], float(sol[m]), g0


def kriging_interpolate(index: SpatialIndex, values, model: VariogramModel, query, k_max: int = DEFAULT_K_MAX):
    """Local ordinary kriging; returns ``(estimate, variance)``.

    A singular system falls back to IDW with variance -1 and emits
    :class:`KrigingFallbackWarning`.
    """
    values = np.asarray(values, dtype=float)
    hits = index.query(query, k_max)
    idx = np.array([i for i, _ in hits])
    res = kriging_weights(index.points[idx], query, model)
    if res is None:
        warnings.warn("singular kriging system; falling back to IDW", KrigingFallbackWarning, stacklevel=2)
        return idw_interpolate(index, values, query, k_max=k_max), KRIGING_FALLBACK_VARIANCE
    w, mu, g0 = res
    est = float(w @ values[idx])
    var = float(w @ g0 + mu)
    return est, max(var, 0.0)
