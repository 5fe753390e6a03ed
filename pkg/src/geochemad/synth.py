"""Synthetic geochemical surveys with planted mineralisation halos.

Background log-concentrations are built from smooth Gaussian random fields
(white noise smoothed by a Gaussian kernel), mixed through random loadings so
elements are correlated, plus per-element regional fields, per-element means
and white measurement noise. Around each deposit the target element and its
pathfinders are multiplied by ``max(1, E * exp(-d^2 / (2 (r/2)^2)))`` for
samples within the halo radius ``r``.

Examples
--------
>>> survey, deposits, truth = generate_survey(SynthConfig(n_samples=200, seed=1))
>>> len(survey), len(deposits)
(200, 8)
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .geodata import DepositSite, ElementDescriptor, Sample, Survey, write_deposits_csv, write_survey_csv

DEFAULT_ELEMENTS = (
    ("Au", "ppb", 5.0),
    ("Ag", "ppm", 0.2),
    ("As", "ppm", 8.0),
    ("Cu", "ppm", 30.0),
    ("Pb", "ppm", 15.0),
    ("Zn", "ppm", 60.0),
    ("Sb", "ppm", 0.5),
    ("W", "ppm", 2.0),
    ("Bi", "ppm", 0.3),
    ("Mo", "ppm", 1.0),
    ("Ni", "ppm", 25.0),
    ("Co", "ppm", 10.0),
)


class SynthWarning(UserWarning):
    """Raised when planted halos stop being rare."""


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings. Lengths are in the same planar units as positions (degrees)."""

    n_samples: int = 2000
    width: float = 1.0
    height: float = 1.0
    origin: tuple[float, float] = (119.0, -28.0)
    n_elements: int = 12
    correlation_range: float = 0.1
    n_factors: int = 3
    factor_scale: float = 0.6
    regional_scale: float = 0.5
    n_deposits: int = 8
    halo_radius: float = 0.04
    enrichment_factor: float = 6.0
    target_element: int = 0
    pathfinders: tuple[int, ...] = (2, 6, 8)
    noise_level: float = 0.25
    jitter: float = 0.4
    seed: int = 42
    element_table: tuple = field(default=DEFAULT_ELEMENTS, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "pathfinders", tuple(int(v) for v in self.pathfinders))
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("extent must be positive")
        if not 1 <= self.n_elements <= len(self.element_table):
            raise ConfigError(f"n_elements must lie in [1, {len(self.element_table)}]")
        if self.enrichment_factor <= 1:
            raise ConfigError("enrichment_factor must be > 1")
        if self.halo_radius <= 0 or self.correlation_range <= 0:
            raise ConfigError("halo_radius and correlation_range must be > 0")
        if self.n_deposits < 0:
            raise ConfigError("n_deposits must be >= 0")
        for i in (self.target_element,) + self.pathfinders:
            if not 0 <= i < self.n_elements:
                raise ConfigError(f"element index {i} out of range")
        if not 0 <= self.jitter < 0.5:
            raise ConfigError("jitter must lie in [0, 0.5)")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    deposit_positions: np.ndarray
    in_halo: np.ndarray
    sample_ids: tuple[str, ...]
    halo_radius: float


def jittered_grid(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """N positions: one per cell of a near-square grid, randomly displaced inside the cell."""
    aspect = cfg.width / cfg.height
    nx = max(1, math.ceil(math.sqrt(cfg.n_samples * aspect)))
    ny = math.ceil(cfg.n_samples / nx)
    cells = np.sort(rng.choice(nx * ny, cfg.n_samples, replace=False))
    iy, ix = np.divmod(cells, nx)
    jit = rng.uniform(-cfg.jitter, cfg.jitter, size=(cfg.n_samples, 2))
    x = cfg.origin[0] + (ix + 0.5 + jit[:, 0]) * cfg.width / nx
    y = cfg.origin[1] + (iy + 0.5 + jit[:, 1]) * cfg.height / ny
    return np.column_stack([x, y])


def smooth_fields(cfg: SynthConfig, positions: np.ndarray, n_fields: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance smooth random fields sampled at ``positions``; shape (n_fields, N)."""
    res = cfg.correlation_range / 4.0
    pad = 3.0 * cfg.correlation_range
    nx = int(math.ceil((cfg.width + 2 * pad) / res)) + 1
    ny = int(math.ceil((cfg.height + 2 * pad) / res)) + 1
    col = (positions[:, 0] - cfg.origin[0] + pad) / res
    row = (positions[:, 1] - cfg.origin[1] + pad) / res
    out = np.empty((n_fields, len(positions)))
    for f in range(n_fields):
        noise = rng.standard_normal((ny, nx))
        grid = ndimage.gaussian_filter(noise, sigma=cfg.correlation_range / res, mode="reflect")
        grid = (grid - grid.mean()) / grid.std()
        out[f] = ndimage.map_coordinates(grid, [row, col], order=1, mode="nearest")
    return out


def _place_deposits(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    inset_x = min(cfg.halo_radius, cfg.width / 4)
    inset_y = min(cfg.halo_radius, cfg.height / 4)
    x = rng.uniform(cfg.origin[0] + inset_x, cfg.origin[0] + cfg.width - inset_x, cfg.n_deposits)
    y = rng.uniform(cfg.origin[1] + inset_y, cfg.origin[1] + cfg.height - inset_y, cfg.n_deposits)
    return np.column_stack([x, y])


def enrichment(positions: np.ndarray, deposits: np.ndarray, cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample multiplicative factor (>= 1) and nearest-deposit distance."""
    if len(deposits) == 0:
        return np.ones(len(positions)), np.full(len(positions), np.inf)
    d = np.sqrt(((positions[:, None, :] - deposits[None, :, :]) ** 2).sum(-1))
    sigma = cfg.halo_radius / 2.0
    raw = cfg.enrichment_factor * np.exp(-(d**2) / (2.0 * sigma**2))
    raw = np.where(d <= cfg.halo_radius, raw, 1.0)
    return np.maximum(1.0, raw.max(axis=1)), d.min(axis=1)


def generate_survey(config: SynthConfig | None = None, plant: bool = True):
    """Generate ``(Survey, deposits, GroundTruth)``.

    With ``plant=False`` the identical random draw is returned without
    enrichment, which lets tests isolate the effect of planting.
    """
    cfg = config or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    c = cfg.n_elements
    table = cfg.element_table[:c]
    positions = jittered_grid(cfg, rng)
    factors = smooth_fields(cfg, positions, cfg.n_factors, rng)
    regional = smooth_fields(cfg, positions, c, rng)
    loadings = rng.normal(0.0, cfg.factor_scale, size=(c, cfg.n_factors))
    noise = rng.standard_normal((len(positions), c))
    deposits = _place_deposits(cfg, rng)

    log_means = np.log([m for _, _, m in table])
    logc = log_means + (loadings @ factors).T + cfg.regional_scale * regional.T + cfg.noise_level * noise
    factor, nearest = enrichment(positions, deposits, cfg)
    if plant:
        for e in (cfg.target_element,) + cfg.pathfinders:
            logc[:, e] += np.log(factor)
    values = np.exp(logc)

    in_halo = nearest <= cfg.halo_radius
    if in_halo.mean() > 0.5:
        warnings.warn(f"{in_halo.mean():.0%} of samples lie inside halos; anomalies are no longer rare",
                      SynthWarning, stacklevel=2)

    width = len(str(cfg.n_samples))
    ids = tuple(f"S{i:0{width}d}" for i in range(1, len(positions) + 1))
    # round to realistic assay / GPS precision so the CSV is compact
    positions = np.round(positions, 6)
    values = np.array([[float(f"{v:.6g}") for v in row] for row in values])
    samples = tuple(
        Sample(ids[i], "soil", (float(positions[i, 0]), float(positions[i, 1])),
               tuple(values[i].tolist()), (False,) * c)
        for i in range(len(positions))
    )
    elements = tuple(ElementDescriptor(sym, unit) for sym, unit, _ in table)
    survey = Survey(samples, elements)
    width_d = len(str(max(cfg.n_deposits, 1)))
    sites = [
        DepositSite(f"D{j + 1:0{width_d}d}", "SYNTH", (float(round(x, 6)), float(round(y, 6))))
        for j, (x, y) in enumerate(deposits)
    ]
    truth = GroundTruth(np.array([s.position for s in sites]).reshape(-1, 2),
                        halo_flags(positions, sites, cfg.halo_radius), ids, cfg.halo_radius)
    return survey, sites, truth


def halo_flags(positions: np.ndarray, deposits, radius: float) -> np.ndarray:
    """True for samples within ``radius`` of any deposit."""
    dep = np.array([d.position for d in deposits], dtype=float).reshape(-1, 2)
    if len(dep) == 0:
        return np.zeros(len(positions), dtype=bool)
    d = np.sqrt(((positions[:, None, :] - dep[None, :, :]) ** 2).sum(-1))
    return d.min(axis=1) <= radius


def write_ground_truth_csv(truth: GroundTruth, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["SAMPLEID", "in_halo"])
        for sid, flag in zip(truth.sample_ids, truth.in_halo):
            w.writerow([sid, int(flag)])


def read_ground_truth_csv(path) -> dict[str, bool]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return {row["SAMPLEID"]: row["in_halo"] == "1" for row in csv.DictReader(fh)}


def write_synthetic(config: SynthConfig, out_dir, prefix: str = "synth") -> dict[str, Path]:
    """Write survey, deposit and ground-truth CSVs; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    survey, deposits, truth = generate_survey(config)
    paths = {
        "survey": out / f"{prefix}_survey.csv",
        "deposits": out / f"{prefix}_deposits.csv",
        "ground_truth": out / f"{prefix}_ground_truth.csv",
    }
    write_survey_csv(survey, paths["survey"])
    write_deposits_csv(deposits, paths["deposits"])
    write_ground_truth_csv(truth, paths["ground_truth"])
    return paths
