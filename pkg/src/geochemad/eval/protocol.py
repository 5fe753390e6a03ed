"""Repeated-background-sampling evaluation.

Each matched deposit contributes the score of its nearest sample as a fixed
positive. Every run draws a fresh background set, away from all deposits, and
computes AUC, AP and PR-AUC. DTD does not depend on the background and is
computed once.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, EvaluationError
from ..spatial import SpatialIndex, average_sampling_distance
from .metrics import average_precision, distance_to_deposits, pr_auc, roc_auc


class BackgroundSaturationWarning(UserWarning):
    """The eligible background pool was smaller than requested."""


@dataclass(frozen=True)
class EvalProtocol:
    n_runs: int = 20
    bg_per_pos: int = 10
    deposit_match_radius: float = 5.0
    exclusion_radius: float = 1.0
    dtd_top_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if self.bg_per_pos < 1:
            raise ConfigError("bg_per_pos must be >= 1")
        if self.deposit_match_radius <= 0 or self.exclusion_radius <= 0:
            raise ConfigError("protocol radii must be > 0")
        if not 0 < self.dtd_top_fraction <= 1:
            raise ConfigError("dtd_top_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class PositiveAssignment:
    scores: np.ndarray
    sample_index: np.ndarray
    matched: tuple[str, ...]
    dropped: tuple[str, ...]


@dataclass(frozen=True)
class BackgroundDraw:
    indices: np.ndarray
    saturated: bool


@dataclass
class EvalReport:
    detector: str
    config_hash: str
    protocol: dict
    auc: list[float]
    ap: list[float]
    pr_auc: list[float]
    dtd: float
    n_matched: int
    n_dropped: int
    dropped: list[str] = field(default_factory=list)
    saturated_runs: int = 0

    @staticmethod
    def _agg(values) -> tuple[float, float]:
        arr = np.asarray(values, dtype=float)
        return float(arr.mean()), float(arr.var())

    @property
    def auc_mean(self) -> float:
        return self._agg(self.auc)[0]

    @property
    def auc_var(self) -> float:
        return self._agg(self.auc)[1]

    def aggregates(self) -> dict:
        out = {}
        for name in ("auc", "ap", "pr_auc"):
            mean, var = self._agg(getattr(self, name))
            out[f"{name}_mean"] = mean
            out[f"{name}_var"] = var
        out["dtd"] = self.dtd
        return out

    def to_dict(self) -> dict:
        return {
            "detector": self.detector,
            "config_hash": self.config_hash,
            "protocol": self.protocol,
            "runs": {"auc": list(self.auc), "ap": list(self.ap), "pr_auc": list(self.pr_auc)},
            "aggregates": self.aggregates(),
            "deposits": {"matched": self.n_matched, "dropped": self.n_dropped, "dropped_ids": list(self.dropped)},
            "saturated_runs": self.saturated_runs,
        }


def _deposit_xy(deposits) -> np.ndarray:
    if isinstance(deposits, np.ndarray):
        return deposits.reshape(-1, 2).astype(float)
    return np.array([d.position for d in deposits], dtype=float).reshape(-1, 2)


def _deposit_ids(deposits) -> list[str]:
    if isinstance(deposits, np.ndarray):
        return [str(i) for i in range(len(deposits))]
    return [d.site_id for d in deposits]


def assign_positive_scores(scores, index: SpatialIndex, deposits, protocol: EvalProtocol,
                           avg_distance: float | None = None) -> PositiveAssignment:
    """Score each deposit by its nearest sample, if one lies within the match radius."""
    scores = np.asarray(scores, dtype=float)
    if len(scores) != len(index):
        raise EvaluationError("scores are not aligned with the spatial index")
    dep = _deposit_xy(deposits)
    ids = _deposit_ids(deposits)
    if len(dep) == 0:
        raise EvaluationError("no deposits supplied")
    avg = average_sampling_distance(index) if avg_distance is None else avg_distance
    nn, dist = index.query_many(dep, 1)
    ok = dist[:, 0] <= protocol.deposit_match_radius * avg
    if not ok.any():
        raise EvaluationError("no deposit lies within the match radius of any sample")
    rows = nn[ok, 0]
    return PositiveAssignment(
        scores=scores[rows].copy(),
        sample_index=rows,
        matched=tuple(i for i, k in zip(ids, ok) if k),
        dropped=tuple(i for i, k in zip(ids, ok) if not k),
    )


def eligible_background(index: SpatialIndex, deposits, protocol: EvalProtocol,
                        avg_distance: float | None = None) -> np.ndarray:
    """Indices of samples farther than the exclusion radius from every deposit."""
    dep = _deposit_xy(deposits)
    avg = average_sampling_distance(index) if avg_distance is None else avg_distance
    if len(dep) == 0:
        return np.arange(len(index))
    dep_index = SpatialIndex(dep)
    _, dist = dep_index.query_many(index.points, 1)
    return np.flatnonzero(dist[:, 0] > protocol.exclusion_radius * avg)


def sample_background(index: SpatialIndex, deposits, protocol: EvalProtocol, run_seed: int,
                      n_positives: int, pool: np.ndarray | None = None) -> BackgroundDraw:
    """Draw ``bg_per_pos * n_positives`` eligible samples without replacement."""
    if pool is None:
        pool = eligible_background(index, deposits, protocol)
    want = protocol.bg_per_pos * n_positives
    if len(pool) == 0:
        raise EvaluationError("no eligible background samples")
    if len(pool) < want:
        warnings.warn(f"background pool has {len(pool)} samples, {want} requested; using all",
                      BackgroundSaturationWarning, stacklevel=2)
        return BackgroundDraw(np.sort(pool), True)
    rng = np.random.default_rng(run_seed)
    return BackgroundDraw(np.sort(rng.choice(pool, want, replace=False)), False)


def evaluate_scores(scores, positions, deposits, protocol: EvalProtocol | None = None,
                    detector: str = "", config_hash: str = "") -> EvalReport:
    """Run the protocol on a precomputed per-sample score vector."""
    protocol = protocol or EvalProtocol()
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise EvaluationError(f"{detector or 'detector'} produced non-finite scores")
    index = SpatialIndex(np.asarray(positions, dtype=float))
    avg = average_sampling_distance(index)
    positives = assign_positive_scores(scores, index, deposits, protocol, avg)
    pool = eligible_background(index, deposits, protocol, avg)
    aucs, aps, pras = [], [], []
    saturated = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BackgroundSaturationWarning)
        for r in range(1, protocol.n_runs + 1):
            draw = sample_background(index, deposits, protocol, protocol.seed + r, len(positives.scores), pool)
            saturated += draw.saturated
            bg = scores[draw.indices]
            aucs.append(roc_auc(positives.scores, bg))
            aps.append(average_precision(positives.scores, bg))
            pras.append(pr_auc(positives.scores, bg))
    if saturated:
        warnings.warn(f"background pool saturated in {saturated} run(s)", BackgroundSaturationWarning, stacklevel=2)
    dtd = distance_to_deposits(scores, index.points, _deposit_xy(deposits), protocol.dtd_top_fraction)
    return EvalReport(
        detector=detector,
        config_hash=config_hash,
        protocol=asdict(protocol),
        auc=aucs,
        ap=aps,
        pr_auc=pras,
        dtd=dtd,
        n_matched=len(positives.matched),
        n_dropped=len(positives.dropped),
        dropped=list(positives.dropped),
        saturated_runs=saturated,
    )


def run_protocol(detector, matrix, positions, deposits, protocol: EvalProtocol | None = None) -> EvalReport:
    """Score ``matrix`` with a fitted detector and evaluate against ``deposits``.

    The detector only ever sees the feature matrix and sample positions.
    """
    if not detector.fitted:
        raise EvaluationError(f"{detector.kind} detector is not fitted")
    scores = detector.score(matrix, coords=positions) if detector.spatial else detector.score(matrix)
    return evaluate_scores(scores, positions, deposits, protocol, detector.kind, detector.config_hash())
