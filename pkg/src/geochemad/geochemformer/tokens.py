"""Neighbourhood token construction for spatial context learning.

For sample i the Stage-1 sequence is ``[e, q_i, t_1, ..., t_K]``: a target
element token, a query token built from the sample's own normalised
coordinates, and one token per nearest neighbour carrying its offset
(divided by the average sampling distance) and its full feature vector. The
sample itself is never among its neighbours, so its own values cannot leak
into the prediction of its target value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..compositional import CompositionMatrix
from ..errors import ConfigError, ValidationError
from ..spatial import SpatialIndex, average_sampling_distance


@dataclass(frozen=True)
class NeighborToken:
    offset: tuple[float, float]
    features: np.ndarray


@dataclass(frozen=True)
class SclSequence:
    element_token_id: int
    query_coords: tuple[float, float]
    neighbors: tuple[NeighborToken, ...]
    mask: tuple[bool, ...]  # True marks padding
    neighbor_index: tuple[int, ...]


@dataclass(frozen=True)
class CoordinateFrame:
    """Normalisation constants: centroid and std for query coords, spacing for offsets."""

    center: np.ndarray
    scale: np.ndarray
    spacing: float

    @classmethod
    def fit(cls, positions: np.ndarray, index: SpatialIndex | None = None) -> "CoordinateFrame":
        positions = np.asarray(positions, dtype=float)
        if len(positions) < 2:
            raise ValidationError("spatial context needs at least two samples")
        index = index or SpatialIndex(positions)
        spacing = average_sampling_distance(index)
        scale = positions.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        if not spacing > 0:
            spacing = 1.0
        return cls(positions.mean(axis=0), scale, float(spacing))

    def normalize(self, positions: np.ndarray) -> np.ndarray:
        return (np.asarray(positions, dtype=float) - self.center) / self.scale


@dataclass(frozen=True)
class TokenBatch:
    """Dense Stage-1 inputs for a whole survey.

    ``tokens`` is (N, K, 2 + C) holding ``[dx, dy, f]`` per neighbour (zeros
    under padding), ``mask`` (N, K) is True at padding and ``query`` (N, 2)
    holds normalised coordinates.
    """

    query: np.ndarray
    tokens: np.ndarray
    mask: np.ndarray
    neighbor_index: np.ndarray

    def __len__(self):
        return len(self.query)

    def rows(self, idx) -> "TokenBatch":
        return TokenBatch(self.query[idx], self.tokens[idx], self.mask[idx], self.neighbor_index[idx])


def neighbor_table(index: SpatialIndex, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(N, K) neighbour indices and distances, self excluded, -1 / inf padded."""
    if k < 1:
        raise ConfigError("K must be >= 1")
    if len(index) < 2:
        raise ValidationError("spatial context needs at least two samples")
    return index.query_many(index.points, k, exclude_self=True)


def build_token_batch(features: np.ndarray, positions: np.ndarray, k: int, frame: CoordinateFrame,
                      index: SpatialIndex | None = None, neighbors: np.ndarray | None = None) -> TokenBatch:
    features = np.asarray(features, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if len(features) != len(positions):
        raise ValidationError("features and positions differ in length")
    if neighbors is None:
        index = index or SpatialIndex(positions)
        neighbors, _ = neighbor_table(index, k)
    n, c = features.shape
    mask = neighbors < 0
    safe = np.where(mask, 0, neighbors)
    offsets = (positions[safe] - positions[:, None, :]) / frame.spacing
    tokens = np.concatenate([offsets, features[safe]], axis=-1)
    tokens[mask] = 0.0
    return TokenBatch(frame.normalize(positions), tokens, mask, neighbors)


def build_neighborhood_tokens(survey_matrix, index: SpatialIndex, sample: int, k: int, target_element: int,
                              frame: CoordinateFrame | None = None) -> SclSequence:
    """Stage-1 sequence for one sample, neighbours nearest first."""
    data = survey_matrix.data if isinstance(survey_matrix, CompositionMatrix) else np.asarray(survey_matrix)
    if len(index) < 2:
        raise ValidationError("spatial context needs at least two samples")
    if k < 1:
        raise ConfigError("K must be >= 1")
    if not 0 <= target_element < data.shape[1]:
        raise ConfigError(f"target element {target_element} out of range")
    frame = frame or CoordinateFrame.fit(index.points, index)
    hits = index.query(index.points[sample], k, exclude=sample)
    origin = index.points[sample]
    toks, mask, nbr = [], [], []
    for i, _ in hits:
        off = (index.points[i] - origin) / frame.spacing
        toks.append(NeighborToken((float(off[0]), float(off[1])), data[i].copy()))
        mask.append(False)
        nbr.append(int(i))
    while len(toks) < k:
        toks.append(NeighborToken((0.0, 0.0), np.zeros(data.shape[1])))
        mask.append(True)
        nbr.append(-1)
    q = frame.normalize(origin)
    return SclSequence(int(target_element), (float(q[0]), float(q[1])), tuple(toks), tuple(mask), tuple(nbr))


def canonical_order(tokens: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-row permutation sorting neighbour tokens by content, padding last.

    Applying it before the encoder makes the Stage-1 output depend only on the
    set of neighbour tokens, bit for bit, whatever order they arrive in.
    """
    keys = [tokens[..., j] for j in range(tokens.shape[-1] - 1, -1, -1)] + [mask]
    return np.lexsort(keys, axis=-1)
