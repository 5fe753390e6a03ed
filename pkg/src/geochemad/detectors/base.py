"""Common scorer contract: ``fit(X)`` then ``score(X)``, higher means more anomalous."""

from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np

from ..compositional import CompositionMatrix
from ..errors import ConfigError, ValidationError

KINDS = ("zscore", "mahalanobis", "knn_dist", "isolation_forest", "ocsvm", "ae", "vae", "t1", "geochemformer")


def as_array(x) -> np.ndarray:
    data = x.data if isinstance(x, CompositionMatrix) else x
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"expected an N x C matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("input matrix has NaN or Inf entries")
    return arr


class AnomalyScorer:
    """Base class. Subclasses set ``kind`` and a ``Config`` dataclass.

    ``fit`` accepts optional ``coords`` (N x 2) and ``target`` (index of the
    target element); only spatially aware detectors use them. ``score`` never
    mutates fitted state.
    """

    kind = ""
    Config = None
    spatial = False

    def __init__(self, config=None, **overrides):
        if config is None:
            config = self.Config(**overrides)
        elif overrides:
            config = dataclasses.replace(config, **overrides)
        self.config = config
        self.fitted = False

    @property
    def seed(self) -> int:
        return int(getattr(self.config, "seed", 0))

    def fit(self, X, coords=None, target=None):
        raise NotImplementedError

    def score(self, X, coords=None) -> np.ndarray:
        raise NotImplementedError

    def fit_score(self, X, coords=None, target=None) -> np.ndarray:
        return self.fit(X, coords=coords, target=target).score(X, coords=coords)

    def _check_fitted(self):
        if not self.fitted:
            raise ConfigError(f"{self.kind} detector used before fit")

    # snapshot support: plain dict of arrays / scalars
    def get_state(self) -> dict:
        raise NotImplementedError

    def set_state(self, state: dict):
        raise NotImplementedError

    def config_dict(self) -> dict:
        return dataclasses.asdict(self.config)

    def config_hash(self) -> str:
        blob = json.dumps({"kind": self.kind, "config": self.config_dict()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
