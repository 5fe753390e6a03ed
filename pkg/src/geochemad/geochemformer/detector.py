"""GeoChemFormer (T2) and the context-free transformer baseline (T1) as scorers."""

from __future__ import annotations

import numpy as np

from ..detectors.base import AnomalyScorer, as_array
from ..errors import ConfigError, ShapeError
from ..spatial import SpatialIndex
from .model import EdmModel, GeoChemFormerConfig, SclModel
from .tokens import CoordinateFrame, build_token_batch
from .training import edm_score, edm_train, scl_predict, scl_train


def _params(prefix: str, module) -> dict:
    return {f"{prefix}.{k}": v for k, v in module.state_dict().items()}


def _strip(prefix: str, state: dict) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in state.items() if k.startswith(prefix + ".")}


class GeoChemFormerDetector(AnomalyScorer):
    """Two-stage model: spatial context learning, then element reconstruction.

    ``fit(X, coords, target)`` takes the preprocessed matrix, sample
    positions and either the index of the target element column in ``X`` or
    an explicit vector of target values (used when the feature space has no
    target column, e.g. after PCA). The score is the Stage-2 reconstruction
    error, with q' recomputed from the neighbourhoods of the scored survey.
    """

    kind = "geochemformer"
    Config = GeoChemFormerConfig
    spatial = True

    def _target(self, X, target) -> tuple[np.ndarray, int, int]:
        if target is None:
            target = 0
        if np.ndim(target) == 0:
            t = int(target)
            if not 0 <= t < X.shape[1]:
                raise ConfigError(f"target element {t} out of range for {X.shape[1]} columns")
            return X[:, t].copy(), t, X.shape[1]
        y = np.asarray(target, dtype=float).reshape(-1)
        if len(y) != len(X) or not np.all(np.isfinite(y)):
            raise ShapeError("geochemformer", "target vector must be finite and aligned with the rows")
        # the target is outside the feature space: give it its own embedding slot
        return y, X.shape[1], X.shape[1] + 1

    def fit(self, X, coords=None, target=None):
        X = as_array(X)
        if coords is None:
            raise ConfigError("geochemformer needs sample coordinates")
        coords = np.asarray(coords, dtype=float)
        y, self.target_id_, self.n_targets_ = self._target(X, target)
        index = SpatialIndex(coords)
        res = scl_train(X, coords, y, self.config, self.target_id_, self.n_targets_, index)
        self.scl_ = res.model
        self.frame_ = res.frame
        self.scl_history_ = res.history
        self.context_ = res.context
        self.edm_, self.edm_history_ = edm_train(X, res.context, self.config)
        self.n_features_ = X.shape[1]
        self._fit_key = (X.tobytes(), coords.tobytes())
        self.fitted = True
        return self

    def spatial_context(self, X, coords) -> np.ndarray:
        self._check_fitted()
        X = as_array(X)
        coords = np.asarray(coords, dtype=float)
        if getattr(self, "_fit_key", None) == (X.tobytes(), coords.tobytes()):
            return self.context_.vectors
        batch = build_token_batch(X, coords, self.config.k, self.frame_, SpatialIndex(coords))
        return scl_predict(self.scl_, batch, self.target_id_)[0]

    def score(self, X, coords=None):
        self._check_fitted()
        if coords is None:
            raise ConfigError("geochemformer needs sample coordinates to score")
        X = as_array(X)
        if X.shape[1] != self.n_features_:
            raise ShapeError("geochemformer", f"expected {self.n_features_} features, got {X.shape[1]}")
        return edm_score(self.edm_, X, self.spatial_context(X, coords))

    def get_state(self):
        state = {
            "n_features": np.array(self.n_features_),
            "target_id": np.array(self.target_id_),
            "n_targets": np.array(self.n_targets_),
            "frame.center": self.frame_.center,
            "frame.scale": self.frame_.scale,
            "frame.spacing": np.array(self.frame_.spacing),
        }
        state.update(_params("scl", self.scl_))
        state.update(_params("edm", self.edm_))
        return state

    def set_state(self, state):
        self.n_features_ = int(state["n_features"])
        self.target_id_ = int(state["target_id"])
        self.n_targets_ = int(state["n_targets"])
        self.frame_ = CoordinateFrame(np.asarray(state["frame.center"], dtype=float),
                                      np.asarray(state["frame.scale"], dtype=float),
                                      float(state["frame.spacing"]))
        rng = np.random.default_rng(0)
        self.scl_ = SclModel(self.n_features_, self.n_targets_, self.config, rng)
        self.scl_.load_state_dict(_strip("scl", state))
        self.edm_ = EdmModel(self.n_features_, self.config.d_model, self.config, rng)
        self.edm_.load_state_dict(_strip("edm", state))
        self.scl_.eval()
        self.edm_.eval()
        self._fit_key = None
        self.fitted = True


class T1Detector(AnomalyScorer):
    """Stage 2 without the geo-context token: a plain element-token transformer."""

    kind = "t1"
    Config = GeoChemFormerConfig

    def fit(self, X, coords=None, target=None):
        X = as_array(X)
        self.edm_, self.history_ = edm_train(X, None, self.config)
        self.n_features_ = X.shape[1]
        self.fitted = True
        return self

    def score(self, X, coords=None):
        self._check_fitted()
        return edm_score(self.edm_, as_array(X))

    def get_state(self):
        state = {"n_features": np.array(self.n_features_)}
        state.update(_params("edm", self.edm_))
        return state

    def set_state(self, state):
        self.n_features_ = int(state["n_features"])
        self.edm_ = EdmModel(self.n_features_, None, self.config, np.random.default_rng(0))
        self.edm_.load_state_dict(_strip("edm", state))
        self.edm_.eval()
        self.fitted = True
