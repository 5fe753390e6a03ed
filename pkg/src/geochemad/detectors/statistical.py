"""Z-score, Mahalanobis distance and k-nearest-neighbour distance scorers."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericError
from .base import AnomalyScorer, as_array


@dataclass(frozen=True)
class ZScoreConfig:
    target_element: int | None = None
    seed: int = 0


class ZScoreDetector(AnomalyScorer):
    """Score = |z| of the target element, or the max |z| over all columns."""

    kind = "zscore"
    Config = ZScoreConfig

    def fit(self, X, coords=None, target=None):
        X = as_array(X)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        scale = np.maximum(np.abs(self.mean_), 1.0)
        self.std_ = np.where(std <= 1e-12 * scale, 0.0, std)
        if (self.std_ == 0).any():
            warnings.warn(
                f"zscore: {(self.std_ == 0).sum()} zero-variance column(s) excluded", RuntimeWarning, stacklevel=2
            )
        te = self.config.target_element
        if te is not None and not 0 <= te < X.shape[1]:
            raise ConfigError(f"target_element {te} out of range")
        self.fitted = True
        return self

    def score(self, X, coords=None):
        self._check_fitted()
        X = as_array(X)
        live = self.std_ > 0
        te = self.config.target_element
        if te is not None:
            if not live[te]:
                return np.zeros(len(X))
            return np.abs(X[:, te] - self.mean_[te]) / self.std_[te]
        if not live.any():
            return np.zeros(len(X))
        z = np.abs(X[:, live] - self.mean_[live]) / self.std_[live]
        return z.max(axis=1)

    def get_state(self):
        return {"mean": self.mean_, "std": self.std_}

    def set_state(self, state):
        self.mean_, self.std_ = np.asarray(state["mean"]), np.asarray(state["std"])
        self.fitted = True


@dataclass(frozen=True)
class MahalanobisConfig:
    ridge: float = 1e-6
    seed: int = 0


class MahalanobisDetector(AnomalyScorer):
    """sqrt((x - mu)^T (S + eps I)^-1 (x - mu)), eps = ridge * trace(S) / C."""

    kind = "mahalanobis"
    Config = MahalanobisConfig

    def fit(self, X, coords=None, target=None):
        X = as_array(X)
        n, c = X.shape
        self.mean_ = X.mean(axis=0)
        xc = X - self.mean_
        cov = xc.T @ xc / n
        eps = self.config.ridge * np.trace(cov) / c
        cov = cov + eps * np.eye(c)
        try:
            self.chol_ = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise NumericError("covariance is not positive definite after ridge") from None
        self.fitted = True
        return self

    def score(self, X, coords=None):
        self._check_fitted()
        X = as_array(X)
        from scipy.linalg import solve_triangular

        y = solve_triangular(self.chol_, (X - self.mean_).T, lower=True)
        return np.sqrt((y * y).sum(axis=0))

    def get_state(self):
        return {"mean": self.mean_, "chol": self.chol_}

    def set_state(self, state):
        self.mean_, self.chol_ = np.asarray(state["mean"]), np.asarray(state["chol"])
        self.fitted = True


@dataclass(frozen=True)
class KNNConfig:
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("knn k must be >= 1")


class KNNDistanceDetector(AnomalyScorer):
    """Mean Euclidean distance to the k nearest training rows in feature space.

    When scoring the training matrix itself each row's own entry is skipped.
    """

    kind = "knn_dist"
    Config = KNNConfig

    def fit(self, X, coords=None, target=None):
        X = as_array(X)
        if self.config.k >= len(X):
            raise ConfigError(f"knn k={self.config.k} must be < N={len(X)}")
        self.train_ = X.copy()
        self.fitted = True
        return self

    def score(self, X, coords=None, chunk: int = 128):
        self._check_fitted()
        X = as_array(X)
        k = self.config.k
        same = X.shape == self.train_.shape and np.array_equal(X, self.train_)
        out = np.empty(len(X))
        for s in range(0, len(X), chunk):
            block = X[s : s + chunk]
            diff = block[:, None, :] - self.train_[None, :, :]
            d = np.sqrt((diff * diff).sum(-1))
            if same:
                d[np.arange(len(block)), np.arange(s, s + len(block))] = np.inf
            out[s : s + chunk] = np.sort(np.partition(d, k - 1, axis=1)[:, :k], axis=1).mean(axis=1)
        return out

    def get_state(self):
        return {"train": self.train_}

    def set_state(self, state):
        self.train_ = np.asarray(state["train"])
        self.fitted = True


def zscore_score(matrix, target_element: int | None = None) -> np.ndarray:
    return ZScoreDetector(target_element=target_element).fit_score(matrix)


def mahalanobis_score(matrix, ridge: float = 1e-6) -> np.ndarray:
    return MahalanobisDetector(ridge=ridge).fit_score(matrix)


def knn_distance_score(matrix, k: int = 5) -> np.ndarray:
    return KNNDistanceDetector(k=k).fit_score(matrix)
