"""One-class SVM in its SVDD form, solved by Frank-Wolfe.

For a stationary RBF kernel the one-class SVM and the support vector data
description share a solution. The dual

    min_a  a^T K a - sum_i a_i K_ii   s.t.  sum a = 1,  0 <= a_i <= 1/(nu N)

has a capped simplex as its feasible set, whose linear minimisation oracle
fills the coordinates with the smallest gradient up to the cap. The anomaly
score is the squared kernel distance to the learned center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .base import AnomalyScorer, as_array


@dataclass(frozen=True)
class OCSVMConfig:
    nu: float = 0.1
    gamma: float | None = None  # None -> 1 / n_features
    tol: float = 1e-6
    max_iter: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise ConfigError("ocsvm nu must lie in (0, 1]")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError("ocsvm gamma must be > 0")


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(d2, 0.0))


def capped_simplex_vertex(grad: np.ndarray, cap: float) -> np.ndarray:
    """argmin_s <grad, s> over {sum s = 1, 0 <= s <= cap}; ties by lower index."""
    order = np.lexsort((np.arange(len(grad)), grad))
    s = np.zeros_like(grad)
    remaining = 1.0
    for i in order:
        take = min(cap, remaining)
        s[i] = take
        remaining -= take
        if remaining <= 0:
            break
    return s


def frank_wolfe_svdd(K: np.ndarray, nu: float, tol: float = 1e-6, max_iter: int = 2000):
    """Returns ``(alpha, gap, n_iter, converged)``."""
    n = len(K)
    cap = 1.0 / (nu * n)
    if cap * n < 1.0 - 1e-12:
        raise ConfigError("infeasible box: need nu * N <= N")
    cap = min(cap, 1.0)
    diag = np.diag(K).copy()
    # uniform start is feasible (1/N <= cap) and treats all rows alike
    alpha = np.full(n, 1.0 / n)
    Ka = K @ alpha
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * Ka - diag
        s = capped_simplex_vertex(grad, cap)
        d = s - alpha
        gap = float(-(grad @ d))
        if gap < tol:
            break
        nz = np.flatnonzero(s)
        Ks = K[:, nz] @ s[nz]
        Kd = Ks - Ka
        curv = float(d @ Kd)
        step = 1.0 if curv <= 0 else min(1.0, gap / (2.0 * curv))
        alpha = alpha + step * d
        Ka = Ka + step * Kd
    else:
        grad = 2.0 * Ka - diag
        gap = float(-(grad @ (capped_simplex_vertex(grad, cap) - alpha)))
    np.clip(alpha, 0.0, cap, out=alpha)
    alpha /= alpha.sum()
    return alpha, gap, it, gap < tol


class OCSVMDetector(AnomalyScorer):
    kind = "ocsvm"
    Config = OCSVMConfig

    def fit(self, X, coords=None, target=None):
        X = as_array(X)
        self.gamma_ = self.config.gamma if self.config.gamma is not None else 1.0 / X.shape[1]
        # solve on rows in canonical content order: an unconverged Frank-Wolfe path
        # otherwise depends on input order through floating point summation
        X = X[np.lexsort(X.T[::-1])]
        K = rbf_kernel(X, X, self.gamma_)
        alpha, gap, n_iter, converged = frank_wolfe_svdd(K, self.config.nu, self.config.tol, self.config.max_iter)
        keep = alpha > 0
        self.support_ = X[keep].copy()
        self.alpha_ = alpha[keep]
        self.center_norm_ = float(alpha @ K @ alpha)
        self.gap_ = gap
        self.n_iter_ = n_iter
        self.converged_ = converged
        self.fitted = True
        return self

    def score(self, X, coords=None, chunk: int = 1024):
        self._check_fitted()
        X = as_array(X)
        out = np.empty(len(X))
        for s in range(0, len(X), chunk):
            block = X[s : s + chunk]
            cross = rbf_kernel(block, self.support_, self.gamma_) @ self.alpha_
            out[s : s + chunk] = 1.0 - 2.0 * cross + self.center_norm_
        return out

    def get_state(self):
        return {
            "gamma": np.array(self.gamma_),
            "support": self.support_,
            "alpha": self.alpha_,
            "center_norm": np.array(self.center_norm_),
            "converged": np.array(self.converged_),
        }

    def set_state(self, state):
        self.gamma_ = float(state["gamma"])
        self.support_ = np.asarray(state["support"])
        self.alpha_ = np.asarray(state["alpha"])
        self.center_norm_ = float(state["center_norm"])
        self.converged_ = bool(state["converged"])
        self.fitted = True


def ocsvm(matrix, nu: float = 0.1, gamma: float | None = None, seed: int = 0) -> np.ndarray:
    return OCSVMDetector(nu=nu, gamma=gamma, seed=seed).fit_score(matrix)
