"""Isolation forest.

Each tree isolates a random subsample of size psi by random axis-aligned
splits, with depth capped at ceil(log2 psi). A point's path length is the
number of edges to its leaf plus c(leaf size), the expected path length of an
unbuilt subtree. The score is 2 ** (-E[h(x)] / c(psi)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .base import AnomalyScorer, as_array

EULER_GAMMA = 0.5772156649


def harmonic(m: float) -> float:
    return math.log(m) + EULER_GAMMA


def average_path_length(n) -> np.ndarray:
    """c(n) = 2 H(n-1) - 2 (n-1) / n for n >= 2, else 0."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    big = n >= 2
    nb = n[big]
    out[big] = 2.0 * (np.log(nb - 1.0) + EULER_GAMMA) - 2.0 * (nb - 1.0) / nb
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class IsolationForestConfig:
    n_trees: int = 100
    subsample: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("isolation forest needs at least one tree")
        if self.subsample < 2:
            raise ConfigError("isolation forest subsample must be >= 2")


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "size")

    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.size = [], [], [], [], []

    def add(self, feature=-1, threshold=0.0, size=0) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(size)
        return len(self.feature) - 1

    def freeze(self):
        return {
            "feature": np.array(self.feature, dtype=np.int64),
            "threshold": np.array(self.threshold, dtype=float),
            "left": np.array(self.left, dtype=np.int64),
            "right": np.array(self.right, dtype=np.int64),
            "size": np.array(self.size, dtype=np.int64),
        }


def _grow(X: np.ndarray, rng: np.random.Generator, max_depth: int) -> dict:
    tree = _Tree()
    root = tree.add(size=len(X))
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        tree.size[node] = len(rows)
        if depth >= max_depth or len(rows) <= 1:
            continue
        sub = X[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        live = np.flatnonzero(hi > lo)
        if live.size == 0:
            continue
        q = int(live[rng.integers(live.size)])
        p = float(rng.uniform(lo[q], hi[q]))
        go_left = sub[:, q] < p
        tree.feature[node] = q
        tree.threshold[node] = p
        left = tree.add()
        right = tree.add()
        tree.left[node], tree.right[node] = left, right
        stack.append((right, rows[~go_left], depth + 1))
        stack.append((left, rows[go_left], depth + 1))
    return tree.freeze()


def _path_lengths(tree: dict, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    depth = np.zeros(len(X))
    feat = tree["feature"]
    active = feat[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        n = node[idx]
        f = feat[n]
        go_left = X[idx, f] < tree["threshold"][n]
        node[idx] = np.where(go_left, tree["left"][n], tree["right"][n])
        depth[idx] += 1
        active[idx] = feat[node[idx]] >= 0
    return depth + average_path_length(tree["size"][node])


class IsolationForestDetector(AnomalyScorer):
    kind = "isolation_forest"
    Config = IsolationForestConfig

    def fit(self, X, coords=None, target=None):
        X = as_array(X)
        n = len(X)
        psi = min(self.config.subsample, n)
        if psi < 2:
            raise ConfigError("isolation forest needs at least two rows")
        rng = np.random.default_rng(self.config.seed)
        max_depth = int(math.ceil(math.log2(psi)))
        self.trees_ = []
        for _ in range(self.config.n_trees):
            rows = rng.choice(n, psi, replace=False)
            self.trees_.append(_grow(X[rows], rng, max_depth))
        self.psi_ = psi
        self.fitted = True
        return self

    def expected_path_length(self, X) -> np.ndarray:
        self._check_fitted()
        X = as_array(X)
        total = np.zeros(len(X))
        for tree in self.trees_:
            total += _path_lengths(tree, X)
        return total / len(self.trees_)

    def score(self, X, coords=None):
        eh = self.expected_path_length(X)
        return np.power(2.0, -eh / average_path_length(self.psi_))

    def get_state(self):
        state = {"psi": np.array(self.psi_)}
        for i, t in enumerate(self.trees_):
            for key, arr in t.items():
                state[f"tree{i}.{key}"] = arr
        return state

    def set_state(self, state):
        self.psi_ = int(state["psi"])
        n = len({k.split(".")[0] for k in state if k.startswith("tree")})
        self.trees_ = [
            {key: np.asarray(state[f"tree{i}.{key}"]) for key in ("feature", "threshold", "left", "right", "size")}
            for i in range(n)
        ]
        self.fitted = True


def isolation_forest(matrix, n_trees: int = 100, subsample: int = 256, seed: int = 0) -> np.ndarray:
    return IsolationForestDetector(n_trees=n_trees, subsample=subsample, seed=seed).fit_score(matrix)
