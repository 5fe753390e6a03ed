"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np


def numeric_grad(f, arr: np.ndarray, step: float = 1e-4, order: int = 2) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``arr`` (perturbed in place, then restored).

    ``order=2`` is the three-point stencil; ``order=4`` the five-point stencil,
    whose truncation error is small enough for attention-key gradients.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    g = np.zeros_like(arr, dtype=float)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)

    def at(i, old, delta):
        flat[i] = old + delta
        return float(f())

    for i in range(flat.size):
        old = flat[i]
        if order == 2:
            gflat[i] = (at(i, old, step) - at(i, old, -step)) / (2.0 * step)
        else:
            gflat[i] = (8.0 * (at(i, old, step) - at(i, old, -step))
                        - (at(i, old, 2 * step) - at(i, old, -2 * step))) / (12.0 * step)
        flat[i] = old
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_gradients(loss_fn, params, step: float = 1e-4, order: int = 2) -> float:
    """Max relative error between backprop and central differences over ``params``.

    ``loss_fn()`` must rebuild the graph from the current parameter data and
    return a scalar Tensor; it must be deterministic.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = numeric_grad(lambda: loss_fn().data, p.data, step, order)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
