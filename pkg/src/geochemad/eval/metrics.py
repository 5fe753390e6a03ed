"""Ranking metrics for positive (deposit) scores against background scores.

All functions take two 1-D score collections; higher scores should indicate
positives.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import EvaluationError


_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _check(pos, bg) -> tuple[np.ndarray, np.ndarray]:
    pos = np.asarray(pos, dtype=float).reshape(-1)
    bg = np.asarray(bg, dtype=float).reshape(-1)
    if pos.size == 0 or bg.size == 0:
        raise EvaluationError("metric needs at least one positive and one background score")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(bg))):
        raise EvaluationError("scores must be finite")
    return pos, bg


def roc_auc(pos_scores, bg_scores) -> float:
    """Mann-Whitney AUC: P(pos > bg) + 0.5 P(pos = bg).

    Counted exactly by sorting the background once and bisecting each
    positive, so the result is a ratio of integers (times one half).

    Examples
    --------
    >>> roc_auc([0.9, 0.8], [0.7, 0.85, 0.1])
    0.8333333333333334
    """
    pos, bg = _check(pos_scores, bg_scores)
    b = np.sort(bg)
    below = np.searchsorted(b, pos, side="left")
    upto = np.searchsorted(b, pos, side="right")
    # twice the Mann-Whitney U, kept integral until the final division
    u2 = int(2 * below.sum() + (upto - below).sum())
    return u2 / (2 * pos.size * b.size)


def _ranked(pos, bg):
    scores = np.concatenate([pos, bg])
    labels = np.concatenate([np.ones(pos.size, bool), np.zeros(bg.size, bool)])
    # descending score; positives after backgrounds inside a tie group
    order = np.lexsort((labels, -scores))
    return scores[order], labels[order]


def _tie_group_counts(pos, bg):
    """Cumulative (tp, fp) at the end of each distinct-score group, best first."""
    s, y = _ranked(pos, bg)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return tp.astype(float), fp.astype(float)


def average_precision(pos_scores, bg_scores) -> float:
    """Step-interpolated AP: sum of precision times recall increments.

    Thresholds sit at distinct score values, so a tie group contributes one
    step with the precision of the whole group. With all scores equal, AP is
    n_pos / (n_pos + n_bg).

    Examples
    --------
    >>> average_precision([0.5], [0.9, 0.1, 0.2])
    0.5
    """
    pos, bg = _check(pos_scores, bg_scores)
    tp, fp = _tie_group_counts(pos, bg)
    precision = tp / (tp + fp)
    recall = tp / pos.size
    d_recall = np.diff(np.r_[0.0, recall])
    return float((precision * d_recall).sum())


def precision_recall_curve(pos_scores, bg_scores) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) points, starting from (0, 1)."""
    pos, bg = _check(pos_scores, bg_scores)
    tp, fp = _tie_group_counts(pos, bg)
    recall = np.r_[0.0, tp / pos.size]
    precision = np.r_[1.0, tp / (tp + fp)]
    return recall, precision


def pr_auc(pos_scores, bg_scores) -> float:
    """Trapezoidal area under the precision-recall curve."""
    recall, precision = precision_recall_curve(pos_scores, bg_scores)
    return float(_trapezoid(precision, recall))


def distance_to_deposits(scores, positions, deposit_positions, top_fraction: float = 0.05) -> float:
    """Mean nearest-deposit distance over the top ceil(q N) samples by score.

    Ties at the cut are broken by sample order.
    """
    if not 0 < top_fraction <= 1:
        raise EvaluationError("top_fraction must lie in (0, 1]")
    scores = np.asarray(scores, dtype=float).reshape(-1)
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    dep = np.asarray(deposit_positions, dtype=float).reshape(-1, 2)
    if len(dep) == 0:
        raise EvaluationError("distance to deposits needs at least one deposit")
    if len(scores) != len(positions):
        raise EvaluationError("scores and positions differ in length")
    n_top = math.ceil(top_fraction * len(scores))
    top = np.lexsort((np.arange(len(scores)), -scores))[:n_top]
    d = np.sqrt(((positions[top, None, :] - dep[None, :, :]) ** 2).sum(-1)).min(axis=1)
    return float(d.mean())
