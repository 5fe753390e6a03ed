"""Stage-1 spatial context learning, Stage-2 element dependency modelling and scoring.

Stage 1 minimises ``(1/N) sum_i (yhat_i - y_i)^2`` where ``y_i`` is the
sample's own target value and ``yhat_i`` is read from the query token after
encoding the neighbourhood. Stage 2 reconstructs every element from the
element tokens plus the projected context token; the anomaly score is the
mean squared reconstruction error over elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from ..nn import tensor as T
from ..nn.tensor import Tensor
from ..nn.training import train_loop
from ..spatial import SpatialIndex
from .model import EdmModel, GeoChemFormerConfig, SclModel
from .tokens import CoordinateFrame, TokenBatch, build_token_batch

SCORE_CHUNK = 256


@dataclass(frozen=True)
class SpatialContext:
    """One q' vector of width d per sample."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors)
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise ShapeError("spatial_context", "context must be a finite (N, d) array")

    def __len__(self):
        return len(self.vectors)


@dataclass
class SclResult:
    model: SclModel
    context: SpatialContext
    frame: CoordinateFrame
    tokens: TokenBatch
    history: list[float]
    target_id: int


def scl_loss(model: SclModel, batch: TokenBatch, y: np.ndarray, target_id: int, rng=None) -> tuple[Tensor, Tensor]:
    """Mean squared error between the Stage-1 prediction and ``y``; returns (loss, yhat)."""
    _, yhat = model(batch.query, batch.tokens, batch.mask, target_id, rng)
    return T.mse_loss(yhat, np.asarray(y)), yhat


def _chunks(n: int, size: int = SCORE_CHUNK):
    for s in range(0, n, size):
        yield np.arange(s, min(n, s + size))


def scl_predict(model: SclModel, batch: TokenBatch, target_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (q', yhat) for every row of ``batch``."""
    was = model.training
    model.eval()
    ctx, pred = [], []
    for rows in _chunks(len(batch)):
        b = batch.rows(rows)
        qc, yhat = model(b.query, b.tokens, b.mask, target_id)
        ctx.append(qc.data)
        pred.append(yhat.data)
    model.train(was)
    return np.concatenate(ctx), np.concatenate(pred)


def scl_train(features, positions, target_values, config: GeoChemFormerConfig | None = None,
              target_id: int = 0, n_targets: int | None = None, index: SpatialIndex | None = None) -> SclResult:
    """Train Stage 1 and return the model with q' for every sample."""
    cfg = config or GeoChemFormerConfig()
    features = np.asarray(features, dtype=float)
    positions = np.asarray(positions, dtype=float)
    y = np.asarray(target_values, dtype=float).reshape(-1)
    if len(y) != len(features):
        raise ShapeError("scl", "target values are not aligned with the feature rows")
    if cfg.k < 1:
        raise ConfigError("K must be >= 1")
    index = index or SpatialIndex(positions)
    frame = CoordinateFrame.fit(positions, index)
    tokens = build_token_batch(features, positions, cfg.k, frame, index)
    rng = np.random.default_rng(cfg.seed)
    n_targets = n_targets or max(features.shape[1], target_id + 1)
    model = SclModel(features.shape[1], n_targets, cfg, rng)
    y_dt = y.astype(cfg.np_dtype)

    def loss_fn(rows, step_rng):
        return scl_loss(model, tokens.rows(rows), y_dt[rows], target_id, step_rng)[0]

    history = train_loop(model, loss_fn, len(features), cfg.scl_epochs, cfg.batch_size, cfg.lr, rng)
    ctx, _ = scl_predict(model, tokens, target_id)
    return SclResult(model, SpatialContext(ctx), frame, tokens, history, target_id)


def _value_keep(shape, rate: float, rng: np.random.Generator) -> np.ndarray | None:
    if rate <= 0:
        return None
    return rng.random(shape) >= rate


def edm_loss(model: EdmModel, x: np.ndarray, context: np.ndarray | None, keep=None, rng=None) -> tuple[Tensor, Tensor]:
    """Mean squared reconstruction error over all elements; returns (loss, xhat)."""
    xhat = model(x, context, keep, rng)
    return T.mse_loss(xhat, np.asarray(x)), xhat


def edm_train(features, context: SpatialContext | np.ndarray | None,
              config: GeoChemFormerConfig | None = None) -> tuple[EdmModel, list[float]]:
    """Train Stage 2 (or T1 when ``context`` is None) with value-dropout."""
    cfg = config or GeoChemFormerConfig()
    x = np.asarray(features, dtype=float)
    ctx = None if context is None else np.asarray(getattr(context, "vectors", context), dtype=float)
    if ctx is not None and len(ctx) != len(x):
        raise ShapeError("edm", "context is not aligned with the feature rows")
    # Stage 2 draws from its own stream so that it does not depend on Stage 1's draw count
    rng = np.random.default_rng([cfg.seed, 2])
    model = EdmModel(x.shape[1], None if ctx is None else ctx.shape[1], cfg, rng)
    x_dt = x.astype(cfg.np_dtype)
    ctx_dt = None if ctx is None else ctx.astype(cfg.np_dtype)

    def loss_fn(rows, step_rng):
        keep = _value_keep((len(rows), x.shape[1]), cfg.mask_rate, step_rng)
        c = None if ctx_dt is None else ctx_dt[rows]
        return edm_loss(model, x_dt[rows], c, keep, step_rng)[0]

    history = train_loop(model, loss_fn, len(x), cfg.edm_epochs, cfg.batch_size, cfg.lr, rng)
    return model, history


def edm_reconstruct(model: EdmModel, features, context=None) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    ctx = None if context is None else np.asarray(getattr(context, "vectors", context), dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_elements:
        raise ShapeError("edm", f"expected (N, {model.n_elements}) features, got {x.shape}")
    if (ctx is None) != (model.context_proj is None):
        raise ShapeError("edm", "context presence does not match the model")
    was = model.training
    model.eval()
    out = []
    for rows in _chunks(len(x)):
        out.append(model(x[rows], None if ctx is None else ctx[rows]).data)
    model.train(was)
    return np.concatenate(out).astype(float)


def edm_score(model: EdmModel, features, context=None) -> np.ndarray:
    """s_i = (1/C) sum_c (x_ic - xhat_ic)^2 with no masking."""
    x = np.asarray(features, dtype=float)
    r = x - edm_reconstruct(model, x, context)
    return (r * r).mean(axis=1)


def t1_score(features, config: GeoChemFormerConfig | None = None) -> np.ndarray:
    """Train the context-free Stage-2 architecture and score the same rows."""
    model, _ = edm_train(features, None, config)
    return edm_score(model, features)
