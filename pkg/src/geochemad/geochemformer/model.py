"""Network definitions for both GeoChemFormer stages and the T1 baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from ..nn import tensor as T
from ..nn.layers import Embedding, EncoderConfig, Linear, Module, TransformerEncoder
from ..nn.tensor import Tensor
from .tokens import canonical_order


@dataclass(frozen=True)
class GeoChemFormerConfig:
    """Hyperparameters shared by Stage 1, Stage 2 and T1.

    ``k`` neighbours, encoder shape, epochs per stage, value-dropout rate
    ``mask_rate`` and the floating point type used for training.
    """

    k: int = 128
    n_layers: int = 2
    d_model: int = 64
    heads: int = 4
    ff_width: int = 128
    dropout: float = 0.1
    scl_epochs: int = 40
    edm_epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    mask_rate: float = 0.15
    pe_min_freq: float = 0.5
    pe_max_freq: float = 32.0
    zero_init_decoder: bool = False
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("K must be >= 1")
        if min(self.scl_epochs, self.edm_epochs, self.batch_size) < 1:
            raise ConfigError("epochs and batch size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be > 0")
        if not 0 <= self.mask_rate <= 1:
            raise ConfigError("mask_rate must lie in [0, 1]")
        if self.d_model % 4:
            raise ConfigError("d_model must be divisible by 4 for the 2-D positional encoding")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        self.encoder_config()  # validates heads / layers / dropout

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.n_layers, self.d_model, self.heads, self.ff_width, self.dropout, self.seed)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


def sinusoidal_encoding_2d(coords: np.ndarray, d: int, min_freq: float = 0.5, max_freq: float = 32.0) -> np.ndarray:
    """``[sin(w x), cos(w x), sin(w y), cos(w y)]`` over d/4 geometric frequencies."""
    coords = np.asarray(coords, dtype=float)
    n_freq = d // 4
    freqs = np.geomspace(min_freq, max_freq, n_freq) if n_freq > 1 else np.array([min_freq])
    ax = coords[..., 0:1] * freqs
    ay = coords[..., 1:2] * freqs
    return np.concatenate([np.sin(ax), np.cos(ax), np.sin(ay), np.cos(ay)], axis=-1)


class SclModel(Module):
    """Stage 1: predict the target value of a sample from its neighbours only.

    The query token carries the sample's coordinates and nothing else; q' is
    the encoder output at the query position (sequence index 1).
    """

    def __init__(self, n_features: int, n_targets: int, cfg: GeoChemFormerConfig, rng: np.random.Generator):
        dt = cfg.np_dtype
        d = cfg.d_model
        self.cfg = cfg
        self.n_features = n_features
        self.element_embed = Embedding(n_targets, d, rng, dt)
        self.query_proj = Linear(2, d, rng, dtype=dt)
        self.token_proj = Linear(2 + n_features, d, rng, dtype=dt)
        self.encoder = TransformerEncoder(cfg.encoder_config(), rng, dt)
        self.head = Linear(d, 1, rng, dtype=dt)

    def context(self, query: np.ndarray, tokens: np.ndarray, mask: np.ndarray, target_id: int,
                rng=None) -> Tensor:
        b, k, w = tokens.shape
        if w != 2 + self.n_features or query.shape != (b, 2) or mask.shape != (b, k):
            raise ShapeError("scl", f"token batch shapes {query.shape}, {tokens.shape}, {mask.shape} inconsistent")
        dt = self.cfg.np_dtype
        perm = canonical_order(tokens, mask)
        tokens = np.take_along_axis(tokens, perm[..., None], axis=1)
        mask = np.take_along_axis(mask, perm, axis=1)
        e = self.element_embed(np.full((b, 1), target_id))
        pe = sinusoidal_encoding_2d(query, self.cfg.d_model, self.cfg.pe_min_freq, self.cfg.pe_max_freq)
        q = self.query_proj(Tensor(query[:, None, :].astype(dt))) + Tensor(pe[:, None, :].astype(dt))
        t = self.token_proj(Tensor(tokens.astype(dt)))
        seq = T.concat([e, q, t], axis=1)
        key_mask = np.concatenate([np.zeros((b, 2), bool), mask], axis=1)
        h = self.encoder(seq, key_mask, rng)
        return T.getitem(h, (slice(None), 1, slice(None)))

    def predict(self, q_context: Tensor) -> Tensor:
        return T.reshape(self.head(q_context), (-1,))

    def __call__(self, query, tokens, mask, target_id, rng=None) -> tuple[Tensor, Tensor]:
        qc = self.context(query, tokens, mask, target_id, rng)
        return qc, self.predict(qc)


class EdmModel(Module):
    """Stage 2 (with a context token) or T1 (``context_width=None``).

    Element token c is ``W_e [Embed(c) | W_v x_c]``; the shared decoder maps
    each element token back to a scalar. ``keep`` zeroes value projections
    to implement value-dropout; the identity half is never dropped.
    """

    def __init__(self, n_elements: int, context_width: int | None, cfg: GeoChemFormerConfig,
                 rng: np.random.Generator):
        dt = cfg.np_dtype
        d = cfg.d_model
        half = d // 2
        self.cfg = cfg
        self.n_elements = n_elements
        self.context_width = context_width
        self.element_embed = Embedding(n_elements, half, rng, dt)
        self.value_proj = Linear(1, d - half, rng, dtype=dt)
        self.token_proj = Linear(d, d, rng, dtype=dt)
        self.context_proj = Linear(context_width, d, rng, dtype=dt) if context_width else None
        self.encoder = TransformerEncoder(cfg.encoder_config(), rng, dt)
        self.decoder = Linear(d, 1, rng, dtype=dt, init="zeros" if cfg.zero_init_decoder else "xavier")

    def __call__(self, x: np.ndarray, context: np.ndarray | None = None, keep: np.ndarray | None = None,
                 rng=None) -> Tensor:
        b, c = x.shape
        if c != self.n_elements:
            raise ShapeError("edm", f"expected {self.n_elements} elements, got {c}")
        dt = self.cfg.np_dtype
        ident = T.broadcast_to(self.element_embed(np.arange(c))[None], (b, c, self.element_embed.table.shape[1]))
        vals = self.value_proj(Tensor(x[..., None].astype(dt)))
        if keep is not None:
            vals = vals * Tensor(keep[..., None].astype(dt))
        u = self.token_proj(T.concat([ident, vals], axis=-1))
        first = 0
        if self.context_proj is not None:
            if context is None or context.shape != (b, self.context_width):
                raise ShapeError("edm", f"context must be ({b}, {self.context_width})")
            g = self.context_proj(Tensor(context[:, None, :].astype(dt)))
            u = T.concat([g, u], axis=1)
            first = 1
        h = self.encoder(u, None, rng)
        h = T.getitem(h, (slice(None), slice(first, None), slice(None)))
        return T.reshape(self.decoder(h), (b, c))
