"""Parameterised building blocks: linear, layer norm, embeddings, attention, encoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from . import tensor as T
from .tensor import Tensor


class Module:
    """Container whose :class:`Tensor` and :class:`Module` attributes form its parameters."""

    training = True

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise ConfigError(f"snapshot missing parameters: {sorted(missing)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=p.dtype)
            if arr.shape != p.shape:
                raise ShapeError("load_state_dict", f"{name}: expected {p.shape}, got {arr.shape}")
            p.data = arr.copy()


def _param(arr, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True,
                 init: str = "xavier", dtype=np.float64):
        if init == "zeros":
            w = np.zeros((n_in, n_out))
        else:
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.weight = _param(w, dtype)
        self.bias = _param(np.zeros(n_out), dtype) if bias else None
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ShapeError("linear", f"expected last dim {self.n_in}, got {x.shape}")
        if x.ndim > 2:
            lead = x.shape[:-1]
            y = T.matmul(T.reshape(x, (-1, self.n_in)), self.weight)
            if self.bias is not None:
                y = y + self.bias
            return T.reshape(y, lead + (self.n_out,))
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float64, eps: float = 1e-9):
        self.gamma = _param(np.ones(d), dtype)
        self.beta = _param(np.zeros(d), dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, n: int, d: int, rng: np.random.Generator, dtype=np.float64):
        self.table = _param(rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d)), dtype)

    def __call__(self, ids) -> Tensor:
        return T.embedding(self.table, ids)


def attention(q: Tensor, k: Tensor, v: Tensor, key_mask=None) -> Tensor:
    """Scaled dot-product attention over (..., S, dh) tensors.

    ``key_mask`` is a boolean (..., S_k) array, True for keys to ignore.
    """
    dh = q.shape[-1]
    scores = T.matmul(q, T.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    scores = scores * (1.0 / np.sqrt(dh))
    mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[..., None, :]
    weights = T.softmax(scores, axis=-1, mask=mask)
    return T.matmul(weights, v)


class MultiHeadAttention(Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator, dtype=np.float64):
        if d % heads:
            raise ConfigError(f"model width {d} not divisible by {heads} heads")
        self.d, self.heads = d, heads
        self.wq = Linear(d, d, rng, dtype=dtype)
        self.wk = Linear(d, d, rng, dtype=dtype)
        self.wv = Linear(d, d, rng, dtype=dtype)
        self.wo = Linear(d, d, rng, dtype=dtype)
        self.last_weights = None

    def _split(self, x: Tensor) -> Tensor:
        b, s, _ = x.shape
        return T.transpose(T.reshape(x, (b, s, self.heads, self.d // self.heads)), (0, 2, 1, 3))

    def __call__(self, q_in: Tensor, k_in: Tensor, v_in: Tensor, key_mask=None) -> Tensor:
        """Inputs are (batch, seq, d); ``key_mask`` is (batch, seq_k), True = ignore."""
        for name, t in (("query", q_in), ("key", k_in), ("value", v_in)):
            if t.ndim != 3 or t.shape[-1] != self.d:
                raise ShapeError("multi_head_attention", f"{name} must be (batch, seq, {self.d}), got {t.shape}")
        if k_in.shape[:2] != v_in.shape[:2]:
            raise ShapeError("multi_head_attention", "key and value sequences differ")
        q = self._split(self.wq(q_in))
        k = self._split(self.wk(k_in))
        v = self._split(self.wv(v_in))
        mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, :]
        ctx = attention(q, k, v, mask)
        b, _, s, dh = ctx.shape
        merged = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, s, self.d))
        return self.wo(merged)


def multi_head_attention(mha: MultiHeadAttention, q, k, v, key_mask=None) -> Tensor:
    return mha(T.as_tensor(q), T.as_tensor(k), T.as_tensor(v), key_mask)


@dataclass(frozen=True)
class EncoderConfig:
    n_layers: int = 2
    d_model: int = 64
    heads: int = 4
    ff_width: int = 128
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigError("encoder needs at least one layer")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")


class EncoderLayer(Module):
    """Pre-norm transformer block: x + MHA(LN(x)), then x + FF(LN(x))."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64):
        self.norm1 = LayerNorm(cfg.d_model, dtype)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng, dtype)
        self.norm2 = LayerNorm(cfg.d_model, dtype)
        self.ff1 = Linear(cfg.d_model, cfg.ff_width, rng, dtype=dtype)
        self.ff2 = Linear(cfg.ff_width, cfg.d_model, rng, dtype=dtype)
        self.p = cfg.dropout

    def __call__(self, x: Tensor, key_mask=None, rng=None) -> Tensor:
        h = self.norm1(x)
        x = x + T.dropout(self.attn(h, h, h, key_mask), self.p, rng, self.training)
        h = self.ff2(T.gelu(self.ff1(self.norm2(x))))
        return x + T.dropout(h, self.p, rng, self.training)


class TransformerEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64):
        self.layers = [EncoderLayer(cfg, rng, dtype) for _ in range(cfg.n_layers)]
        self.norm = LayerNorm(cfg.d_model, dtype)

    def __call__(self, x: Tensor, key_mask=None, rng=None) -> Tensor:
        for layer in self.layers:
            x = layer(x, key_mask, rng)
        return self.norm(x)


class MLP(Module):
    """Stack of linear layers with GELU between them."""

    def __init__(self, widths, rng: np.random.Generator, dtype=np.float64, zero_last: bool = False):
        n = len(widths) - 1
        self.layers = [
            Linear(widths[i], widths[i + 1], rng, dtype=dtype,
                   init="zeros" if (zero_last and i == n - 1) else "xavier")
            for i in range(n)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.gelu(x)
        return x
