"""Reconstruction-based detectors: a plain autoencoder and a Gaussian VAE.

Both score a row by its mean squared reconstruction error. The VAE decodes
from the posterior mean at score time, so scoring is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..detectors.base import AnomalyScorer, as_array
from ..errors import ConfigError
from . import tensor as T
from .layers import MLP, Linear, Module
from .tensor import Tensor
from .training import train_loop


@dataclass(frozen=True)
class AEConfig:
    hidden: int = 64
    latent: int = 16
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    beta: float = 1.0  # VAE only
    zero_init_decoder: bool = False
    seed: int = 0

    def __post_init__(self):
        if min(self.hidden, self.latent, self.epochs, self.batch_size) < 1:
            raise ConfigError("autoencoder widths, epochs and batch size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be > 0")


class AutoencoderNet(Module):
    """C -> hidden -> latent -> hidden -> C with GELU activations."""

    def __init__(self, n_features, cfg: AEConfig, rng, dtype=np.float64):
        self.encoder = MLP([n_features, cfg.hidden, cfg.latent], rng, dtype)
        self.decoder = MLP([cfg.latent, cfg.hidden, n_features], rng, dtype, zero_last=cfg.zero_init_decoder)

    def __call__(self, x: Tensor) -> Tensor:
        return self.decoder(T.gelu(self.encoder(x)))


class VAENet(Module):
    def __init__(self, n_features, cfg: AEConfig, rng, dtype=np.float64):
        self.body = Linear(n_features, cfg.hidden, rng, dtype=dtype)
        self.mu = Linear(cfg.hidden, cfg.latent, rng, dtype=dtype)
        self.logvar = Linear(cfg.hidden, cfg.latent, rng, dtype=dtype)
        self.decoder = MLP([cfg.latent, cfg.hidden, n_features], rng, dtype, zero_last=cfg.zero_init_decoder)

    def encode(self, x: Tensor):
        h = T.gelu(self.body(x))
        return self.mu(h), self.logvar(h)

    def decode(self, z: Tensor) -> Tensor:
        return self.decoder(z)


def gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) per row, summed over latent dims."""
    per_dim = 0.5 * (mu * mu + T.exp(logvar) - 1.0 - logvar)
    return T.tsum(per_dim, axis=-1)


def vae_loss(net: VAENet, x: Tensor, eps: np.ndarray, beta: float) -> Tensor:
    """Per-element mean of (squared error + beta * KL): the Gaussian ELBO divided by C."""
    mu, logvar = net.encode(x)
    z = mu + T.exp(logvar * 0.5) * Tensor(eps)
    recon = net.decode(z)
    c = x.shape[-1]
    sq = T.tsum((recon - x) * (recon - x), axis=-1)
    return T.mean(sq + beta * gaussian_kl(mu, logvar)) * (1.0 / c)


class _NeuralScorer(AnomalyScorer):
    Config = AEConfig
    dtype = np.float64

    def _build(self, n_features, rng):
        raise NotImplementedError

    def get_state(self):
        state = {f"param.{k}": v for k, v in self.net_.state_dict().items()}
        state["n_features"] = np.array(self.n_features_)
        return state

    def set_state(self, state):
        self.n_features_ = int(state["n_features"])
        self.net_ = self._build(self.n_features_, np.random.default_rng(self.seed))
        self.net_.load_state_dict({k[6:]: v for k, v in state.items() if k.startswith("param.")})
        self.net_.eval()
        self.fitted = True


class AutoencoderDetector(_NeuralScorer):
    kind = "ae"

    def _build(self, n_features, rng):
        return AutoencoderNet(n_features, self.config, rng, self.dtype)

    def fit(self, X, coords=None, target=None):
        X = as_array(X).astype(self.dtype)
        rng = np.random.default_rng(self.config.seed)
        self.n_features_ = X.shape[1]
        self.net_ = self._build(X.shape[1], rng)

        def loss_fn(rows, _rng):
            xb = Tensor(X[rows])
            return T.mse_loss(self.net_(xb), xb)

        self.history_ = train_loop(self.net_, loss_fn, len(X), self.config.epochs,
                                   self.config.batch_size, self.config.lr, rng)
        self.fitted = True
        return self

    def reconstruct(self, X) -> np.ndarray:
        self._check_fitted()
        return self.net_(Tensor(as_array(X).astype(self.dtype))).data

    def score(self, X, coords=None):
        X = as_array(X)
        r = self.reconstruct(X)
        return ((X - r) ** 2).mean(axis=1)


class VAEDetector(_NeuralScorer):
    kind = "vae"

    def _build(self, n_features, rng):
        return VAENet(n_features, self.config, rng, self.dtype)

    def fit(self, X, coords=None, target=None):
        X = as_array(X).astype(self.dtype)
        rng = np.random.default_rng(self.config.seed)
        self.n_features_ = X.shape[1]
        self.net_ = self._build(X.shape[1], rng)
        latent = self.config.latent

        def loss_fn(rows, step_rng):
            eps = step_rng.standard_normal((len(rows), latent)).astype(self.dtype)
            return vae_loss(self.net_, Tensor(X[rows]), eps, self.config.beta)

        self.history_ = train_loop(self.net_, loss_fn, len(X), self.config.epochs,
                                   self.config.batch_size, self.config.lr, rng)
        self.fitted = True
        return self

    def reconstruct(self, X) -> np.ndarray:
        self._check_fitted()
        mu, _ = self.net_.encode(Tensor(as_array(X).astype(self.dtype)))
        return self.net_.decode(mu).data

    def score(self, X, coords=None):
        X = as_array(X)
        r = self.reconstruct(X)
        return ((X - r) ** 2).mean(axis=1)


def autoencoder(matrix, config: AEConfig | None = None) -> AutoencoderDetector:
    return AutoencoderDetector(config).fit(matrix)


def vae(matrix, config: AEConfig | None = None) -> VAEDetector:
    return VAEDetector(config).fit(matrix)
