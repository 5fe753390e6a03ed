"""Minimal reverse-mode autodiff, transformer blocks, Adam and AE/VAE detectors."""

from . import tensor as ops
from .autoencoders import AEConfig, AutoencoderDetector, VAEDetector, autoencoder, gaussian_kl, vae
from .gradcheck import check_gradients, numeric_grad, relative_error
from .layers import (
    MLP,
    Embedding,
    EncoderConfig,
    EncoderLayer,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    TransformerEncoder,
    attention,
    multi_head_attention,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor

__all__ = [
    "AEConfig",
    "Adam",
    "AdamState",
    "AutoencoderDetector",
    "Embedding",
    "EncoderConfig",
    "EncoderLayer",
    "LayerNorm",
    "Linear",
    "MLP",
    "Module",
    "MultiHeadAttention",
    "Tensor",
    "TransformerEncoder",
    "VAEDetector",
    "adam_step",
    "attention",
    "autoencoder",
    "check_gradients",
    "gaussian_kl",
    "multi_head_attention",
    "numeric_grad",
    "ops",
    "relative_error",
    "vae",
]
