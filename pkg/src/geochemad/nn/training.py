"""Seeded minibatch training loop shared by the neural detectors."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import TrainingError
from .optim import Adam

log = logging.getLogger(__name__)


def train_loop(model, loss_fn, n_rows: int, epochs: int, batch_size: int, lr: float,
               rng: np.random.Generator, betas=(0.9, 0.999), eps: float = 1e-8) -> list[float]:
    """Run ``epochs`` passes of Adam over shuffled minibatches.

    ``loss_fn(batch_rows, rng)`` returns a scalar Tensor. Returns the mean
    training loss per epoch; raises :class:`TrainingError` on a non-finite loss.
    """
    opt = Adam(model.parameters(), lr=lr, betas=betas, eps=eps)
    model.train()
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n_rows)
        total, count = 0.0, 0
        for s in range(0, n_rows, batch_size):
            rows = order[s : s + batch_size]
            opt.zero_grad()
            loss = loss_fn(rows, rng)
            value = float(loss.data)
            if not np.isfinite(value):
                model.eval()
                raise TrainingError(epoch)
            loss.backward()
            opt.step()
            total += value * len(rows)
            count += len(rows)
        history.append(total / count)
        log.debug("epoch %d loss %.6g", epoch, history[-1])
    model.eval()
    return history
