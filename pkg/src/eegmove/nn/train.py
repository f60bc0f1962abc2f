from __future__ import annotations

import logging

import numpy as np

from .. import seeding
from .model import Model, backward, bce_loss, forward, objective
from .optim import Adam

logger = logging.getLogger(__name__)


def fit(model: Model, X, y, seed: int = 0, stream_key: int = 0, epochs: int | None = None,
        batch_size: int | None = None, optimizer: Adam | None = None) -> list[float]:
    """Minibatch Adam training; returns the mean training objective per epoch.

    Minibatch order and dropout masks come from per-(``stream_key``, epoch)
    streams of ``seed``, so a run is reproducible regardless of what else
    consumed randomness. The last partial batch is kept.
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    batch_size = cfg.batch_size if batch_size is None else batch_size
    optimizer = optimizer or Adam.from_config(cfg)
    X = np.asarray(X, dtype=model.dtype)
    y = np.asarray(y, dtype=model.dtype)
    n = len(X)
    history = []
    for epoch in range(epochs):
        order = seeding.rng(seed, seeding.SHUFFLE, stream_key, epoch).permutation(n)
        drop_rng = seeding.rng(seed, seeding.DROPOUT, stream_key, epoch)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            p, cache = forward(model, X[idx], train=True, rng=drop_rng)
            total += objective(model, p, y[idx]) * len(idx)
            optimizer.step(model, backward(cache, y[idx]))
        history.append(total / n)
        logger.debug("epoch %d objective %.6f", epoch, history[-1])
    return history


def predict(model: Model, X, batch_size: int = 256) -> np.ndarray:
    """Eval-mode probabilities of class 1 (Right)."""
    X = np.asarray(X)
    if len(X) == 0:
        return np.zeros(0)
    return np.concatenate([forward(model, X[i : i + batch_size])[0] for i in range(0, len(X), batch_size)])


def evaluate_loss(model: Model, X, y) -> float:
    return bce_loss(predict(model, X), y)
