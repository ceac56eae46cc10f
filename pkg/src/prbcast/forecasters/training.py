"""Seeded window sampling and the shared optimization loop."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..autodiff import AdamState, Tape, adam_step, backward, clip_grad_norm
from ..errors import NumericError, SizingError
from ..series import TimeSeries, make_rng
from .base import ModelConfig
from .nn import time_features

CLIP_NORM = 10.0


@dataclass
class Batch:
    values: np.ndarray     # (B, C + H) scaled by per-window mean scale
    scale: np.ndarray      # (B, 1)
    features: np.ndarray   # (B, C + H, 4)


class WindowSampler:
    """Draws random-start windows of ``context + horizon`` samples from a series."""

    def __init__(self, series: TimeSeries, context_length: int, horizon: int):
        self.length = context_length + horizon
        self.context_length = context_length
        if len(series) < self.length:
            raise SizingError(self.length, len(series), "training series")
        self.values = np.asarray(series.values, dtype=np.float64)
        self.features = time_features(series.start, series.step, len(series))
        self.n_starts = len(series) - self.length + 1

    def batch(self, rng: np.random.Generator, size: int) -> Batch:
        starts = rng.integers(0, self.n_starts, size=size)
        idx = starts[:, None] + np.arange(self.length)[None, :]
        raw = self.values[idx]
        scale = 1.0 + raw[:, : self.context_length].mean(axis=1, keepdims=True)
        return Batch(raw / scale, scale, self.features[idx])


def fit(network, sampler: WindowSampler, config: ModelConfig, label: str) -> dict:
    """Minimize ``network.loss(batch)`` with Adam; returns training metadata.

    The step size follows a half-cosine from ``learning_rate`` at the first
    epoch towards zero at the last, so the final weights settle instead of
    jittering around the optimum. ``loss_history`` holds the mean loss of
    each epoch.
    """
    rng = make_rng(config.seed)
    params = network.store.tensors
    state = AdamState(lr=config.learning_rate)
    history = []
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        state.lr = config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))
        total = 0.0
        for _ in range(config.batches_per_epoch):
            batch = sampler.batch(rng, config.batch_size)
            try:
                with Tape() as tape:
                    loss = network.loss(batch)
            except NumericError as exc:
                raise NumericError(f"{label}: numeric failure at epoch {epoch}: {exc}") from None
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"{label}: non-finite loss at epoch {epoch}")
            grads = backward(tape, loss, params.values())
            named = {name: grads[t] for name, t in params.items()}
            clip_grad_norm(named, CLIP_NORM)
            adam_step(params, named, state)
            total += value
        history.append(total / config.batches_per_epoch)
    network.train_seconds = time.perf_counter() - t0
    return {"loss_history": history, "final_loss": history[-1] if history else None}
