"""Network building blocks on top of the autodiff engine."""
from __future__ import annotations

import math
from datetime import datetime

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..series import EPOCH
from .base import SIGMA_FLOOR

DAY_SECONDS = 86400.0
WEEK_SECONDS = 7 * DAY_SECONDS
NUM_TIME_FEATURES = 4
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class ParamStore:
    """Ordered named parameters with seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init."""

    def __init__(self, rng: np.random.Generator | None = None, arrays: dict | None = None):
        self.rng = rng
        self.arrays = arrays
        self.tensors: dict[str, Tensor] = {}

    def get(self, name: str, shape: tuple[int, ...], fan_in: int | None = None, fill: float | None = None) -> Tensor:
        if self.arrays is not None:
            arr = np.asarray(self.arrays[name], dtype=np.float64)
            if arr.shape != tuple(shape):
                raise ValueError(f"parameter {name}: stored shape {arr.shape} != expected {shape}")
        elif fill is not None:
            arr = np.full(shape, float(fill))
        else:
            bound = 1.0 / math.sqrt(fan_in if fan_in else shape[0])
            arr = self.rng.uniform(-bound, bound, size=shape)
        t = Tensor(arr.copy(), requires_grad=True, name=name)
        self.tensors[name] = t
        return t

    def numpy(self) -> dict:
        return {k: v.data.copy() for k, v in self.tensors.items()}


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int):
        self.W = store.get(f"{name}.W", (n_in, n_out), fan_in=n_in)
        self.b = store.get(f"{name}.b", (n_out,), fan_in=n_in)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b


class LSTMStack:
    """Stacked LSTM layers driven one time step at a time."""

    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: int, layers: int):
        self.hidden = hidden
        self.layers = []
        for k in range(layers):
            fan = (n_in if k == 0 else hidden) + hidden
            W = store.get(f"{name}.{k}.W", (fan, 4 * hidden), fan_in=fan)
            b = store.get(f"{name}.{k}.b", (4 * hidden,), fan_in=fan)
            if store.arrays is None:
                b.data[hidden:2 * hidden] += 1.0  # forget-gate bias
            self.layers.append((W, b))

    def initial_state(self, batch: int):
        z = np.zeros((batch, self.hidden))
        return [(Tensor(z), Tensor(z)) for _ in self.layers]

    def step(self, x: Tensor, state):
        new_state = []
        for (W, b), (h, c) in zip(self.layers, state):
            h, c = ad.lstm_cell(x, h, c, W, b)
            new_state.append((h, c))
            x = h
        return x, new_state


def sigma_activation(x: Tensor) -> Tensor:
    return ad.softplus(x) + SIGMA_FLOOR


def gaussian_nll(z, mu: Tensor, sigma: Tensor) -> Tensor:
    """Elementwise 0.5 log(2 pi sigma^2) + (z - mu)^2 / (2 sigma^2)."""
    r = (z - mu) / sigma
    return ad.log(sigma) + 0.5 * ad.square(r) + _HALF_LOG_2PI


def time_features(start: datetime, step: float, n: int, offset: int = 0) -> np.ndarray:
    """(n, 4) sin/cos of position-in-day and position-in-week."""
    secs = (start - EPOCH).total_seconds() + step * (offset + np.arange(n, dtype=np.float64))
    day = 2.0 * np.pi * np.mod(secs, DAY_SECONDS) / DAY_SECONDS
    week = 2.0 * np.pi * np.mod(secs, WEEK_SECONDS) / WEEK_SECONDS
    return np.stack([np.sin(day), np.cos(day), np.sin(week), np.cos(week)], axis=1)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mean = ad.reduce_mean(x, axis=-1, keepdims=True)
    centered = x - mean
    var = ad.reduce_mean(ad.square(centered), axis=-1, keepdims=True)
    return centered / ad.sqrt(var + eps) * gamma + beta


def positional_encoding(n: int, dim: int, offset: int = 0) -> np.ndarray:
    pos = (offset + np.arange(n, dtype=np.float64))[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * np.floor(i / 2.0)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
