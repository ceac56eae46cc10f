"""Seasonal-naive point baseline."""
from __future__ import annotations

from datetime import timedelta

import numpy as np

from ..errors import SizingError
from ..series import TimeSeries
from .base import ModelConfig, PointForecast, TrainedModel


def seasonal_naive_forecast(context: TimeSeries, season_length: int, horizon: int) -> PointForecast:
    """Repeat the last observed season: f[t] = x[n - m + (t mod m)]."""
    n = len(context)
    if n < season_length:
        raise SizingError(season_length, n, "context")
    last = np.asarray(context.values[n - season_length:], dtype=np.float64)
    values = last[np.arange(horizon) % season_length]
    return PointForecast(context.start + timedelta(seconds=context.step * n), context.step, values)


def train_seasonal_naive(train: TimeSeries, config: ModelConfig) -> TrainedModel:
    if len(train) < config.season_length:
        raise SizingError(config.season_length, len(train), "training series")
    return TrainedModel(config, {}, {"loss_history": [], "final_loss": None})


def predict_seasonal_naive(model: TrainedModel, context: TimeSeries, horizon: int | None = None) -> PointForecast:
    return seasonal_naive_forecast(context, model.config.season_length, horizon or model.config.horizon)
