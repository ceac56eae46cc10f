"""Point baselines (seasonal-naive, LSTM) and probabilistic forecasters (SFF, DeepAR, Transformer)."""
from __future__ import annotations

from ..errors import ValidationError
from ..series import TimeSeries
from .base import (KINDS, PROBABILISTIC, ForecastDistribution, ModelConfig, PointForecast,
                   TrainedModel, gaussian_nll_value, quantiles_from_forecast)
from .deepar import deepar_sample_paths, predict_deepar, train_deepar
from .lstm import predict_lstm, train_lstm
from .naive import predict_seasonal_naive, seasonal_naive_forecast, train_seasonal_naive
from .quantiles import ndtri
from .sff import predict_sff, train_sff
from .transformer import predict_transformer, train_transformer

_TRAIN = {
    "seasonal_naive": train_seasonal_naive,
    "lstm": train_lstm,
    "sff": train_sff,
    "deepar": train_deepar,
    "transformer": train_transformer,
}


def train_model(train: TimeSeries, config: ModelConfig) -> TrainedModel:
    return _TRAIN[config.kind](train, config)


def forecast(model: TrainedModel, context: TimeSeries, horizon: int | None = None, seed: int = 0,
             num_paths: int | None = None):
    """Forecast ``horizon`` steps after ``context`` with any trained model."""
    H = horizon or model.config.horizon
    if H > model.config.horizon:
        raise ValidationError(f"horizon {H} exceeds trained horizon {model.config.horizon}")
    kind = model.kind
    if kind == "seasonal_naive":
        return predict_seasonal_naive(model, context, H)
    if kind == "lstm":
        return predict_lstm(model, context, H)
    if kind == "sff":
        return predict_sff(model, context, H)
    if kind == "transformer":
        return predict_transformer(model, context, H)
    return deepar_sample_paths(model, context, H, num_paths, seed)


__all__ = [
    "KINDS", "PROBABILISTIC", "ForecastDistribution", "ModelConfig", "PointForecast", "TrainedModel",
    "deepar_sample_paths", "forecast", "gaussian_nll_value", "ndtri", "predict_deepar", "predict_lstm",
    "predict_seasonal_naive", "predict_sff", "predict_transformer", "quantiles_from_forecast",
    "seasonal_naive_forecast", "train_deepar", "train_lstm", "train_model", "train_seasonal_naive",
    "train_sff", "train_transformer",
]
