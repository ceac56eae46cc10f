"""LSTM point baseline: encode the scaled context, emit the horizon directly."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..series import TimeSeries, make_rng
from .base import ModelConfig, PointForecast, TrainedModel
from .common import require_length, require_trained, tail_context
from .nn import Linear, LSTMStack, ParamStore
from .training import Batch, WindowSampler, fit


class LSTMNet:
    def __init__(self, config: ModelConfig, arrays: dict | None = None):
        self.config = config
        self.store = ParamStore(make_rng(config.seed), arrays)
        self.rnn = LSTMStack(self.store, "lstm", 1, config.hidden_size, config.num_layers)
        self.head = Linear(self.store, "head", config.hidden_size, config.horizon)

    def forward(self, scaled_context: np.ndarray) -> Tensor:
        B, C = scaled_context.shape
        state = self.rnn.initial_state(B)
        out = None
        for t in range(C):
            out, state = self.rnn.step(Tensor(scaled_context[:, t:t + 1]), state)
        return self.head(out)

    def loss(self, batch: Batch) -> Tensor:
        C = self.config.context_length
        pred = self.forward(batch.values[:, :C])
        return ad.reduce_mean(ad.square(pred - batch.values[:, C:]))


def train_lstm(train: TimeSeries, config: ModelConfig) -> TrainedModel:
    require_length(train, config.context_length + config.horizon)
    net = LSTMNet(config)
    meta = fit(net, WindowSampler(train, config.context_length, config.horizon), config, "lstm")
    return TrainedModel(config, net.store.numpy(), meta, {"train_seconds": net.train_seconds})


def predict_lstm(model: TrainedModel, context: TimeSeries, horizon: int | None = None) -> PointForecast:
    require_trained(model, "lstm")
    values, start = tail_context(model, context)
    scale = 1.0 + values.mean()
    net = LSTMNet(model.config, model.params)
    out = net.forward((values / scale)[None, :]).data[0] * scale
    H = horizon or model.config.horizon
    return PointForecast(start, context.step, out[:H])
