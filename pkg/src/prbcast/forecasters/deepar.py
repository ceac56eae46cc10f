"""Autoregressive recurrent Gaussian forecaster trained by negative log-likelihood.

At step t the LSTM consumes ``[z_{t-1} / scale, time_features(t)]`` and
emits ``(mu_t, sigma_t)`` for ``z_t / scale``. Forecasting unrolls over
the observed context, then draws each future value and feeds the draw back
as the next input (ancestral sampling).
"""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..series import TimeSeries, make_rng
from .base import ForecastDistribution, ModelConfig, TrainedModel
from .common import require_length, require_trained, tail_context
from .nn import NUM_TIME_FEATURES, Linear, LSTMStack, ParamStore, gaussian_nll, sigma_activation, time_features
from .training import Batch, WindowSampler, fit


class DeepARNet:
    def __init__(self, config: ModelConfig, arrays: dict | None = None):
        self.config = config
        self.store = ParamStore(make_rng(config.seed), arrays)
        self.rnn = LSTMStack(self.store, "rnn", 1 + NUM_TIME_FEATURES, config.hidden_size, config.num_layers)
        self.head = Linear(self.store, "head", config.hidden_size, 2)

    def params_at(self, hidden: Tensor) -> tuple[Tensor, Tensor]:
        out = self.head(hidden)
        return out[..., 0], sigma_activation(out[..., 1])

    def unroll(self, inputs: np.ndarray, state=None):
        """Teacher-forced pass; ``inputs`` is (B, T, 1 + F). Returns stacked hidden states and final state."""
        B, T, _ = inputs.shape
        if state is None:
            state = self.rnn.initial_state(B)
        hs = []
        for t in range(T):
            h, state = self.rnn.step(Tensor(inputs[:, t, :]), state)
            hs.append(h)
        return ad.stack(hs, axis=1), state

    def loss(self, batch: Batch) -> Tensor:
        z = batch.values
        inputs = np.concatenate([z[:, :-1, None], batch.features[:, 1:, :]], axis=2)
        hidden, _ = self.unroll(inputs)
        mu, sigma = self.params_at(hidden)
        return ad.reduce_mean(gaussian_nll(z[:, 1:], mu, sigma))


def train_deepar(train: TimeSeries, config: ModelConfig) -> TrainedModel:
    require_length(train, config.context_length + config.horizon)
    net = DeepARNet(config)
    meta = fit(net, WindowSampler(train, config.context_length, config.horizon), config, "deepar")
    return TrainedModel(config, net.store.numpy(), meta, {"train_seconds": net.train_seconds})


def deepar_sample_paths(model: TrainedModel, context: TimeSeries, horizon: int | None = None,
                        num_paths: int | None = None, seed: int = 0) -> ForecastDistribution:
    """Ancestral sampling of ``num_paths`` trajectories over ``horizon`` steps."""
    require_trained(model, "deepar")
    H = horizon or model.config.horizon
    S = num_paths or model.config.num_sample_paths
    values, start = tail_context(model, context)
    C = values.size
    scale = 1.0 + values.mean()
    z = values / scale
    offset = len(context) - C
    feats = time_features(context.start, context.step, C + H, offset=offset)
    net = DeepARNet(model.config, model.params)

    warm = np.concatenate([z[:-1, None], feats[1:C]], axis=1)[None, :, :]
    _, state = net.unroll(warm)
    state = [(Tensor(np.repeat(h.data, S, axis=0)), Tensor(np.repeat(c.data, S, axis=0))) for h, c in state]

    rng = make_rng(seed)
    prev = np.full(S, z[-1])
    paths = np.empty((S, H))
    for t in range(H):
        x = np.concatenate([prev[:, None], np.broadcast_to(feats[C + t], (S, NUM_TIME_FEATURES))], axis=1)
        h, state = net.rnn.step(Tensor(x), state)
        mu, sigma = net.params_at(h)
        draw = mu.data + sigma.data * rng.standard_normal(S)
        paths[:, t] = draw
        prev = draw
    return ForecastDistribution(start, context.step, samples=paths * scale)


def predict_deepar(model: TrainedModel, context: TimeSeries, horizon: int | None = None,
                   num_paths: int | None = None, seed: int = 0) -> ForecastDistribution:
    return deepar_sample_paths(model, context, horizon, num_paths, seed)
