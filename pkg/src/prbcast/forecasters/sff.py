"""Simple feed-forward probabilistic forecaster (Gaussian output per step)."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..series import TimeSeries, make_rng
from .base import ForecastDistribution, ModelConfig, TrainedModel
from .common import require_length, require_trained, tail_context
from .nn import Linear, ParamStore, gaussian_nll, sigma_activation
from .training import Batch, WindowSampler, fit


class SFFNet:
    def __init__(self, config: ModelConfig, arrays: dict | None = None):
        self.config = config
        self.store = ParamStore(make_rng(config.seed), arrays)
        sizes = [config.context_length] + [config.hidden_size] * config.num_layers
        self.hidden = [Linear(self.store, f"hidden.{k}", a, b) for k, (a, b) in enumerate(zip(sizes, sizes[1:]))]
        self.mu_head = Linear(self.store, "mu", config.hidden_size, config.horizon)
        self.sigma_head = Linear(self.store, "sigma", config.hidden_size, config.horizon)

    def forward(self, scaled_context: np.ndarray) -> tuple[Tensor, Tensor]:
        x = Tensor(scaled_context)
        for layer in self.hidden:
            x = ad.relu(layer(x))
        return self.mu_head(x), sigma_activation(self.sigma_head(x))

    def loss(self, batch: Batch) -> Tensor:
        C = self.config.context_length
        mu, sigma = self.forward(batch.values[:, :C])
        return ad.reduce_mean(gaussian_nll(batch.values[:, C:], mu, sigma))


def train_sff(train: TimeSeries, config: ModelConfig) -> TrainedModel:
    require_length(train, config.context_length + config.horizon)
    net = SFFNet(config)
    meta = fit(net, WindowSampler(train, config.context_length, config.horizon), config, "sff")
    return TrainedModel(config, net.store.numpy(), meta, {"train_seconds": net.train_seconds})


def predict_sff(model: TrainedModel, context: TimeSeries, horizon: int | None = None) -> ForecastDistribution:
    """Per-step Gaussian predictive distribution in the original units."""
    require_trained(model, "sff")
    values, start = tail_context(model, context)
    scale = 1.0 + values.mean()
    mu, sigma = SFFNet(model.config, model.params).forward((values / scale)[None, :])
    H = horizon or model.config.horizon
    return ForecastDistribution(start, context.step, mu=mu.data[0, :H] * scale, sigma=sigma.data[0, :H] * scale)
