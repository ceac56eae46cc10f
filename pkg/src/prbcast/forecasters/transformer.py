"""Minimal encoder-decoder Transformer emitting Gaussian parameters per horizon step.

Encoder tokens are the scaled context values plus calendar features;
decoder tokens are the calendar features of the future steps. One encoder
layer and one decoder layer (self-attention, cross-attention, feed-forward,
each with residual connection and post-layer-norm). All horizon steps are
decoded in a single pass.
"""
from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ShapeError
from ..series import TimeSeries, make_rng
from .base import ForecastDistribution, ModelConfig, TrainedModel
from .common import require_length, require_trained, tail_context
from .nn import (NUM_TIME_FEATURES, Linear, ParamStore, gaussian_nll, layer_norm,
                 positional_encoding, sigma_activation, time_features)
from .training import Batch, WindowSampler, fit


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) over the key axis."""
    d = q.shape[-1]
    scores = ad.matmul(q * (1.0 / math.sqrt(d)), ad.transpose(k, (0, 1, 3, 2)))
    return ad.softmax(scores)


class MultiHeadAttention:
    def __init__(self, store: ParamStore, name: str, dim: int, heads: int):
        self.name = name
        self.dim = dim
        self.heads = heads
        self.q = Linear(store, f"{name}.q", dim, dim)
        self.k = Linear(store, f"{name}.k", dim, dim)
        self.v = Linear(store, f"{name}.v", dim, dim)
        self.o = Linear(store, f"{name}.o", dim, dim)
        self.last_weights: Tensor | None = None

    def _split(self, x: Tensor) -> Tensor:
        B, T, _ = x.shape
        return ad.transpose(ad.reshape(x, (B, T, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def __call__(self, query: Tensor, memory: Tensor) -> Tensor:
        if query.ndim != 3 or memory.ndim != 3 or query.shape[-1] != self.dim or memory.shape[-1] != self.dim \
                or query.shape[0] != memory.shape[0]:
            raise ShapeError(f"{self.name}: attention expects (B, T, {self.dim}) inputs, "
                             f"got query {query.shape} and memory {memory.shape}")
        q, k, v = self._split(self.q(query)), self._split(self.k(memory)), self._split(self.v(memory))
        w = attention_weights(q, k)
        self.last_weights = w
        ctx = ad.matmul(w, v)
        B, _, Tq, _ = ctx.shape
        merged = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (B, Tq, self.dim))
        return self.o(merged)


class FeedForward:
    def __init__(self, store: ParamStore, name: str, dim: int):
        self.inner = Linear(store, f"{name}.inner", dim, 2 * dim)
        self.outer = Linear(store, f"{name}.outer", 2 * dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(ad.relu(self.inner(x)))


class Norm:
    def __init__(self, store: ParamStore, name: str, dim: int):
        self.gamma = store.get(f"{name}.gamma", (dim,), fill=1.0)
        self.beta = store.get(f"{name}.beta", (dim,), fill=0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class TransformerNet:
    def __init__(self, config: ModelConfig, arrays: dict | None = None):
        if config.model_dim % config.num_heads:
            raise ShapeError(f"model_dim {config.model_dim} not divisible by num_heads {config.num_heads}")
        self.config = config
        d = config.model_dim
        s = self.store = ParamStore(make_rng(config.seed), arrays)
        self.enc_embed = Linear(s, "enc.embed", 1 + NUM_TIME_FEATURES, d)
        self.dec_embed = Linear(s, "dec.embed", NUM_TIME_FEATURES, d)
        self.enc_attn = MultiHeadAttention(s, "enc.self_attn", d, config.num_heads)
        self.enc_norm1 = Norm(s, "enc.norm1", d)
        self.enc_ff = FeedForward(s, "enc.ff", d)
        self.enc_norm2 = Norm(s, "enc.norm2", d)
        self.dec_attn = MultiHeadAttention(s, "dec.self_attn", d, config.num_heads)
        self.dec_norm1 = Norm(s, "dec.norm1", d)
        self.cross_attn = MultiHeadAttention(s, "dec.cross_attn", d, config.num_heads)
        self.dec_norm2 = Norm(s, "dec.norm2", d)
        self.dec_ff = FeedForward(s, "dec.ff", d)
        self.dec_norm3 = Norm(s, "dec.norm3", d)
        self.head = Linear(s, "head", d, 2)

    def forward(self, enc_tokens: np.ndarray, dec_tokens: np.ndarray,
                use_positional: bool = True) -> tuple[Tensor, Tensor]:
        """``enc_tokens`` (B, C, 1 + F), ``dec_tokens`` (B, H, F) -> (mu, sigma), each (B, H)."""
        B, C, _ = enc_tokens.shape
        H = dec_tokens.shape[1]
        d = self.config.model_dim
        x = self.enc_embed(Tensor(enc_tokens))
        y = self.dec_embed(Tensor(dec_tokens))
        if use_positional:
            x = x + positional_encoding(C, d)
            y = y + positional_encoding(H, d, offset=C)
        x = self.enc_norm1(x + self.enc_attn(x, x))
        memory = self.enc_norm2(x + self.enc_ff(x))
        y = self.dec_norm1(y + self.dec_attn(y, y))
        y = self.dec_norm2(y + self.cross_attn(y, memory))
        y = self.dec_norm3(y + self.dec_ff(y))
        out = self.head(y)
        return out[..., 0], sigma_activation(out[..., 1])

    def loss(self, batch: Batch) -> Tensor:
        C = self.config.context_length
        enc = np.concatenate([batch.values[:, :C, None], batch.features[:, :C]], axis=2)
        mu, sigma = self.forward(enc, batch.features[:, C:])
        return ad.reduce_mean(gaussian_nll(batch.values[:, C:], mu, sigma))


def train_transformer(train: TimeSeries, config: ModelConfig) -> TrainedModel:
    require_length(train, config.context_length + config.horizon)
    net = TransformerNet(config)
    meta = fit(net, WindowSampler(train, config.context_length, config.horizon), config, "transformer")
    return TrainedModel(config, net.store.numpy(), meta, {"train_seconds": net.train_seconds})


def predict_transformer(model: TrainedModel, context: TimeSeries, horizon: int | None = None) -> ForecastDistribution:
    require_trained(model, "transformer")
    values, start = tail_context(model, context)
    C, Hm = values.size, model.config.horizon
    scale = 1.0 + values.mean()
    feats = time_features(context.start, context.step, C + Hm, offset=len(context) - C)
    enc = np.concatenate([(values / scale)[:, None], feats[:C]], axis=1)[None]
    mu, sigma = TransformerNet(model.config, model.params).forward(enc, feats[C:][None])
    H = horizon or Hm
    return ForecastDistribution(start, context.step, mu=mu.data[0, :H] * scale, sigma=sigma.data[0, :H] * scale)
