"""Shared forecaster types: configs, trained models and forecast containers."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timedelta

import numpy as np

from ..autodiff import dump_checkpoint, load_checkpoint, parse_checkpoint, save_checkpoint
from ..errors import ConfigError, DomainError, ValidationError
from ..series import make_rng, parse_timestamp, format_timestamp
from .quantiles import check_levels, enforce_monotone, ndtri

KINDS = ("seasonal_naive", "lstm", "sff", "deepar", "transformer")
PROBABILISTIC = ("sff", "deepar", "transformer")
SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    context_length: int = 192
    horizon: int = 48
    hidden_size: int = 40
    num_layers: int = 2
    epochs: int = 200
    batch_size: int = 32
    batches_per_epoch: int = 4
    learning_rate: float = 1e-3
    num_sample_paths: int = 100
    season_length: int = 96
    num_heads: int = 4
    model_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}, got {self.kind!r}")
        for name in ("context_length", "horizon", "hidden_size", "num_layers", "epochs",
                     "batch_size", "batches_per_epoch", "num_sample_paths", "season_length",
                     "num_heads", "model_dim"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        if not (isinstance(self.learning_rate, (int, float)) and self.learning_rate > 0):
            raise ConfigError("learning_rate", f"must be positive, got {self.learning_rate!r}")
        if self.num_sample_paths < 2:
            raise ConfigError("num_sample_paths", "must be at least 2")
        if self.kind == "transformer" and self.model_dim % self.num_heads:
            raise ConfigError("model_dim", f"{self.model_dim} is not divisible by num_heads={self.num_heads}")
        if self.kind == "seasonal_naive" and self.context_length < self.season_length:
            object.__setattr__(self, "context_length", self.season_length)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        if "kind" not in d:
            raise ConfigError("kind", "is required")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown model config field")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrainedModel:
    """Learned weights plus the config that produced them."""

    config: ModelConfig
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    # wall-clock figures; never serialized so checkpoints stay reproducible
    runtime: dict = field(default_factory=dict, compare=False)

    @property
    def kind(self) -> str:
        return self.config.kind

    def to_json(self) -> str:
        return dump_checkpoint(self.kind, self.config.to_dict(), self.params, self.meta)

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        return cls._from_doc(parse_checkpoint(text))

    def save(self, path) -> None:
        save_checkpoint(path, self.kind, self.config.to_dict(), self.params, self.meta)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls._from_doc(load_checkpoint(path))

    @classmethod
    def _from_doc(cls, doc: dict) -> "TrainedModel":
        config = ModelConfig.from_dict(doc["config"])
        if config.kind != doc["kind"]:
            raise ValidationError(f"checkpoint kind {doc['kind']!r} disagrees with config kind {config.kind!r}")
        return cls(config, doc["params"], doc["meta"])

    def version_hash(self) -> str:
        h = hashlib.sha256(self.config.config_hash().encode())
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name], dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PointForecast:
    start: datetime
    step: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64).reshape(-1))

    @property
    def horizon(self) -> int:
        return self.values.size

    def median(self) -> np.ndarray:
        return self.values

    def quantiles(self, levels) -> np.ndarray:
        """Degenerate distribution: every level returns the point values."""
        lv = check_levels(levels)
        return np.tile(self.values, (lv.size, 1))

    def timestamps(self) -> list[datetime]:
        return [self.start + timedelta(seconds=self.step * i) for i in range(self.horizon)]


@dataclass(frozen=True, eq=False)
class ForecastDistribution:
    """Predictive distribution over ``horizon`` steps.

    Either ``samples`` (S x horizon) or per-step Gaussian ``mu``/``sigma``
    (or both) are present. Quantiles come from the samples when the
    distribution is sample-based, otherwise from the Gaussian parameters.
    """

    start: datetime
    step: float
    samples: np.ndarray | None = None
    mu: np.ndarray | None = None
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.samples is None and self.mu is None:
            raise ValidationError("ForecastDistribution needs samples or Gaussian parameters")
        if self.samples is not None:
            s = np.asarray(self.samples, dtype=np.float64)
            if s.ndim != 2 or s.shape[0] < 2:
                raise ValidationError(f"sample paths must be S x horizon with S >= 2, got shape {s.shape}")
            if not np.isfinite(s).all():
                raise ValidationError("sample paths must be finite")
            object.__setattr__(self, "samples", s)
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
            sigma = np.asarray(self.sigma, dtype=np.float64).reshape(-1)
            if mu.shape != sigma.shape:
                raise ValidationError("mu and sigma must have equal length")
            if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
                raise ValidationError("Gaussian parameters must be finite")
            if (sigma < SIGMA_FLOOR * (1 - 1e-9)).any():
                raise ValidationError(f"sigma must be >= {SIGMA_FLOOR}")
            object.__setattr__(self, "mu", mu)
            object.__setattr__(self, "sigma", sigma)
        if self.samples is not None and self.mu is not None and self.samples.shape[1] != self.mu.size:
            raise ValidationError("samples and Gaussian parameters disagree on horizon")

    @property
    def horizon(self) -> int:
        return self.samples.shape[1] if self.samples is not None else self.mu.size

    @property
    def parametric(self) -> bool:
        return self.mu is not None

    def quantiles(self, levels) -> np.ndarray:
        """Quantile values, shape (len(levels), horizon), non-decreasing in level."""
        lv = check_levels(levels)
        if self.mu is not None:
            z = np.array([ndtri(float(p)) for p in lv])
            q = self.mu[None, :] + self.sigma[None, :] * z[:, None]
        else:
            q = np.quantile(self.samples, lv, axis=0, method="linear")
        return enforce_monotone(lv, q)

    def median(self) -> np.ndarray:
        if self.mu is not None:
            return self.mu.copy()
        return self.quantiles([0.5])[0]

    def with_samples(self, num_paths: int, seed: int) -> "ForecastDistribution":
        """Materialize independent per-step Gaussian draws as sample paths."""
        if self.samples is not None:
            return self
        rng = make_rng(seed)
        draws = self.mu[None, :] + self.sigma[None, :] * rng.standard_normal((num_paths, self.mu.size))
        return ForecastDistribution(self.start, self.step, draws, self.mu, self.sigma)

    def timestamps(self) -> list[datetime]:
        return [self.start + timedelta(seconds=self.step * i) for i in range(self.horizon)]


def quantiles_from_forecast(f, levels) -> np.ndarray:
    """Per-step quantiles (len(levels) x horizon) of any forecast."""
    return f.quantiles(levels)


def gaussian_nll_value(z, mu, sigma) -> np.ndarray:
    """Direct evaluation of -log N(z; mu, sigma^2)."""
    z, mu, sigma = (np.asarray(a, dtype=np.float64) for a in (z, mu, sigma))
    return 0.5 * np.log(2.0 * np.pi * sigma * sigma) + (z - mu) ** 2 / (2.0 * sigma * sigma)
