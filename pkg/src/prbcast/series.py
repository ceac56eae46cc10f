"""Time-series data model, synthetic PRB trace generation, splitting and I/O.

Trace files are CSV with a single leading comment line carrying metadata
as JSON, followed by a ``timestamp,value`` header::

    # {"series_id": "cell-0", "step": 900.0, "capacity": 273.0}
    timestamp,value
    2023-01-01T00:00:00Z,104.21
    ...
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, ParseError, SizingError, ValidationError

DEFAULT_CAPACITY = 273.0
DEFAULT_DAY_STEPS = 96
BURST_DURATION = 4
EPOCH = datetime(2023, 1, 1, tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    text = ts.strftime("%Y-%m-%dT%H:%M:%S")
    if ts.microsecond:
        text += f".{ts.microsecond:06d}"
    return text + "Z"


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A univariate, regularly sampled PRB-utilization trace.

    ``step`` is in seconds; ``values`` is stored as a read-only float64 array.
    """

    series_id: str
    start: datetime
    step: float
    values: np.ndarray
    capacity: float = DEFAULT_CAPACITY

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.start.tzinfo is None:
            object.__setattr__(self, "start", self.start.replace(tzinfo=timezone.utc))
        if vals.size == 0:
            raise ValidationError("TimeSeries values must be non-empty")
        if not self.step > 0:
            raise ValidationError(f"TimeSeries step must be positive, got {self.step}")
        if not self.capacity > 0:
            raise ValidationError(f"TimeSeries capacity must be positive, got {self.capacity}")
        if not np.isfinite(vals).all():
            raise ValidationError("TimeSeries values must be finite")
        bad = np.flatnonzero((vals < 0) | (vals > self.capacity))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(
                f"value {vals[i]!r} at index {i} outside [0, capacity={self.capacity}]")

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (self.series_id == other.series_id and self.start == other.start
                and self.step == other.step and self.capacity == other.capacity
                and np.array_equal(self.values, other.values))

    def timestamp(self, i: int) -> datetime:
        return self.start + timedelta(seconds=self.step * i)

    def timestamps(self) -> list[datetime]:
        return [self.timestamp(i) for i in range(len(self))]

    def index_offset(self) -> int:
        """Sample index of ``start`` counted from the fixed epoch 2023-01-01Z.

        Used to derive calendar features independent of the window.
        """
        return int(round((self.start - EPOCH).total_seconds() / self.step))

    def window(self, lo: int, hi: int) -> "TimeSeries":
        lo, hi = max(lo, 0), min(hi, len(self))
        return TimeSeries(self.series_id, self.timestamp(lo), self.step,
                          self.values[lo:hi], self.capacity)

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.series_id, self.start, self.step, values, self.capacity)


@dataclass(frozen=True)
class SplitSpec:
    context_length: int
    horizon: int
    test_windows: int = 1

    def __post_init__(self):
        for name in ("context_length", "horizon", "test_windows"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class TraceGenConfig:
    length: int = 4000
    base_load: float = 120.0
    daily_amplitude: float = 50.0
    weekly_amplitude: float = 10.0
    noise_ar_coeff: float = 0.8
    noise_sigma: float = 6.0
    burst_rate: float = 1.0
    burst_height: float = 30.0
    seed: int = 0
    capacity: float = DEFAULT_CAPACITY
    day_steps: int = DEFAULT_DAY_STEPS
    series_id: str = "cell-0"
    start: str = "2023-01-01T00:00:00Z"

    def validate(self) -> None:
        if not isinstance(self.length, (int, np.integer)) or self.length < 1:
            raise ConfigError("length", f"must be a positive integer, got {self.length!r}")
        if not self.capacity > 0:
            raise ConfigError("capacity", f"must be positive, got {self.capacity!r}")
        if not 0 < self.base_load < self.capacity:
            raise ConfigError("base_load", f"must lie in (0, capacity={self.capacity}), got {self.base_load!r}")
        for name in ("daily_amplitude", "weekly_amplitude", "noise_sigma", "burst_rate", "burst_height"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(name, f"must be a non-negative real, got {v!r}")
        if not 0 <= self.noise_ar_coeff < 1:
            raise ConfigError("noise_ar_coeff", f"must lie in [0, 1), got {self.noise_ar_coeff!r}")
        if not isinstance(self.day_steps, (int, np.integer)) or self.day_steps < 1:
            raise ConfigError("day_steps", f"must be a positive integer, got {self.day_steps!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TraceGenConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown trace generator field")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream for ``seed``; the algorithm is fixed so output is portable."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def generate_prb_trace(config: TraceGenConfig) -> TimeSeries:
    """Synthesize a PRB-utilization trace.

    values[t] = clip(base + A_d sin(2 pi t / day) + A_w sin(2 pi t / week)
                     + e_t + bursts_t, 0, capacity)
    with AR(1) noise e_t = a e_{t-1} + N(0, sigma) and Poisson-placed
    rectangular bursts of fixed duration.
    """
    config.validate()
    n = int(config.length)
    rng = make_rng(config.seed)
    t = np.arange(n, dtype=np.float64)
    day = float(config.day_steps)
    week = 7.0 * day
    # phases from t mod period so every period repeats bit-for-bit
    values = (config.base_load
              + config.daily_amplitude * np.sin(2.0 * np.pi * np.mod(t, day) / day)
              + config.weekly_amplitude * np.sin(2.0 * np.pi * np.mod(t, week) / week))
    innovations = rng.standard_normal(n) * config.noise_sigma
    values = values + kernels.ar1_filter(innovations, float(config.noise_ar_coeff))
    n_bursts = rng.poisson(config.burst_rate * n / day)
    starts = rng.integers(0, n, size=n_bursts)
    bursts = np.zeros(n)
    for s in np.sort(starts):
        bursts[s:s + BURST_DURATION] += config.burst_height
    values = np.clip(values + bursts, 0.0, config.capacity)
    return TimeSeries(config.series_id, parse_timestamp(config.start), 86400.0 / day,
                      values, float(config.capacity))


def split_train_test(series: TimeSeries, spec: SplitSpec):
    """Hold out ``test_windows`` terminal windows of ``horizon`` samples each.

    Windows are laid end to end (stride = horizon) and finish at the series
    end. Each window's context is the ``context_length`` samples preceding
    its actuals, which may overlap earlier windows' actuals; the training
    series stops before the first held-out sample.

    Returns ``(train, [(context, actual), ...])`` in chronological order.
    """
    n = len(series)
    held = spec.horizon * spec.test_windows
    required = spec.context_length + held
    if required > n:
        raise SizingError(required, n)
    windows = []
    for k in range(spec.test_windows):
        a_lo = n - held + k * spec.horizon
        windows.append((series.window(a_lo - spec.context_length, a_lo),
                        series.window(a_lo, a_lo + spec.horizon)))
    train = series.window(0, n - held)
    return train, windows


def mean_scale(context) -> float:
    """1 + arithmetic mean of the context values."""
    vals = context.values if isinstance(context, TimeSeries) else np.asarray(context, dtype=np.float64)
    if vals.size == 0:
        raise SizingError(1, 0, "context")
    return 1.0 + float(np.mean(vals))


def format_trace(series: TimeSeries) -> str:
    meta = {"series_id": series.series_id, "step": float(series.step), "capacity": float(series.capacity)}
    lines = ["# " + json.dumps(meta, sort_keys=True), "timestamp,value"]
    for i, v in enumerate(series.values):
        lines.append(f"{format_timestamp(series.timestamp(i))},{float(v)!r}")
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> TimeSeries:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ParseError("missing metadata comment line", 1)
    try:
        meta = json.loads(lines[0][1:])
        series_id = str(meta["series_id"])
        step = float(meta["step"])
        capacity = float(meta["capacity"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad metadata: {exc}", 1) from None
    if len(lines) < 2 or lines[1].strip().replace(" ", "") != "timestamp,value":
        raise ParseError("expected header 'timestamp,value'", 2)
    stamps, values = [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 2 fields, got {len(parts)}", lineno)
        try:
            ts = parse_timestamp(parts[0])
            v = float(parts[1])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if stamps:
            delta = (ts - stamps[-1]).total_seconds()
            if delta <= 0:
                raise ParseError(f"timestamp {parts[0].strip()} does not increase", lineno)
            if abs(delta - step) > 1e-6:
                raise ParseError(f"irregular sampling: gap {delta}s, expected {step}s", lineno)
        if not math.isfinite(v):
            raise ParseError(f"non-finite value {parts[1].strip()}", lineno)
        if v < 0 or v > capacity:
            raise ValidationError(f"line {lineno}: value {v!r} outside [0, capacity={capacity}]")
        stamps.append(ts)
        values.append(v)
    if not values:
        raise ParseError("trace has no samples", len(lines))
    return TimeSeries(series_id, stamps[0], step, values, capacity)


def save_trace(series: TimeSeries, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_trace(series))


def load_trace(path) -> TimeSeries:
    return parse_trace(Path(path).read_text())
