"""Point and probabilistic accuracy metrics plus per-model evaluation reports.

All point metrics average over the N forecast steps. ``mae_eq2`` is the
plain mean absolute error; ``mase_scaled`` divides it by the in-sample
seasonal-naive MAE of the training series. Coverage counts actuals strictly
below the quantile forecast. Sums are correctly rounded (math.fsum), so results
do not depend on summation order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateScaleError, DomainError, ShapeError

LEVELS = tuple(round(0.1 * k, 1) for k in range(1, 10))


def _sum(x) -> float:
    return math.fsum(np.asarray(x, dtype=np.float64).ravel())


def _mean(x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    return math.fsum(x) / x.size


def _pair(actual, forecast, name: str) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(actual, dtype=np.float64).reshape(-1)
    f = np.asarray(forecast, dtype=np.float64).reshape(-1)
    if y.shape != f.shape:
        raise ShapeError(f"{name}: length mismatch, actual has {y.size} values and forecast {f.size}")
    if y.size == 0:
        raise ShapeError(f"{name}: at least one value is required")
    return y, f


def mse(actual, forecast) -> float:
    y, f = _pair(actual, forecast, "mse")
    return _mean((y - f) ** 2)


def mae_eq2(actual, forecast) -> float:
    y, f = _pair(actual, forecast, "mae_eq2")
    return _mean(np.abs(y - f))


def seasonal_naive_scale(train, season_length: int) -> float:
    """Mean of |train[t] - train[t - m]| over the training series."""
    x = np.asarray(train, dtype=np.float64).reshape(-1)
    if x.size <= season_length:
        raise ShapeError(f"mase_scaled: training series of length {x.size} must exceed season {season_length}")
    return _mean(np.abs(x[season_length:] - x[:-season_length]))


def mase_scaled(actual, forecast, train, season_length: int) -> float:
    y, f = _pair(actual, forecast, "mase_scaled")
    scale = seasonal_naive_scale(train, season_length)
    if scale == 0.0:
        raise DegenerateScaleError("mase_scaled: in-sample seasonal-naive error is zero (perfectly periodic training data)")
    return _mean(np.abs(y - f)) / scale


def mape(actual, forecast) -> float:
    y, f = _pair(actual, forecast, "mape")
    zeros = np.flatnonzero(y == 0)
    if zeros.size:
        raise DomainError(f"mape: actual value is zero at index {int(zeros[0])}")
    return _mean(np.abs(y - f) / np.abs(y))


def nd(actual, forecast) -> float:
    y, f = _pair(actual, forecast, "nd")
    denom = _sum(np.abs(y))
    if denom == 0.0:
        raise DegenerateScaleError("nd: actual values are all zero")
    return _sum(np.abs(y - f)) / denom


def coverage(actual, quantile_forecast) -> float:
    y, f = _pair(actual, quantile_forecast, "coverage")
    return _mean(y < f)


def quantile_loss(actual, quantile_forecast, q: float, aggregation: str = "sum") -> float:
    """Pinball loss: (y - f) q where y >= f, (f - y)(1 - q) otherwise."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile_loss: level must lie in (0, 1), got {q!r}")
    y, f = _pair(actual, quantile_forecast, "quantile_loss")
    terms = np.where(y >= f, (y - f) * q, (f - y) * (1.0 - q))
    if aggregation == "sum":
        return _sum(terms)
    if aggregation == "mean":
        return _mean(terms)
    raise DomainError(f"quantile_loss: aggregation must be 'sum' or 'mean', got {aggregation!r}")


def _level_key(q: float) -> str:
    return f"{q:.1f}"


@dataclass
class EvaluationReport:
    model: str
    n: int
    mse: float
    mae: float
    mase_scaled: float | None
    mape: float | None
    nd: float | None
    quantile_loss: dict | None = None
    coverage: dict | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "N": self.n,
            "mse": self.mse,
            "mae_eq2": self.mae,
            "mase_scaled": self.mase_scaled,
            "mape": self.mape,
            "nd": self.nd,
            "quantile_loss": self.quantile_loss,
            "coverage": self.coverage,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(d["model"], d["N"], d["mse"], d["mae_eq2"], d["mase_scaled"], d["mape"], d["nd"],
                   d.get("quantile_loss"), d.get("coverage"), list(d.get("notes", [])))


def _soft(name: str, fn, notes: list, strict: bool):
    try:
        return fn()
    except (DegenerateScaleError, DomainError) as exc:
        if strict:
            raise
        notes.append(f"{name} undefined: {exc}")
        return None


def evaluate_arrays(actual, point, quantiles, train, season_length: int, model: str = "",
                    strict: bool = True) -> EvaluationReport:
    """Build a report from raw arrays.

    ``quantiles`` is a (9, N) array for levels 0.1..0.9, or None to omit
    ND, quantile loss and coverage.
    """
    y, point = _pair(actual, point, "evaluate")
    tr = np.asarray(train, dtype=np.float64).reshape(-1)
    notes: list = []
    report = EvaluationReport(
        model=model,
        n=int(y.size),
        mse=mse(y, point),
        mae=mae_eq2(y, point),
        mase_scaled=_soft("mase_scaled", lambda: mase_scaled(y, point, tr, season_length), notes, strict),
        mape=_soft("mape", lambda: mape(y, point), notes, strict),
        nd=None,
        notes=notes,
    )
    if quantiles is not None:
        qs = np.asarray(quantiles, dtype=np.float64)
        if qs.shape != (len(LEVELS), y.size):
            raise ShapeError(f"evaluate: expected quantiles of shape {(len(LEVELS), y.size)}, got {qs.shape}")
        report.nd = _soft("nd", lambda: nd(y, point), notes, strict)
        report.quantile_loss = {_level_key(q): quantile_loss(y, qs[i], q) for i, q in enumerate(LEVELS)}
        report.coverage = {_level_key(q): coverage(y, qs[i]) for i, q in enumerate(LEVELS)}
    return report


def _values(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def evaluate_model(forecast, actual, train, season_length: int, model: str = "",
                   with_quantiles: bool | None = None, strict: bool = True) -> EvaluationReport:
    """Score one forecast (probabilistic or point) against held-out actuals.

    Point metrics use the median of a probabilistic forecast. Quantile
    metrics run over levels 0.1..0.9. For point forecasts they are computed
    on the degenerate distribution (the point value at every level) when
    ``with_quantiles`` is true, and omitted together with ND otherwise.

    With ``strict=False`` scale-degenerate metrics (zero MASE denominator,
    zero actuals) are reported as None with a note instead of raising.
    """
    if with_quantiles is None:
        with_quantiles = hasattr(forecast, "sigma")
    quantiles = forecast.quantiles(LEVELS) if with_quantiles else None
    return evaluate_arrays(_values(actual), forecast.median(), quantiles, _values(train), season_length,
                           model, strict)
