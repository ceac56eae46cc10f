from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from ..errors import SizingError, StateError
from ..series import TimeSeries
from .base import TrainedModel


def tail_context(model: TrainedModel, context: TimeSeries) -> tuple[np.ndarray, datetime]:
    """Last ``context_length`` values and the timestamp of the first forecast step."""
    C = model.config.context_length
    if len(context) < C:
        raise SizingError(C, len(context), "context")
    values = np.asarray(context.values[-C:], dtype=np.float64)
    return values, context.start + timedelta(seconds=context.step * len(context))


def require_trained(model: TrainedModel, kind: str) -> None:
    if model.kind != kind:
        raise StateError(f"expected a {kind} model, got {model.kind}")
    if not model.params:
        raise StateError(f"{kind} model has no trained parameters")


def require_length(train: TimeSeries, needed: int) -> None:
    if len(train) < needed:
        raise SizingError(needed, len(train), "training series")
