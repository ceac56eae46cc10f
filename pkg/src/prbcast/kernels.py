"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the
numpy fallback is used. Set ``PRBCAST_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("PRBCAST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend

BACKEND: str = _active.BACKEND
lstm_cell_forward = _active.lstm_cell_forward
lstm_cell_backward = _active.lstm_cell_backward
ar1_filter = _active.ar1_filter


def use_backend(name: str) -> None:
    """Switch the active backend at runtime ("cython" or "python")."""
    global _active, BACKEND, lstm_cell_forward, lstm_cell_backward, ar1_filter
    if name == "python":
        _active = python_backend
    elif name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        _active = compiled_backend
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = _active.BACKEND
    lstm_cell_forward = _active.lstm_cell_forward
    lstm_cell_backward = _active.lstm_cell_backward
    ar1_filter = _active.ar1_filter
