"""Durable per-series observation store: an append-only NDJSON log plus snapshots.

Layout under ``root``::

    series/<id>/log.ndjson      one JSON line per accepted batch: {"seq", "points": [[ts, value], ...]}
    series/<id>/snapshot.json   {"format", "seq", "start_us", "step_us", "values"} covering batches <= seq

Every batch is written and fsynced before it is acknowledged. On open the
snapshot is loaded and later log records replayed; a torn final line (a
crash mid-append) is discarded and truncated away.
"""
from __future__ import annotations

import json
import math
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from ..errors import PrbcastValueError, StateError
from ..series import DEFAULT_CAPACITY, TimeSeries, format_timestamp, parse_timestamp

SERIES_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]{0,63}$")
UNIX = datetime(1970, 1, 1, tzinfo=timezone.utc)
US = timedelta(microseconds=1)
SNAPSHOT_FORMAT = "prbcast-series-snapshot"


class BatchError(PrbcastValueError):
    """A rejected batch; ``index`` is the first offending element (or None)."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"{message} (index {index})")
        self.reason = message


class SimulatedCrash(BaseException):
    """Raised by fault hooks in tests to emulate a process kill."""


def to_us(ts: datetime) -> int:
    return (ts - UNIX) // US


def from_us(us: int) -> datetime:
    return UNIX + timedelta(microseconds=us)


def check_series_id(series_id: str) -> str:
    if not isinstance(series_id, str) or not SERIES_ID.match(series_id):
        raise BatchError(f"invalid series id {series_id!r}: use 1-64 of [A-Za-z0-9_.-]")
    return series_id


@dataclass(frozen=True)
class Window:
    """Immutable published view of one series; swapped whole on every batch."""

    start_us: int | None
    step_us: int | None
    values: np.ndarray
    seq: int

    def __len__(self) -> int:
        return self.values.size

    def last_us(self) -> int | None:
        if self.start_us is None:
            return None
        return self.start_us + (self.values.size - 1) * (self.step_us or 0)


EMPTY = Window(None, None, np.zeros(0), 0)


class _Series:
    def __init__(self, path: Path):
        self.path = path
        self.lock = threading.Lock()
        self.window = EMPTY
        self.fh = None
        self.since_snapshot = 0


def parse_points(points, capacity: float) -> list[tuple[int, float]]:
    """Validate the wire form ``[{"timestamp": str, "value": number}, ...]``."""
    if not isinstance(points, list):
        raise BatchError("body must be a JSON array of {timestamp, value} objects")
    out = []
    for i, p in enumerate(points):
        if not isinstance(p, dict) or set(p) != {"timestamp", "value"}:
            raise BatchError("each observation must be an object with exactly timestamp and value", i)
        ts, v = p["timestamp"], p["value"]
        if not isinstance(ts, str):
            raise BatchError("timestamp must be an ISO-8601 string", i)
        try:
            t = parse_timestamp(ts)
        except ValueError:
            raise BatchError(f"unparseable timestamp {ts!r}", i) from None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise BatchError(f"value must be a finite number, got {v!r}", i)
        if not 0 <= v <= capacity:
            raise BatchError(f"value {v!r} outside [0, capacity={capacity}]", i)
        out.append((to_us(t), float(v)))
    return out


def _plan(window: Window, points: list) -> tuple[list, int, int | None, int | None]:
    """Split a batch into new points and exact duplicates against ``window``.

    Returns (new_points, duplicates, start_us, step_us). Raises BatchError on
    time regression, conflicting duplicates or irregular spacing.
    """
    start, step, n = window.start_us, window.step_us, len(window)
    vals = window.values
    new = []
    last = window.last_us()
    for i, (t, v) in enumerate(points):
        if last is not None and t <= last:
            # possible exact duplicate of an already stored (or earlier in batch) point
            k = None
            if step and (t - start) % step == 0:
                k = (t - start) // step
            elif step is None and t == start:
                k = 0
            if k is not None and 0 <= k < n + len(new):
                stored = vals[k] if k < n else new[k - n][1]
                if stored == v:
                    continue
                raise BatchError(f"conflicting value for existing timestamp {format_timestamp(from_us(t))}", i)
            raise BatchError("time regression: timestamp does not advance", i)
        if start is None:
            start = t
        elif step is None:
            step = t - last
        elif t - last != step:
            raise BatchError(f"irregular spacing: expected step {step / 1e6:g}s, got {(t - last) / 1e6:g}s", i)
        new.append((t, v))
        last = t
    duplicates = len(points) - len(new)
    return new, duplicates, start, step


class SeriesStore:
    """Thread-safe store; ingestion is serialized per series, reads are lock-free."""

    def __init__(self, root, capacity: float = DEFAULT_CAPACITY, snapshot_every: int = 64,
                 fsync: bool = True, fault=None):
        self.root = Path(root)
        self.capacity = float(capacity)
        self.snapshot_every = snapshot_every
        self.fsync = fsync
        self.fault = fault           # test hook: fault(stage) may raise SimulatedCrash
        self._series: dict[str, _Series] = {}
        self._guard = threading.Lock()
        (self.root / "series").mkdir(parents=True, exist_ok=True)
        for d in sorted((self.root / "series").iterdir()):
            if d.is_dir() and SERIES_ID.match(d.name):
                self._open(d.name)

    # -- internals ---------------------------------------------------------
    def _hit(self, stage: str) -> None:
        if self.fault is not None:
            self.fault(stage)

    def _get(self, series_id: str, create: bool) -> _Series | None:
        with self._guard:
            s = self._series.get(series_id)
            if s is None and create:
                s = self._open(series_id)
            return s

    def _open(self, series_id: str) -> _Series:
        path = self.root / "series" / series_id
        path.mkdir(parents=True, exist_ok=True)
        s = _Series(path)
        s.window = self._replay(path)
        s.fh = open(path / "log.ndjson", "ab")
        self._series[series_id] = s
        return s

    def _replay(self, path: Path) -> Window:
        tmp = path / "snapshot.json.tmp"
        if tmp.exists():
            tmp.unlink()
        window = EMPTY
        snap = path / "snapshot.json"
        if snap.exists():
            doc = json.loads(snap.read_text())
            if doc.get("format") != SNAPSHOT_FORMAT:
                raise StateError(f"{snap}: not a series snapshot")
            window = Window(doc["start_us"], doc["step_us"], _frozen(doc["values"]), doc["seq"])
        log = path / "log.ndjson"
        if not log.exists():
            return window
        data = log.read_bytes()
        good = 0
        pending = []
        for lineno, line in enumerate(data.split(b"\n")):
            end = good + len(line) + 1
            if end > len(data):           # no newline: torn tail from a crash mid-append
                break
            try:
                rec = json.loads(line)
            except ValueError:
                raise StateError(f"{log}:{lineno + 1}: corrupt log record") from None
            good = end
            if rec["seq"] > window.seq:
                pending.append(rec)
        if good < len(data):
            with open(log, "r+b") as fh:
                fh.truncate(good)
                fh.flush()
                os.fsync(fh.fileno())
        for rec in pending:
            window = _apply(window, [(t, v) for t, v in rec["points"]], rec["seq"])
        return window

    def _snapshot(self, s: _Series) -> None:
        w = s.window
        doc = {"format": SNAPSHOT_FORMAT, "seq": w.seq, "start_us": w.start_us, "step_us": w.step_us,
               "values": w.values.tolist()}
        tmp = s.path / "snapshot.json.tmp"
        with open(tmp, "w") as fh:
            fh.write(json.dumps(doc))
            self._hit("snapshot_write")
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())
        os.replace(tmp, s.path / "snapshot.json")
        s.since_snapshot = 0

    # -- public API --------------------------------------------------------
    def append(self, series_id: str, points) -> dict:
        """Validate and durably append a wire-format batch; returns counts."""
        check_series_id(series_id)
        parsed = parse_points(points, self.capacity)
        s = self._get(series_id, create=True)
        with s.lock:
            new, dups, _, _ = _plan(s.window, parsed)
            if new:
                seq = s.window.seq + 1
                line = (json.dumps({"seq": seq, "points": [[t, v] for t, v in new]}) + "\n").encode()
                self._hit("before_write")
                if self.fault is not None:
                    half = len(line) // 2
                    s.fh.write(line[:half])
                    s.fh.flush()
                    self._hit("mid_write")
                    s.fh.write(line[half:])
                else:
                    s.fh.write(line)
                s.fh.flush()
                self._hit("before_fsync")
                if self.fsync:
                    os.fsync(s.fh.fileno())
                self._hit("after_fsync")
                s.window = _apply(s.window, new, seq)
                s.since_snapshot += 1
                if s.since_snapshot >= self.snapshot_every:
                    self._snapshot(s)
            return {"accepted": len(new), "duplicates": dups, "length": len(s.window)}

    def window(self, series_id: str) -> Window | None:
        s = self._get(series_id, create=False)
        return None if s is None else s.window

    def series(self, series_id: str) -> TimeSeries | None:
        """The stored trace as a TimeSeries (None if unknown or empty)."""
        w = self.window(series_id)
        if w is None or len(w) == 0:
            return None
        step = (w.step_us or 1_000_000) / 1e6
        return TimeSeries(series_id, from_us(w.start_us), step, w.values, self.capacity)

    def ids(self) -> list[str]:
        with self._guard:
            return sorted(self._series)

    def close(self) -> None:
        with self._guard:
            for s in self._series.values():
                if s.fh is not None:
                    s.fh.close()
                    s.fh = None


def _frozen(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _apply(window: Window, new: list, seq: int) -> Window:
    plan, dups, start, step = _plan(window, new)
    if dups or len(plan) != len(new):
        raise StateError(f"log record {seq} is inconsistent with stored state")
    values = np.concatenate([window.values, np.array([v for _, v in new], dtype=np.float64)])
    return Window(start, step, _frozen(values), seq)


def window_points(window: Window, limit: int | None = None) -> list[dict]:
    n = len(window)
    lo = 0 if limit is None else max(0, n - limit)
    step = window.step_us or 0
    return [{"timestamp": format_timestamp(from_us(window.start_us + i * step)), "value": float(window.values[i])}
            for i in range(lo, n)]
