"""Per-series model registry with atomic replacement and on-disk persistence."""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..forecasters import TrainedModel
from ..metrics import EvaluationReport


@dataclass(frozen=True)
class Registration:
    model: TrainedModel
    model_hash: str
    config_hash: str
    training: dict = field(default_factory=dict)
    report: EvaluationReport | None = None


class ModelRegistry:
    """Many readers, one writer per series. ``get`` never waits on training."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else None
        self._models: dict[str, Registration] = {}
        self._train_locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        if self.root is not None:
            self._load_all()

    def _dir(self, series_id: str) -> Path:
        return self.root / "series" / series_id

    def _load_all(self) -> None:
        base = self.root / "series"
        if not base.is_dir():
            return
        for d in sorted(base.iterdir()):
            ckpt = d / "model.json"
            if not ckpt.is_file():
                continue
            model = TrainedModel.load(ckpt)
            info = json.loads((d / "model_info.json").read_text()) if (d / "model_info.json").is_file() else {}
            report = None
            if (d / "report.json").is_file():
                report = EvaluationReport.from_dict(json.loads((d / "report.json").read_text()))
            self._models[d.name] = Registration(model, model.version_hash(), model.config.config_hash(),
                                                info.get("training", {}), report)

    def train_lock(self, series_id: str) -> threading.Lock:
        with self._guard:
            return self._train_locks.setdefault(series_id, threading.Lock())

    def get(self, series_id: str) -> Registration | None:
        return self._models.get(series_id)

    def register(self, series_id: str, model: TrainedModel, training: dict,
                 report: EvaluationReport | None = None, forecast_csv: str | None = None) -> Registration:
        reg = Registration(model, model.version_hash(), model.config.config_hash(), training, report)
        if self.root is not None:
            d = self._dir(series_id)
            d.mkdir(parents=True, exist_ok=True)
            model.save(d / "model.json")
            _atomic_write(d / "model_info.json", json.dumps({"training": training}, sort_keys=True, indent=2))
            if report is not None:
                _atomic_write(d / "report.json", report.to_json())
                if forecast_csv is not None:
                    _atomic_write(d / "forecast.csv", forecast_csv)
            else:
                for stale in ("report.json", "forecast.csv"):
                    if (d / stale).exists():
                        (d / stale).unlink()
        self._models[series_id] = reg      # single reference swap
        return reg


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
