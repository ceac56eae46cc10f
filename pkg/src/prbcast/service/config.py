"""Service settings resolved as flags > environment > config file > defaults."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

ENV_PREFIX = "PRBCAST_"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "prbcast-data"
    capacity: float = 273.0
    max_batch: int = 10_000
    snapshot_every: int = 64     # batches between snapshots
    fsync: bool = True

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ConfigError("port", f"must be in 1..65535, got {self.port}")
        if not self.capacity > 0:
            raise ConfigError("capacity", f"must be positive, got {self.capacity}")
        if self.max_batch < 1:
            raise ConfigError("max_batch", "must be at least 1")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every", "must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(name: str, typ, value):
    if value is None:
        return None
    try:
        if typ is bool and isinstance(value, str):
            low = value.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(value)
            return low in ("1", "true", "yes")
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot interpret {value!r} as {typ.__name__}") from None


def _read_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"config file not found: {p}")
    text = p.read_text()
    try:
        doc = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {p}: {exc}") from None
    return doc.get("service", doc)


def resolve_config(flags: dict | None = None, env=None, config_file=None) -> ServiceConfig:
    """Merge the four layers; unknown keys in the file are rejected."""
    types = {f.name: f.type for f in fields(ServiceConfig)}
    typemap = {"str": str, "int": int, "float": float, "bool": bool}
    merged = {}
    if config_file:
        doc = _read_file(config_file)
        unknown = sorted(set(doc) - set(types))
        if unknown:
            raise ConfigError(unknown[0], "unknown service config field")
        merged.update(doc)
    env = os.environ if env is None else env
    for name in types:
        key = ENV_PREFIX + name.upper()
        if key in env:
            merged[name] = env[key]
    for name, value in (flags or {}).items():
        if value is not None:
            merged[name] = value
    return ServiceConfig(**{k: _coerce(k, typemap[types[k]], v) for k, v in merged.items()})
