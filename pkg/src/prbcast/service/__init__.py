"""rApp service: durable telemetry store, model registry and HTTP API."""
from .app import create_app, serve
from .config import ServiceConfig, resolve_config
from .registry import ModelRegistry
from .store import BatchError, SeriesStore, SimulatedCrash

__all__ = ["BatchError", "ModelRegistry", "SeriesStore", "ServiceConfig", "SimulatedCrash", "create_app",
           "resolve_config", "serve"]
