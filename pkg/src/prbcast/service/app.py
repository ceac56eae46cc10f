"""HTTP face of the engine: ingest telemetry, train, forecast, report."""
from __future__ import annotations

import json
import logging
import time
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.exceptions import RequestValidationError
from fastapi.responses import PlainTextResponse, Response
from starlette.exceptions import HTTPException as StarletteHTTPException

from .. import __version__
from ..backtest import evaluate_run, forecast_csv, run_model
from ..errors import (ConfigError, DomainError, NumericError, PrbcastValueError, SizingError,
                      ValidationError)
from ..forecasters import PROBABILISTIC, ModelConfig, forecast, train_model
from ..forecasters.quantiles import check_levels
from ..series import SplitSpec, format_timestamp, split_train_test
from .config import ServiceConfig
from .registry import ModelRegistry
from .store import BatchError, SeriesStore, check_series_id, window_points

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.1, 0.5, 0.9)
SERVICE_OPTIONS = ("holdout", "test_windows")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status, self.code, self.message, self.detail = status, code, message, detail


def json_response(doc, status: int = 200, headers: dict | None = None) -> Response:
    body = json.dumps(doc, sort_keys=True, allow_nan=False, separators=(",", ":")) + "\n"
    return Response(body, status_code=status, media_type="application/json", headers=headers)


def _error(status: int, code: str, message: str, detail=None) -> Response:
    return json_response({"code": code, "message": message, "detail": detail}, status)


def _parse_levels(text: str | None) -> list[float]:
    if text is None or text == "":
        return list(DEFAULT_LEVELS)
    try:
        raw = [float(x) for x in text.split(",")]
        arr = check_levels(raw)
    except (ValueError, DomainError) as exc:
        raise ApiError(400, "bad_levels", f"invalid levels {text!r}: {exc}") from None
    return sorted(set(arr.tolist()))


def _int_param(request: Request, name: str, default):
    raw = request.query_params.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ApiError(400, "bad_parameter", f"query parameter {name} must be an integer, got {raw!r}") from None


def create_app(config: ServiceConfig | None = None, train_fn=None) -> FastAPI:
    """Build the app. ``train_fn(series, ModelConfig) -> TrainedModel`` is injectable for tests."""
    config = config or ServiceConfig()
    store = SeriesStore(config.data_dir, config.capacity, config.snapshot_every, config.fsync)
    registry = ModelRegistry(config.data_dir)
    train_fn = train_fn or train_model

    @asynccontextmanager
    async def lifespan(app):
        yield
        store.close()

    app = FastAPI(title="prbcast rApp", version=__version__, lifespan=lifespan)
    app.state.store, app.state.registry, app.state.config = store, registry, config

    @app.exception_handler(ApiError)
    async def _api_error(request, exc: ApiError):
        return _error(exc.status, exc.code, exc.message, exc.detail)

    @app.exception_handler(RequestValidationError)
    async def _validation(request, exc):
        return _error(400, "bad_request", "request validation failed", json.loads(json.dumps(exc.errors(), default=str)))

    @app.exception_handler(StarletteHTTPException)
    async def _http(request, exc):
        return _error(exc.status_code, "http_error", str(exc.detail))

    @app.exception_handler(Exception)
    async def _internal(request, exc):
        log.exception("unhandled error")
        return _error(500, "internal", f"{type(exc).__name__}: {exc}")

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz():
        return "ok"

    @app.post("/v1/series/{series_id}/observations")
    async def ingest(series_id: str, request: Request):
        raw = await request.body()
        try:
            points = json.loads(raw) if raw.strip() else None
        except ValueError as exc:
            raise ApiError(400, "malformed", f"body is not valid JSON: {exc}") from None
        if isinstance(points, list) and len(points) > config.max_batch:
            raise ApiError(413, "batch_too_large",
                           f"batch of {len(points)} points exceeds the limit of {config.max_batch}",
                           {"limit": config.max_batch, "size": len(points)})
        try:
            result = await run_in_threadpool(store.append, series_id, points)
        except BatchError as exc:
            raise ApiError(400, "invalid_batch", str(exc), {"index": exc.index, "reason": exc.reason}) from None
        return json_response({"series_id": series_id, **result}, 202)

    @app.get("/v1/series/{series_id}/window")
    def window(series_id: str, request: Request):
        limit = _int_param(request, "limit", None)
        w = store.window(series_id)
        if w is None:
            raise ApiError(404, "unknown_series", f"no observations for series {series_id!r}")
        return json_response({"series_id": series_id, "length": len(w), "step_seconds": (w.step_us or 0) / 1e6,
                              "points": window_points(w, limit)})

    @app.post("/v1/series/{series_id}/train")
    def train(series_id: str, body: dict):
        try:
            check_series_id(series_id)
        except BatchError as exc:
            raise ApiError(400, "bad_series_id", str(exc)) from None
        opts = {k: body.pop(k) for k in SERVICE_OPTIONS if k in body}
        holdout = bool(opts.get("holdout", False))
        try:
            mcfg = ModelConfig.from_dict(body)
        except (ConfigError, TypeError) as exc:
            raise ApiError(400, "bad_config", str(exc), {"field": getattr(exc, "field", None)}) from None
        series = store.series(series_id)
        if series is None:
            raise ApiError(404, "unknown_series", f"no observations for series {series_id!r}")
        lock = registry.train_lock(series_id)
        if not lock.acquire(blocking=False):
            raise ApiError(409, "training_in_progress", f"a training run for {series_id!r} is already in progress")
        try:
            return _train_locked(series_id, series, mcfg, holdout, int(opts.get("test_windows", 1)))
        except SizingError as exc:
            raise ApiError(422, "insufficient_data", str(exc),
                           {"required": exc.required, "available": exc.available}) from None
        except (NumericError, PrbcastValueError) as exc:
            raise ApiError(422, "training_failed", str(exc)) from None
        finally:
            lock.release()

    def _train_locked(series_id, series, mcfg, holdout, test_windows):
        t0 = time.perf_counter()
        report = csv_text = None
        if holdout:
            train_part, windows = split_train_test(series, SplitSpec(mcfg.context_length, mcfg.horizon, test_windows))
            run = run_model(mcfg.kind, mcfg, train_part, windows, mcfg.num_sample_paths, train_fn=train_fn)
            report = evaluate_run(run, windows, train_part, mcfg.season_length)
            csv_text = forecast_csv(run, windows, [])
            model, used = run.model, len(train_part)
        else:
            model, used = train_fn(series, mcfg), len(series)
        training = {
            "kind": mcfg.kind,
            "final_loss": model.meta.get("final_loss"),
            "epochs": len(model.meta.get("loss_history", [])),
            "train_length": used,
            "holdout": holdout,
            "duration_seconds": round(time.perf_counter() - t0, 3),
        }
        if mcfg.kind in PROBABILISTIC:
            training["final_nll"] = training["final_loss"]
        reg = registry.register(series_id, model, training, report, csv_text)
        doc = {"series_id": series_id, "model_hash": reg.model_hash, "config_hash": reg.config_hash, **training}
        if report is not None:
            doc["report"] = report.to_dict()
        return json_response(doc, 200, {"X-Model-Hash": reg.model_hash})

    @app.get("/v1/series/{series_id}/forecast")
    def forecast_endpoint(series_id: str, request: Request):
        levels = _parse_levels(request.query_params.get("levels"))
        seed = _int_param(request, "seed", 0)
        reg = registry.get(series_id)
        series = store.series(series_id)
        if reg is None or series is None:
            raise ApiError(404, "no_model", f"no trained model for series {series_id!r}")
        H = _int_param(request, "horizon", reg.model.config.horizon)
        if H < 1:
            raise ApiError(400, "bad_parameter", f"horizon must be positive, got {H}")
        if H > reg.model.config.horizon:
            raise ApiError(422, "horizon_too_long",
                           f"horizon {H} exceeds trained horizon {reg.model.config.horizon}",
                           {"requested": H, "trained": reg.model.config.horizon})
        if seed < 0:
            raise ApiError(400, "bad_parameter", f"seed must be non-negative, got {seed}")
        try:
            f = forecast(reg.model, series, H, seed=seed)
        except SizingError as exc:
            raise ApiError(422, "insufficient_data", str(exc),
                           {"required": exc.required, "available": exc.available}) from None
        q = np.asarray(f.quantiles(levels), dtype=np.float64)
        doc = {
            "series_id": series_id,
            "kind": reg.model.kind,
            "model_hash": reg.model_hash,
            "config_hash": reg.config_hash,
            "seed": seed,
            "horizon": H,
            "start": format_timestamp(f.start),
            "step_seconds": float(f.step),
            "levels": levels,
            "quantiles": {repr(lv): q[i].tolist() for i, lv in enumerate(levels)},
        }
        return json_response(doc, 200, {"X-Model-Hash": reg.model_hash})

    @app.get("/v1/series/{series_id}/report")
    def report(series_id: str):
        reg = registry.get(series_id)
        if reg is None or reg.report is None:
            raise ApiError(404, "no_report", f"no holdout report for series {series_id!r}; train with holdout: true")
        return json_response(reg.report.to_dict(), 200, {"X-Model-Hash": reg.model_hash})

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
