"""End-to-end backtest: trace -> split -> train -> forecast -> evaluate -> artifacts.

Artifact directory layout::

    table.json            comparison table plus every per-model report
    table.txt             aligned text rendering of the table
    forecast_<name>.csv   per-step truth, point/median, quantiles, baselines
    histogram.csv         pooled-bin histogram of sample values at one step
    trace.csv             the full input trace (train + held-out windows)
    manifest.json         config, config hash, derived seeds, versions, completeness
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .errors import ConfigError, PrbcastRuntimeError, PrbcastValueError
from .forecasters import PROBABILISTIC, ModelConfig, forecast, train_model
from .metrics import LEVELS, EvaluationReport, evaluate_arrays
from .series import (SplitSpec, TimeSeries, TraceGenConfig, format_timestamp, generate_prb_trace,
                     load_trace, save_trace, split_train_test)

log = logging.getLogger(__name__)

HISTOGRAM_BINS = 30
DISPLAY_NAMES = {"lstm": "LSTM", "seasonal_naive": "SN", "sff": "SFF", "deepar": "DeepAR",
                 "transformer": "Transformer"}
COLUMN_ORDER = ("lstm", "seasonal_naive", "sff", "deepar", "transformer")
# point baselines scored as a degenerate distribution (same value at every level)
DEGENERATE_QUANTILES = ("seasonal_naive",)
QUANTILE_COLUMNS = [f"q{q:.1f}" for q in LEVELS]
TABLE_ROWS = [
    ("MSE", "mse", None), ("MASE", "mase_scaled", None), ("MAPE", "mape", None), ("ND", "nd", None),
    ("QL[0.1]", "ql", 0.1), ("Coverage[0.1]", "cov", 0.1),
    ("QL[0.5]", "ql", 0.5), ("Coverage[0.5]", "cov", 0.5),
    ("QL[0.9]", "ql", 0.9), ("Coverage[0.9]", "cov", 0.9),
]
FOOTNOTE = ("MASE row reports mase_scaled: mean absolute error divided by the in-sample "
            "seasonal-naive MAE of the training series; the unscaled mean absolute error "
            "is stored as mae_eq2 in table.json. QL rows are sums over all test steps.")


class ExperimentError(PrbcastRuntimeError):
    def __init__(self, model: str, cause: Exception):
        self.model = model
        self.cause = cause
        super().__init__(f"model {model!r} failed: {type(cause).__name__}: {cause}")


def stable_seed(master_seed: int, name: str) -> int:
    """Per-model seed: master seed plus a SHA-256 hash of the model name, mod 2**32."""
    digest = int(hashlib.sha256(name.encode("utf-8")).hexdigest()[:8], 16)
    return (int(master_seed) + digest) % (2 ** 32)


@dataclass
class ExperimentConfig:
    split: SplitSpec
    models: list
    names: list
    trace: TraceGenConfig | None = None
    trace_file: str | None = None
    seed: int = 0
    season_length: int = 96
    histogram_window: int = -1
    histogram_step: int = 0
    num_sample_paths: int = 100
    output_dir: str | None = None
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.models:
            raise ConfigError("models", "at least one model is required")
        horizons = {m.horizon for m in self.models}
        if horizons != {self.split.horizon}:
            raise ConfigError("models", f"every model horizon must equal split.horizon={self.split.horizon}")
        if len(set(self.names)) != len(self.names):
            raise ConfigError("models", "model names must be unique")
        if (self.trace is None) == (self.trace_file is None):
            raise ConfigError("trace", "give exactly one of [trace] generator settings or trace_file")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None, seed: int | None = None) -> "ExperimentConfig":
        doc = dict(doc)
        if seed is not None:
            doc["seed"] = seed
        master = doc.get("seed", 0)
        if isinstance(master, bool) or not isinstance(master, int) or master < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {master!r}")
        known = {"seed", "trace", "trace_file", "split", "metrics", "models", "output_dir"}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown experiment field")
        trace = trace_file = None
        if "trace" in doc:
            tdoc = dict(doc["trace"])
            tdoc.setdefault("seed", master)
            try:
                trace = TraceGenConfig.from_dict(tdoc)
                trace.validate()
            except ConfigError as exc:
                raise ConfigError(f"trace.{exc.field}", str(exc).split(": ", 1)[-1]) from None
            except TypeError as exc:
                raise ConfigError("trace", str(exc)) from None
        if "trace_file" in doc:
            p = Path(doc["trace_file"])
            trace_file = str(p if p.is_absolute() or base_dir is None else base_dir / p)
        sdoc = doc.get("split", {})
        try:
            split = SplitSpec(int(sdoc.get("context_length", 192)), int(sdoc.get("horizon", 48)),
                              int(sdoc.get("test_windows", 1)))
        except ConfigError as exc:
            raise ConfigError(f"split.{exc.field}", str(exc).split(": ", 1)[-1]) from None
        mdoc = doc.get("metrics", {})
        models, names = [], []
        mlist = doc.get("models")
        if not isinstance(mlist, list) or not mlist:
            raise ConfigError("models", "must be a non-empty list of model tables")
        for i, entry in enumerate(mlist):
            entry = dict(entry)
            name = str(entry.pop("name", entry.get("kind", f"model{i}")))
            entry.setdefault("horizon", split.horizon)
            entry.setdefault("context_length", split.context_length)
            entry["seed"] = stable_seed(master, name)
            try:
                models.append(ModelConfig.from_dict(entry))
            except ConfigError as exc:
                raise ConfigError(f"models[{i}].{exc.field}", str(exc).split(": ", 1)[-1]) from None
            except TypeError as exc:
                raise ConfigError(f"models[{i}]", str(exc)) from None
            names.append(name)
        return cls(split=split, models=models, names=names, trace=trace, trace_file=trace_file, seed=master,
                   season_length=int(mdoc.get("season_length", 96)),
                   histogram_window=int(mdoc.get("histogram_window", -1)),
                   histogram_step=int(mdoc.get("histogram_step", 0)),
                   num_sample_paths=int(mdoc.get("num_sample_paths", 100)),
                   output_dir=doc.get("output_dir"), raw=doc)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True, default=str).encode()).hexdigest()[:16]


def load_experiment_config(path, seed: int | None = None) -> ExperimentConfig:
    """Read a TOML or JSON experiment document."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read config file {path}: {exc.strerror or exc}") from None
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    return ExperimentConfig.from_dict(doc, base_dir=path.parent, seed=seed)


@dataclass
class ModelRun:
    name: str
    config: ModelConfig
    points: list            # per window: (H,) point / median
    quantiles: list | None  # per window: (9, H) or None
    samples: list | None    # per window: (S, H) or None
    report: EvaluationReport | None = None
    model: object = None    # the TrainedModel behind the run


@dataclass
class ComparisonTable:
    columns: list        # display names
    names: list          # model names, aligned with columns
    rows: list           # [(label, {name: value or None}, best name or None)]
    reports: dict        # name -> EvaluationReport

    def value(self, label: str, name: str):
        for row_label, values, _ in self.rows:
            if row_label == label:
                return values.get(name)
        raise KeyError(label)

    def best(self, label: str):
        for row_label, _, best in self.rows:
            if row_label == label:
                return best
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "columns": [{"name": n, "display": c} for n, c in zip(self.names, self.columns)],
            "rows": [{"metric": label, "values": values, "best": best} for label, values, best in self.rows],
            "reports": {n: r.to_dict() for n, r in self.reports.items()},
            "footnote": FOOTNOTE,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_text(self) -> str:
        width = max(12, *(len(c) + 2 for c in self.columns))
        lines = ["Metric".ljust(14) + "".join(c.rjust(width) for c in self.columns)]
        for label, values, best in self.rows:
            cells = []
            for n in self.names:
                v = values.get(n)
                cell = "-" if v is None else f"{v:.3f}" + ("*" if n == best else "")
                cells.append(cell.rjust(width))
            lines.append(label.ljust(14) + "".join(cells))
        lines.append("")
        lines.append("* best value in row (lowest loss; coverage closest to its level)")
        lines.append(FOOTNOTE)
        return "\n".join(lines) + "\n"


def _row_value(report: EvaluationReport, key: str, level):
    if key == "ql":
        return None if report.quantile_loss is None else report.quantile_loss[f"{level:.1f}"]
    if key == "cov":
        return None if report.coverage is None else report.coverage[f"{level:.1f}"]
    return getattr(report, key)


def build_table(names: list, kinds: list, reports: dict) -> ComparisonTable:
    order = sorted(range(len(names)),
                   key=lambda i: (COLUMN_ORDER.index(kinds[i]) if kinds[i] in COLUMN_ORDER else len(COLUMN_ORDER), i))
    names = [names[i] for i in order]
    columns = [DISPLAY_NAMES.get(kinds[i], names[i]) if kinds.count(kinds[i]) == 1 else names[i] for i in order]
    rows = []
    for label, key, level in TABLE_ROWS:
        values = {n: _row_value(reports[n], key, level) for n in names}
        scored = [(abs(v - level) if key == "cov" else v, n) for n, v in values.items() if v is not None]
        best = min(scored, key=lambda t: t[0])[1] if scored else None
        rows.append((label, values, best))
    return ComparisonTable(columns, names, rows, reports)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def forecast_csv(run: ModelRun, windows, baselines: list) -> str:
    """CSV behind the forecast comparison figures (one row per forecast step)."""
    header = ["window", "step", "timestamp", "true", "point"] + QUANTILE_COLUMNS + \
             [f"baseline:{b.name}" for b in baselines]
    lines = [",".join(header)]
    for w, (_, actual) in enumerate(windows):
        for t in range(len(actual)):
            row = [str(w), str(t), format_timestamp(actual.timestamp(t)), _fmt(actual.values[t]),
                   _fmt(run.points[w][t])]
            row += [_fmt(run.quantiles[w][i, t]) if run.quantiles is not None else "" for i in range(len(LEVELS))]
            row += [_fmt(b.points[w][t]) for b in baselines]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def emit_histogram(samples: dict, markers: dict, bins: int = HISTOGRAM_BINS) -> str:
    """Histogram CSV over pooled values of every model's samples at one step.

    ``samples`` maps model name -> 1-D sample values; ``markers`` maps a
    label (``true`` or a point baseline) -> single value. Bins span the
    pooled min/max of samples and markers. Columns: ``bin_left,bin_right``,
    one count column per model, then ``marker:<label>`` columns repeating
    the marker value on every row.
    """
    if not samples:
        raise PrbcastValueError("emit_histogram: at least one sampled model is required")
    pooled = np.concatenate([np.asarray(v, dtype=np.float64).reshape(-1) for v in samples.values()]
                            + [np.asarray(list(markers.values()), dtype=np.float64)])
    lo, hi = float(pooled.min()), float(pooled.max())
    edges = np.histogram_bin_edges(pooled, bins=bins, range=(lo, hi))
    counts = {name: np.histogram(np.asarray(v, dtype=np.float64), bins=edges)[0] for name, v in samples.items()}
    header = ["bin_left", "bin_right"] + list(samples) + [f"marker:{m}" for m in markers]
    lines = [",".join(header)]
    for i in range(bins):
        row = [repr(float(edges[i])), repr(float(edges[i + 1]))]
        row += [str(int(counts[name][i])) for name in samples]
        row += [repr(float(v)) for v in markers.values()]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def histogram_for_step(runs: list, windows, window: int, step: int) -> str:
    H = len(windows[0][1])
    if not -len(windows) <= window < len(windows):
        raise PrbcastValueError(f"histogram window {window} out of range for {len(windows)} windows")
    if not 0 <= step < H:
        raise PrbcastValueError(f"histogram step {step} out of range [0, {H})")
    samples = {r.name: r.samples[window][:, step] for r in runs if r.samples is not None}
    markers = {"true": float(windows[window][1].values[step])}
    for r in runs:
        if r.samples is None:
            markers[r.name] = float(r.points[window][step])
    return emit_histogram(samples, markers)


def run_model(name: str, config: ModelConfig, train: TimeSeries, windows, num_paths: int,
              train_fn=train_model) -> ModelRun:
    model = train_fn(train, config)
    log.info("trained %s in %.1fs", name, model.runtime.get("train_seconds", 0.0))
    points, quantiles, samples = [], [], []
    probabilistic = config.kind in PROBABILISTIC
    for w, (context, _) in enumerate(windows):
        seed = (config.seed + 7919 * (w + 1)) % (2 ** 32)
        f = forecast(model, context, config.horizon, seed=seed, num_paths=num_paths)
        points.append(f.median())
        if probabilistic:
            f = f.with_samples(num_paths, seed)
            quantiles.append(f.quantiles(LEVELS))
            samples.append(f.samples)
        elif config.kind in DEGENERATE_QUANTILES:
            quantiles.append(f.quantiles(LEVELS))
    return ModelRun(name, config, points, quantiles or None, samples if probabilistic else None,
                    model=model)


def evaluate_run(run: ModelRun, windows, train: TimeSeries, season_length: int) -> EvaluationReport:
    """Score a run pooled over all its test windows; degenerate metrics become None."""
    actual = np.concatenate([a.values for _, a in windows])
    q = np.concatenate(run.quantiles, axis=1) if run.quantiles is not None else None
    run.report = evaluate_arrays(actual, np.concatenate(run.points), q, train.values,
                                 season_length, model=run.name, strict=False)
    return run.report


def run_experiment(config: ExperimentConfig, out_dir=None) -> ComparisonTable:
    """Run every configured model and write the artifact directory.

    Fails fast: the first model error aborts the run, leaving a manifest
    marked incomplete that names the failing model.
    """
    out = Path(out_dir or config.output_dir or "backtest-out")
    out.mkdir(parents=True, exist_ok=True)
    series = load_trace(config.trace_file) if config.trace_file else generate_prb_trace(config.trace)
    train, windows = split_train_test(series, config.split)
    manifest = {
        "config": config.raw,
        "config_hash": config.config_hash(),
        "master_seed": config.seed,
        "model_seeds": {n: m.seed for n, m in zip(config.names, config.models)},
        "split": {"context_length": config.split.context_length, "horizon": config.split.horizon,
                  "test_windows": config.split.test_windows, "train_length": len(train),
                  "series_length": len(series)},
        "season_length": config.season_length,
        "versions": {"prbcast": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "kernel_backend": kernels.BACKEND,
        "complete": False,
    }
    runs = []
    for name, mcfg in zip(config.names, config.models):
        try:
            runs.append(run_model(name, mcfg, train, windows, config.num_sample_paths))
        except Exception as exc:
            manifest["failed_model"] = name
            manifest["error"] = f"{type(exc).__name__}: {exc}"
            _write_json(out / "manifest.json", manifest)
            raise ExperimentError(name, exc) from exc

    reports = {r.name: evaluate_run(r, windows, train, config.season_length) for r in runs}
    table = build_table([r.name for r in runs], [r.config.kind for r in runs], reports)

    save_trace(series, out / "trace.csv")
    baselines = [r for r in runs if r.config.kind not in PROBABILISTIC]
    artifacts = ["trace.csv"]
    for r in runs:
        fname = f"forecast_{r.name}.csv"
        (out / fname).write_text(forecast_csv(r, windows, [b for b in baselines if b is not r]))
        artifacts.append(fname)
    if any(r.samples is not None for r in runs):
        (out / "histogram.csv").write_text(
            histogram_for_step(runs, windows, config.histogram_window, config.histogram_step))
        artifacts.append("histogram.csv")
    (out / "table.json").write_text(table.to_json())
    (out / "table.txt").write_text(table.to_text())
    artifacts += ["table.json", "table.txt"]
    manifest["artifacts"] = artifacts
    manifest["complete"] = True
    _write_json(out / "manifest.json", manifest)
    return table


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
