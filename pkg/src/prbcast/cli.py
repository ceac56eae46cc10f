"""Command-line entry point: ``prbcast <subcommand> ...``.

Exit codes: 0 success, 1 validation/config/input error, 2 runtime or
numeric failure. Machine-readable output goes to stdout, diagnostics to
stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib.resources import files
from pathlib import Path

import numpy as np

from .errors import ConfigError, PrbcastRuntimeError, PrbcastValueError

STANDARD_CONFIG = "standard.toml"


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _read_doc(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {p}: {exc.strerror or exc}") from None
    try:
        if p.suffix.lower() == ".json":
            return json.loads(text)
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    except ValueError as exc:
        raise ConfigError("config", f"cannot parse {p}: {exc}") from None


def _levels(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("levels", f"expected comma-separated numbers, got {text!r}") from None


# -- subcommands -------------------------------------------------------------

def cmd_gen(args) -> int:
    from .series import TraceGenConfig, format_trace, generate_prb_trace, save_trace

    doc = _read_doc(args.config) if args.config else {}
    doc = dict(doc.get("trace", doc))
    for name in ("length", "seed", "series_id", "start"):
        v = getattr(args, name)
        if v is not None:
            doc[name] = v
    cfg = TraceGenConfig.from_dict(doc)
    cfg.validate()
    series = generate_prb_trace(cfg)
    if args.out:
        save_trace(series, args.out)
        _emit({"out": args.out, "length": len(series), "series_id": series.series_id,
               "mean": float(np.mean(series.values))})
    else:
        sys.stdout.write(format_trace(series))
    return 0


def cmd_split(args) -> int:
    from .series import SplitSpec, load_trace, save_trace, split_train_test

    series = load_trace(args.input)
    train, windows = split_train_test(series, SplitSpec(args.context, args.horizon, args.windows))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_trace(train, out / "train.csv")
    files_out = ["train.csv"]
    for k, (ctx, act) in enumerate(windows):
        save_trace(ctx, out / f"context_{k}.csv")
        save_trace(act, out / f"actual_{k}.csv")
        files_out += [f"context_{k}.csv", f"actual_{k}.csv"]
    _emit({"out_dir": str(out), "train_length": len(train), "windows": len(windows), "files": files_out})
    return 0


def _model_config(args, base: dict | None = None):
    from .forecasters import ModelConfig

    doc = dict(base or {})
    if args.kind:
        doc["kind"] = args.kind
    for name in ("context_length", "horizon", "epochs", "learning_rate", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            doc[name] = v
    return ModelConfig.from_dict(doc)


def cmd_train(args) -> int:
    from .forecasters import train_model
    from .series import load_trace

    base = _read_doc(args.config) if args.config else {}
    cfg = _model_config(args, base)
    series = load_trace(args.input)
    model = train_model(series, cfg)
    model.save(args.out)
    _emit({"out": args.out, "kind": cfg.kind, "config_hash": cfg.config_hash(),
           "model_hash": model.version_hash(), "final_loss": model.meta.get("final_loss"),
           "train_length": len(series)})
    return 0


def _quantile_doc(f, levels: list[float]) -> dict:
    from .series import format_timestamp

    q = f.quantiles(levels)
    return {
        "start": format_timestamp(f.start),
        "step_seconds": float(f.step),
        "horizon": int(q.shape[1]),
        "levels": levels,
        "quantiles": {repr(lv): q[i].tolist() for i, lv in enumerate(levels)},
        "median": np.asarray(f.median(), dtype=np.float64).tolist(),
    }


def cmd_forecast(args) -> int:
    from .forecasters import TrainedModel, forecast
    from .forecasters.quantiles import check_levels
    from .series import load_trace

    model = TrainedModel.load(args.model)
    context = load_trace(args.input)
    levels = sorted(set(check_levels(_levels(args.levels)).tolist()))
    f = forecast(model, context, args.horizon, seed=args.seed, num_paths=args.num_paths)
    doc = {"kind": model.kind, "model_hash": model.version_hash(), "seed": args.seed, **_quantile_doc(f, levels)}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _emit(doc)
    return 0


def cmd_eval(args) -> int:
    from .backtest import evaluate_run, forecast_csv, run_model
    from .forecasters import TrainedModel
    from .series import SplitSpec, load_trace, split_train_test

    model = TrainedModel.load(args.model)
    cfg = model.config
    series = load_trace(args.input)
    train, windows = split_train_test(series, SplitSpec(cfg.context_length, cfg.horizon, args.windows))
    run = run_model(model.kind, cfg, train, windows, args.num_paths or cfg.num_sample_paths,
                    train_fn=lambda _series, _cfg: model)
    report = evaluate_run(run, windows, train, args.season_length or cfg.season_length)
    if args.csv:
        Path(args.csv).write_text(forecast_csv(run, windows, []))
    sys.stdout.write(report.to_json() + "\n")
    return 0


def cmd_backtest(args) -> int:
    from .backtest import load_experiment_config, run_experiment

    path = args.config or str(files("prbcast") / "data" / STANDARD_CONFIG)
    cfg = load_experiment_config(path, seed=args.seed)
    table = run_experiment(cfg, args.out)
    sys.stdout.write(table.to_text())
    return 0


def cmd_serve(args) -> int:
    from .service import resolve_config, serve

    flags = {"host": args.host, "port": args.port, "data_dir": args.data_dir, "capacity": args.capacity}
    serve(resolve_config(flags, config_file=args.config))
    return 0


def cmd_plot(args) -> int:
    from .svgplot import render_forecast_svg, render_histogram_svg

    try:
        text = Path(args.input).read_text()
    except OSError as exc:
        raise ConfigError("in", f"cannot read {args.input}: {exc.strerror or exc}") from None
    if args.what == "forecast":
        svg = render_forecast_svg(text, args.title or "Forecast vs. point baselines")
    else:
        svg = render_histogram_svg(text, args.title or "Histogram of true value and estimators")
    Path(args.out).write_text(svg)
    _emit({"out": args.out, "bytes": len(svg.encode())})
    return 0


# -- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad usage is a validation error: exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="prbcast", description="Probabilistic PRB-utilization forecasting.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen", help="generate a synthetic PRB trace")
    g.add_argument("--config", help="TOML/JSON with generator fields (or a [trace] table)")
    g.add_argument("--length", type=int, help="number of samples")
    g.add_argument("--seed", type=int, help="generator seed")
    g.add_argument("--series-id", dest="series_id", help="series identifier")
    g.add_argument("--start", help="ISO-8601 UTC timestamp of the first sample")
    g.add_argument("--out", help="trace CSV path (stdout if omitted)")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("split", help="split a trace into train and held-out windows")
    s.add_argument("--in", dest="input", required=True, help="trace CSV")
    s.add_argument("--context", type=int, default=192, help="context length (default 192)")
    s.add_argument("--horizon", type=int, default=48, help="forecast horizon (default 48)")
    s.add_argument("--windows", type=int, default=1, help="number of held-out windows (default 1)")
    s.add_argument("--out-dir", dest="out_dir", required=True, help="directory for train/context/actual CSVs")
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="train one model and write a checkpoint")
    t.add_argument("--in", dest="input", required=True, help="training trace CSV")
    t.add_argument("--kind", help="seasonal_naive | lstm | sff | deepar | transformer")
    t.add_argument("--config", help="model config TOML/JSON; flags override its fields")
    t.add_argument("--context-length", dest="context_length", type=int, help="context length")
    t.add_argument("--horizon", type=int, help="forecast horizon")
    t.add_argument("--epochs", type=int, help="training epochs")
    t.add_argument("--learning-rate", dest="learning_rate", type=float, help="Adam learning rate")
    t.add_argument("--seed", type=int, help="training seed")
    t.add_argument("--out", required=True, help="checkpoint JSON path")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the held-out tail of a trace")
    e.add_argument("--model", required=True, help="checkpoint JSON")
    e.add_argument("--in", dest="input", required=True, help="full trace CSV (train part + held-out windows)")
    e.add_argument("--windows", type=int, default=1, help="held-out windows (default 1)")
    e.add_argument("--season-length", dest="season_length", type=int, help="MASE season (default: model's)")
    e.add_argument("--num-paths", dest="num_paths", type=int, help="sample paths for probabilistic models")
    e.add_argument("--csv", help="also write the forecast CSV here")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("forecast", help="forecast after the end of a context trace")
    f.add_argument("--model", required=True, help="checkpoint JSON")
    f.add_argument("--in", dest="input", required=True, help="context trace CSV")
    f.add_argument("--horizon", type=int, help="steps to forecast (default: trained horizon)")
    f.add_argument("--levels", default="0.1,0.5,0.9", help="comma-separated quantile levels")
    f.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
    f.add_argument("--num-paths", dest="num_paths", type=int, help="sample paths (DeepAR)")
    f.add_argument("--out", help="also write the JSON here")
    f.set_defaults(func=cmd_forecast)

    b = sub.add_parser("backtest", help="run the model comparison and write artifacts")
    b.add_argument("--config", help="experiment TOML/JSON (default: the bundled standard experiment)")
    b.add_argument("--out", help="artifact directory (default: config output_dir or backtest-out)")
    b.add_argument("--seed", type=int, help="master seed overriding the config's")
    b.set_defaults(func=cmd_backtest)

    v = sub.add_parser("serve", help="run the HTTP rApp service")
    v.add_argument("--config", help="service TOML/JSON (a [service] table or top-level keys)")
    v.add_argument("--host", help="bind address (env PRBCAST_HOST, default 127.0.0.1)")
    v.add_argument("--port", type=int, help="port (env PRBCAST_PORT, default 8080)")
    v.add_argument("--data-dir", dest="data_dir", help="storage root (env PRBCAST_DATA_DIR)")
    v.add_argument("--capacity", type=float, help="PRB capacity bound (env PRBCAST_CAPACITY, default 273)")
    v.set_defaults(func=cmd_serve)

    pl = sub.add_parser("plot", help="render a backtest CSV as SVG")
    pl.add_argument("what", choices=("forecast", "histogram"), help="which chart")
    pl.add_argument("--in", dest="input", required=True, help="forecast_<model>.csv or histogram.csv")
    pl.add_argument("--out", required=True, help="SVG path")
    pl.add_argument("--title", help="chart title")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PrbcastValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PrbcastRuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
