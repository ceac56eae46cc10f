"""Compare the compiled and numpy kernel backends.

Run: python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Times the fused LSTM cell forward/backward at the sizes the forecasters
use (batch 1 for sampling warm-up, 32 for training, 100 for sample
paths) and the AR(1) noise filter, and checks both backends agree.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
import timeit

import numpy as np

from prbcast import kernels


def _best(fn, repeat: int) -> float:
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_lstm(backend, B: int, I: int, H: int, repeat: int, rng) -> dict:
    x, h, c = rng.normal(size=(B, I)), rng.normal(size=(B, H)), rng.normal(size=(B, H))
    W, b = rng.normal(size=(I + H, 4 * H)) * 0.1, rng.normal(size=4 * H) * 0.1
    out = backend.lstm_cell_forward(x, h, c, W, b)
    dh, dc = rng.normal(size=(B, H)), rng.normal(size=(B, H))
    fwd = _best(lambda: backend.lstm_cell_forward(x, h, c, W, b), repeat)
    bwd = _best(lambda: backend.lstm_cell_backward(dh, dc, c, W, *out[2:]), repeat)
    return {"forward_us": fwd * 1e6, "backward_us": bwd * 1e6}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    backends = {"cython": kernels.compiled_backend, "python": kernels.python_backend}
    rng = np.random.default_rng(0)
    results = {"python": platform.python_version(), "numpy": np.__version__, "cases": []}
    print(f"{'case':<28}{'cython us':>12}{'python us':>12}{'speedup':>9}")
    for B, I, H in [(1, 5, 40), (32, 5, 40), (32, 40, 40), (100, 40, 40)]:
        row = {name: bench_lstm(be, B, I, H, args.repeat, rng) for name, be in backends.items()}
        for phase in ("forward_us", "backward_us"):
            cy, py = row["cython"][phase], row["python"][phase]
            label = f"lstm {phase.split('_')[0]} B={B} I={I} H={H}"
            print(f"{label:<28}{cy:>12.1f}{py:>12.1f}{py / cy:>8.2f}x")
            results["cases"].append({"case": label, "cython_us": cy, "python_us": py})
    e = rng.normal(size=4000)
    cy = _best(lambda: backends["cython"].ar1_filter(e, 0.8), args.repeat) * 1e6
    py = _best(lambda: backends["python"].ar1_filter(e, 0.8), args.repeat) * 1e6
    print(f"{'ar1 filter n=4000':<28}{cy:>12.1f}{py:>12.1f}{py / cy:>8.2f}x")
    results["cases"].append({"case": "ar1 filter n=4000", "cython_us": cy, "python_us": py})
    diff = np.max(np.abs(backends["cython"].ar1_filter(e, 0.8) - backends["python"].ar1_filter(e, 0.8)))
    print(f"max |cython - python| on ar1 filter: {diff:.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
