"""JSON checkpoint format for model weights.

Layout (one JSON object)::

    {
      "format": "prbcast-checkpoint",
      "format_version": 1,
      "kind": "<model kind>",
      "config": {...hyperparameters...},
      "meta": {...training metadata...},
      "params": [{"name": str, "shape": [int, ...], "data": [float, ...]}, ...]
    }

``data`` is the row-major flattening of the tensor. Floats are written with
Python's shortest round-trip repr, so save -> load is bit-exact.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import ParseError

FORMAT = "prbcast-checkpoint"
FORMAT_VERSION = 1


def dump_checkpoint(kind: str, config: dict, params: dict, meta: dict | None = None) -> str:
    doc = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "meta": meta or {},
        "params": [
            {"name": name, "shape": list(np.shape(arr)), "data": np.asarray(arr, dtype=np.float64).reshape(-1).tolist()}
            for name, arr in params.items()
        ],
    }
    return json.dumps(doc, allow_nan=False, sort_keys=False)


def parse_checkpoint(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint is not valid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ParseError("not a prbcast checkpoint")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    params = {}
    for entry in doc["params"]:
        arr = np.asarray(entry["data"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ParseError(f"parameter {entry['name']}: data length {arr.size} does not match shape {shape}")
        params[entry["name"]] = arr.reshape(shape)
    return {"kind": doc["kind"], "config": doc["config"], "meta": doc.get("meta", {}), "params": params}


def save_checkpoint(path, kind: str, config: dict, params: dict, meta: dict | None = None) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dump_checkpoint(kind, config, params, meta))
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    return parse_checkpoint(Path(path).read_text())
