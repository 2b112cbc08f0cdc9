"""Deterministic JSON report writing.

Reports must be byte-identical across reruns and worker counts, so they are
serialized with sorted keys, repr-exact floats, and no timestamps; volatile
run metadata goes to a separate side-channel file.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def canonical_json(payload: dict) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n"


def config_hash(config: dict) -> str:
    blob = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_report(path: str | Path, payload: dict) -> None:
    Path(path).write_text(canonical_json(payload))


def write_run_meta(path: str | Path, **meta) -> None:
    meta = dict(meta)
    meta["wall_time"] = time.time()
    Path(path).write_text(json.dumps(to_jsonable(meta), sort_keys=True, indent=2) + "\n")
