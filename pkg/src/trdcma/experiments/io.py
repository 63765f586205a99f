"""Deterministic artifact writers.

Every file starts with metadata naming the config digest and the master
seed. Nothing time- or host-dependent is written, so the same config and
seed always give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError

WORKERS_ENV = "TRDCMA_WORKERS"


def meta(cfg, scenario: str) -> dict:
    return {"config_sha256": cfg.digest(), "seed": cfg.master_seed, "scenario": scenario}


def header_lines(cfg, scenario: str) -> list[str]:
    return [f"{k}={v}" for k, v in meta(cfg, scenario).items()]


def plain(obj):
    """Recursively convert numpy values to JSON-safe Python values.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return [plain(obj.real), plain(obj.imag)]
    return obj


def write_json(path, payload: dict, cfg, scenario: str):
    doc = {"meta": meta(cfg, scenario), **plain(payload)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows, cfg, scenario: str):
    with Path(path).open("w", newline="") as fh:
        for line in header_lines(cfg, scenario):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def write_bits(path, bits, cfg, scenario: str):
    lines = [f"# {line}" for line in header_lines(cfg, scenario)]
    lines.append("".join("1" if b else "0" for b in bits))
    Path(path).write_text("\n".join(lines) + "\n")


def read_bits(path) -> np.ndarray:
    text = "".join(line.strip() for line in Path(path).read_text().splitlines() if not line.startswith("#"))
    if set(text) - {"0", "1"}:
        raise ConfigurationError(f"{path}: bit file may only contain 0 and 1")
    return np.array([c == "1" for c in text], dtype=np.uint8)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be at least 1")
    return n


def parallel_map(fn, items):
    """Ordered map; uses a process pool when more than one worker is requested."""
    items = list(items)
    n = min(worker_count(), max(1, len(items)))
    if n == 1:
        return [fn(x) for x in items]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * n))))
