"""Experiment execution: chunked work, atomic outputs, result manifest.

Work is partitioned by sample index into fixed-size chunks before any
worker sees it, and every per-sample random stream is keyed by the
absolute sample index, so results are identical for any worker count;
only wall time changes.  Chunk outputs are combined in index order and
all reductions are associative.

Outputs are written atomically: content goes to a ``*.tmp-<pid>`` file
in the target directory and is renamed into place.  Stale temp files
from interrupted runs are removed when a new run starts.  The manifest
is written last, so a directory with a manifest always holds the files
the manifest hashes.

The manifest records the experiment id, config content hash, seed,
wall time, and a sha256 per output file.  Payload files (summary,
records, curves) depend only on the effective config, never on timing
or worker count, so re-running an identical config reproduces them
byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .config import SCHEMA_VERSION, ExperimentConfig, canonical_json

__all__ = [
    "Curve",
    "KindResult",
    "WorkerPool",
    "run_experiment",
    "read_manifest",
    "MANIFEST_NAME",
]

MANIFEST_NAME = "manifest.json"


@dataclass
class Curve:
    """One plottable curve: parallel columns, optional pointwise error."""

    x: list
    y: list
    yerr: Optional[list] = None
    xlabel: str = "x"
    ylabel: str = "y"

    def as_doc(self) -> dict:
        return {
            "x": list(self.x),
            "y": list(self.y),
            "yerr": None if self.yerr is None else list(self.yerr),
            "xlabel": self.xlabel,
            "ylabel": self.ylabel,
        }


@dataclass
class KindResult:
    """What a kind runner hands back for serialization.

    ``rows`` become summary.csv (uniform keys per kind), ``records`` become
    records.jsonl (one JSON object per line, bulky per-sample payloads),
    ``curves`` become curves.json keyed by curve name.
    """

    rows: list[dict]
    records: list[dict] = field(default_factory=list)
    curves: dict[str, Curve] = field(default_factory=dict)


def _progress_to_stderr(msg: str) -> None:
    print(f"[multibc] {msg}", file=sys.stderr, flush=True)


class WorkerPool:
    """Maps chunk functions over fixed sample-index ranges.

    ``fn`` must be a module-level callable ``fn(cfg_data, lo, hi)``; it is
    pickled by reference under process-based execution.  Results come back
    in chunk order regardless of completion order.
    """

    def __init__(self, workers: int = 1, progress: Callable[[str], None] = _progress_to_stderr):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = workers
        self.progress = progress

    def map_chunks(
        self,
        fn: Callable[[dict, int, int], Any],
        cfg_data: dict,
        total: int,
        chunk: int,
        label: str = "chunks",
    ) -> list:
        bounds = [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]
        n = len(bounds)
        stride = max(1, n // 8)
        out: list = []
        if self.workers == 1 or n == 1:
            for i, (lo, hi) in enumerate(bounds):
                out.append(fn(cfg_data, lo, hi))
                if (i + 1) % stride == 0 or i + 1 == n:
                    self.progress(f"{label}: {i + 1}/{n}")
            return out
        with ProcessPoolExecutor(max_workers=min(self.workers, n)) as pool:
            futures = [pool.submit(fn, cfg_data, lo, hi) for lo, hi in bounds]
            done = 0
            for fut in futures:
                out.append(fut.result())
                done += 1
                if done % stride == 0 or done == n:
                    self.progress(f"{label}: {done}/{n}")
        return out


# --- atomic serialization ----------------------------------------------------------


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(payload)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def clean_stale_temps(out_dir: Path) -> int:
    removed = 0
    for p in out_dir.glob("*.tmp-*"):
        p.unlink(missing_ok=True)
        removed += 1
    return removed


def _summary_bytes(rows: Sequence[dict]) -> bytes:
    buf = io.StringIO(newline="")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _records_bytes(records: Sequence[dict]) -> bytes:
    lines = [canonical_json(rec) for rec in records]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def _curves_bytes(curves: dict[str, Curve]) -> bytes:
    doc = {name: c.as_doc() for name, c in curves.items()}
    return (canonical_json(doc) + "\n").encode("utf-8")


def _sha256(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def run_experiment(
    cfg: ExperimentConfig,
    out_dir,
    *,
    workers: int = 1,
    progress: Callable[[str], None] = _progress_to_stderr,
) -> dict:
    """Run one experiment, write its outputs, return the manifest dict."""
    from . import experiments  # deferred: keeps config/runner importable alone

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stale = clean_stale_temps(out)
    if stale:
        progress(f"removed {stale} stale temp file(s)")

    runner = experiments.KIND_RUNNERS[cfg.kind]
    pool = WorkerPool(workers=workers, progress=progress)
    progress(f"run {cfg.name} kind={cfg.kind} seed={cfg.seed} workers={workers}")
    t0 = time.monotonic()
    result = runner(cfg, pool)
    wall = time.monotonic() - t0

    payloads = {
        "summary": (cfg.output_name("summary"), _summary_bytes(result.rows)),
        "records": (cfg.output_name("records"), _records_bytes(result.records)),
        "curves": (cfg.output_name("curves"), _curves_bytes(result.curves)),
    }
    files = {}
    for role, (name, payload) in payloads.items():
        _atomic_write(out / name, payload)
        files[role] = {"name": name, "sha256": _sha256(payload), "bytes": len(payload)}

    manifest = {
        "experiment": cfg.name,
        "kind": cfg.kind,
        "config_hash": cfg.hash,
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "wall_time_s": round(wall, 3),
        "workers": workers,
        "files": files,
    }
    _atomic_write(
        out / MANIFEST_NAME,
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"),
    )
    progress(f"done in {wall:.1f}s -> {out}")
    return manifest


def read_manifest(out_dir) -> dict:
    with open(Path(out_dir) / MANIFEST_NAME, "r", encoding="utf-8") as fh:
        return json.load(fh)
