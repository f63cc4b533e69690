"""Diophantine solution counting: exact dyadic scans and MC ensemble averages.

Scan mode follows named or explicit rationals through an exact counting
grid; alpha labels 'golden' and 'sqrt2' expand to 200-bit rational
truncations of (sqrt(5)-1)/2 and sqrt(2)-1, well below the counting
grid's own resolution.  MC mode averages solution counts over uniform
alpha and checks the mean against the lattice-average oracle.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from ..config import ExperimentConfig
from ..diophantine import (
    ApproxQuery,
    count_DN,
    expected_count_oracle,
    mc_counts,
    rs_scan,
)
from ..precision import SeededRng
from ..runner import Curve, KindResult, WorkerPool

CHUNK = 20_000
RECORD_CAP = 100_000

_ALPHA_BITS = 200


def resolve_alpha(label: str) -> Fraction:
    if label == "golden":
        return Fraction(math.isqrt(5 << (2 * _ALPHA_BITS)) - (1 << _ALPHA_BITS), 1 << (_ALPHA_BITS + 1))
    if label == "sqrt2":
        return Fraction(math.isqrt(2 << (2 * _ALPHA_BITS)) - (1 << _ALPHA_BITS), 1 << _ALPHA_BITS)
    return Fraction(label)


def query_of(cfg_data: dict) -> ApproxQuery:
    q = cfg_data["query"]
    return ApproxQuery(
        dim=q["dim"],
        c=q["c"],
        s=q["s"],
        flavor=q["flavor"],
        shift=q["shift"],
        norm=q["norm"],
    )


def _mc_chunk(cfg_data: dict, lo: int, hi: int):
    rng = SeededRng(cfg_data["seed"])
    query = query_of(cfg_data)
    run = cfg_data["run"]
    return mc_counts(
        run["n"],
        query,
        rng,
        np.arange(lo, hi, dtype=np.int64),
        withgcd=run["withgcd"],
    )


def _run_mc(cfg: ExperimentConfig, pool: WorkerPool) -> KindResult:
    run = cfg["run"]
    query = query_of(cfg.data)
    parts = pool.map_chunks(_mc_chunk, dict(cfg.data), run["samples"], CHUNK, "mc alphas")
    counts = np.concatenate(parts)
    mean = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(counts.size))
    oracle = expected_count_oracle(run["n"], query, withgcd=run["withgcd"])
    z = (mean - oracle) / se if se > 0 else math.inf
    rows = [
        {
            "metric": "mc-mean-count",
            "value": mean,
            "predicted": oracle,
            "stderr": se,
            "note": f"n={run['n']} z={z:.3f}",
        }
    ]
    top = int(np.quantile(counts, 0.999)) + 1
    freq = np.bincount(np.minimum(counts, top), minlength=top + 1) / counts.size
    curves = {
        "count-mass": Curve(
            x=list(range(top + 1)),
            y=freq.tolist(),
            xlabel="solution count (top bin lumped)",
            ylabel="frequency",
        )
    }
    records = []
    if run["samples"] <= RECORD_CAP:
        records = [{"i": int(i), "count": int(c)} for i, c in enumerate(counts)]
    return KindResult(rows=rows, records=records, curves=curves)


def _run_scan(cfg: ExperimentConfig, pool: WorkerPool) -> KindResult:
    del pool  # exact per-alpha scans, sequential by construction
    run = cfg["run"]
    query = query_of(cfg.data)
    rows, curves, records = [], {}, []
    for label in run["alphas"]:
        alpha = resolve_alpha(label)
        scan = rs_scan(alpha, query, n_max=run["n_max"], r=run["ratio"])
        for row in scan:
            rows.append(
                {
                    "alpha": label,
                    "n": row.n,
                    "card": row.card,
                    "count": row.count,
                    "hit": int(row.hit),
                }
            )
        curves[f"card-{label.replace('/', '-')}"] = Curve(
            x=[math.log(row.n) for row in scan],
            y=[row.card for row in scan],
            xlabel="ln N",
            ylabel="distinct-k solution card",
        )
        final = count_DN(alpha, run["n_max"], query)
        records.extend(
            {
                "alpha": label,
                "n": run["n_max"],
                "k": list(s.k) if isinstance(s.k, tuple) else s.k,
                "m": list(s.m) if isinstance(s.m, tuple) else s.m,
                "value": s.value,
            }
            for s in final.solutions
        )
    return KindResult(rows=rows, records=records, curves=curves)


def run_kg_scan(cfg: ExperimentConfig, pool: WorkerPool) -> KindResult:
    if cfg["run"]["mode"] == "scan":
        return _run_scan(cfg, pool)
    return _run_mc(cfg, pool)
