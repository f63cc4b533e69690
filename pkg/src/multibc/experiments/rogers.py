"""Lattice-average audits: moment identities and multi-solution tail decay.

Both modes walk one lattice draw at a time through exact counting, so
this kind runs single-process; reduced sample counts keep bundled
configs quick, and the heavy settings belong to the acceptance suite.
The multi-solution mode reports honestly: rows with too few events are
inconclusive rather than extrapolated.
"""

from __future__ import annotations

import math

from ..config import ExperimentConfig
from ..diophantine import multi_solution_probability, rogers_moment_check
from ..precision import SeededRng
from ..runner import Curve, KindResult, WorkerPool


def _run_moments(cfg: ExperimentConfig) -> KindResult:
    run = cfg["run"]
    report = rogers_moment_check(
        SeededRng(cfg.seed),
        run["samples"],
        a=run["a"],
        tau=run["tau"],
        offsets_per_basis=run["offsets_per_basis"],
    )
    rows = [
        {
            "metric": row.name,
            "value": row.estimate,
            "predicted": row.predicted,
            "stderr": row.stderr,
            "rel_tol": row.rel_tol,
            "verdict": row.verdict,
            "note": row.note,
        }
        for row in report.rows
    ]
    return KindResult(rows=rows, records=[], curves={})


def _run_multi_solution(cfg: ExperimentConfig) -> KindResult:
    run = cfg["run"]
    report = multi_solution_probability(
        SeededRng(cfg.seed),
        [1 << e for e in run["m_log2s"]],
        run["samples"],
        c=run["c"],
        s=run["s"],
    )
    def _se(row):
        return math.sqrt(max(row.p_hat * (1 - row.p_hat), 0.0) / row.n_samples)

    rows = [
        {
            "metric": f"tail-prob-M{row.m:d}",
            "value": row.p_hat,
            "predicted": "",
            "stderr": _se(row),
            "rel_tol": "",
            "verdict": "CONCLUSIVE" if row.conclusive else "INCONCLUSIVE",
            "note": f"events={row.events} nu={row.nu:.6g}",
        }
        for row in report.rows
    ]
    slope = report.slope
    rows.append(
        {
            "metric": "tail-slope-log2",
            "value": slope if not math.isnan(slope) else "",
            "predicted": -2.0,
            "stderr": "",
            "rel_tol": 0.3,
            "verdict": report.verdict,
            "note": "slope of ln P over ln M across conclusive rows",
        }
    )
    curves = {
        "tail-prob": Curve(
            x=[math.log(row.m) for row in report.rows],
            y=[row.p_hat for row in report.rows],
            yerr=[_se(row) for row in report.rows],
            xlabel="ln M",
            ylabel="P(more than one solution)",
        )
    }
    return KindResult(rows=rows, records=[], curves=curves)


def run_rogers(cfg: ExperimentConfig, pool: WorkerPool) -> KindResult:
    del pool  # exact counting per draw; single-process by design
    if cfg["run"]["mode"] == "moments":
        return _run_moments(cfg)
    return _run_multi_solution(cfg)
