"""Kind runners: one callable per experiment kind.

Each runner takes ``(cfg: ExperimentConfig, pool: WorkerPool)`` and
returns a :class:`multibc.runner.KindResult`.  Chunk functions live at
module level so process pools can pick them up by reference; every one
of them re-derives its random streams from the config seed and absolute
sample indices, which is what makes results independent of the worker
count and chunk layout.
"""

from __future__ import annotations

from . import audit, gibbs, hits, kg, multilog, returns, rogers

KIND_RUNNERS = {
    "poisson-hit": hits.run_poisson_hit,
    "evt": hits.run_evt,
    "scaled-process": hits.run_scaled_process,
    "mixed-poisson-return": returns.run_mixed_poisson,
    "multilog-hit": multilog.run_hit,
    "multilog-return": multilog.run_return,
    "gibbs-lil": gibbs.run_gibbs_lil,
    "indep-audit": audit.run_audit,
    "kg-scan": kg.run_kg_scan,
    "rogers-audit": rogers.run_rogers,
}

__all__ = ["KIND_RUNNERS"]
