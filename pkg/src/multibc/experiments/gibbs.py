"""Gibbs-measure thermodynamics: transfer data, CLT block surrogate, mass LIL.

The exact side (pressure, entropy, dimension, Green-Kubo variance,
iterated-logarithm ceiling) comes from the transfer operator and costs
nothing.  The sampled side draws digit strings from the Gibbs state,
sums the potential over blocks, and compares the block variance to the
Green-Kubo value; a dyadic-block curve shows the plateau.  A small set
of points also tracks the normalized ball-mass fluctuation statistic at
shrinking radii, the quantity whose limsup the LIL ceiling bounds.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from ..config import ExperimentConfig
from ..precision import SeededRng
from ..runner import Curve, KindResult, WorkerPool
from ..thermo import GibbsMeasure, PotentialSpec, lil_statistic, thermo_summary

CHUNK = 1024
_LIL_POINTS = 48
_LIL_DIGITS = 320
_LIL_CHANNEL = 1  # block samples use channel 0


def potential_spec(cfg_data: dict) -> PotentialSpec:
    pot = cfg_data["potential"]
    if pot["kind"] == "weights":
        values = tuple(math.log(w) for w in pot["weights"])
        return PotentialSpec(
            branch_count=pot["branches"], depth=pot["depth"], values=values
        )
    # conformal family: t times the geometric potential -ln|f'|, constant
    # for a linear full-branch map, so the variance must degenerate
    k = pot["branches"]
    return PotentialSpec(
        branch_count=k, depth=1, values=(-pot["t"] * math.log(k),) * k
    )


def _dyadic_lens(block_len: int) -> list[int]:
    out = [1 << j for j in range(4, block_len.bit_length()) if (1 << j) < block_len]
    out.append(block_len)
    return out


def _block_chunk(cfg_data: dict, lo: int, hi: int):
    """Partial potential sums S_j per sample at dyadic block lengths."""
    spec = potential_spec(cfg_data)
    gm = GibbsMeasure(spec)
    rng = SeededRng(cfg_data["seed"])
    m = cfg_data["run"]["block_len"]
    depth, k = spec.depth, spec.branch_count
    digits = gm.sample_digits(rng, np.arange(lo, hi, dtype=np.int64), m + depth - 1)
    idx = np.zeros((hi - lo, m), dtype=np.int64)
    for u in range(depth):
        idx = idx * k + digits[:, u : u + m]
    phi = np.asarray(spec.values)[idx]
    sums = {}
    running = np.zeros(hi - lo)
    pos = 0
    for j in _dyadic_lens(m):
        running = running + phi[:, pos:j].sum(axis=1)
        pos = j
        sums[j] = running.copy()
    return sums


def _lil_curve(spec: PotentialSpec, gm: GibbsMeasure, summary, seed: int):
    """Mean and top decile of the mass statistic at radii k^-j."""
    if summary.degenerate:
        return {}
    rng = SeededRng(seed)
    digits = gm.sample_digits(
        rng, np.arange(_LIL_POINTS, dtype=np.int64), _LIL_DIGITS, channel=_LIL_CHANNEL
    )
    k = spec.branch_count
    denom = Fraction(k) ** _LIL_DIGITS
    points = []
    for row in digits:
        num = 0
        for d in row.tolist():
            num = num * k + int(d)
        points.append(Fraction(num, denom))
    depths = [8, 16, 32, 64, 128, 256]
    stats = np.empty((_LIL_POINTS, len(depths)))
    for i, x in enumerate(points):
        for j, dep in enumerate(depths):
            r = Fraction(1, k**dep)
            mass = gm.ball_log_mass(x, r)
            stats[i, j] = lil_statistic(
                mass.log_mid, -dep * math.log(k), summary.dimension
            )
    rm = np.maximum.accumulate(stats, axis=1)
    return {
        "lil-running-max-mean": Curve(
            x=depths,
            y=rm.mean(axis=0).tolist(),
            xlabel="depth j (radius k^-j)",
            ylabel="mean running max",
        ),
        "lil-running-max-top-decile": Curve(
            x=depths,
            y=np.quantile(rm, 0.9, axis=0).tolist(),
            xlabel="depth j (radius k^-j)",
            ylabel="top-decile running max",
        ),
    }


def run_gibbs_lil(cfg: ExperimentConfig, pool: WorkerPool) -> KindResult:
    run = cfg["run"]
    spec = potential_spec(cfg.data)
    summary = thermo_summary(spec)
    gm = GibbsMeasure(spec)

    parts = pool.map_chunks(
        _block_chunk, dict(cfg.data), run["samples"], CHUNK, "block sums"
    )
    sums = {j: np.concatenate([p[j] for p in parts]) for j in parts[0]}
    m = run["block_len"]
    nsm = run["samples"]
    s_m = sums[m]
    var_hat = float(s_m.var(ddof=1) / m)
    # chi-square scale spread of a variance estimate; heavier tails than
    # normal would widen this, noted rather than modeled
    var_se = var_hat * math.sqrt(2.0 / (nsm - 1))

    rows = [
        {"metric": "pressure", "value": summary.pressure, "predicted": "",
         "stderr": "", "note": "0 when the weights sum to 1"},
        {"metric": "entropy", "value": summary.entropy, "predicted": "",
         "stderr": "", "note": ""},
        {"metric": "lyapunov", "value": summary.lyapunov, "predicted": "",
         "stderr": "", "note": ""},
        {"metric": "dimension", "value": summary.dimension, "predicted": "",
         "stderr": "", "note": "entropy / lyapunov"},
        {"metric": "sigma2-green-kubo", "value": summary.sigma2, "predicted": "",
         "stderr": "", "note": f"terms={summary.gk_terms} tail<{summary.gk_tail_bound:.3g}"},
        {"metric": "lil-limit", "value": summary.lil_limit, "predicted": "",
         "stderr": "", "note": ""},
        {"metric": "degenerate", "value": int(summary.degenerate), "predicted": "",
         "stderr": "", "note": "conformal potentials must degenerate"},
        {"metric": "clt-block-var", "value": var_hat, "predicted": summary.sigma2,
         "stderr": var_se, "note": f"block_len={m} samples={nsm}"},
    ]
    js = sorted(sums)
    curves = {
        "block-var-over-len": Curve(
            x=js,
            y=[float(sums[j].var(ddof=1) / j) for j in js],
            yerr=[float(sums[j].var(ddof=1) / j) * math.sqrt(2.0 / (nsm - 1)) for j in js],
            xlabel="block length",
            ylabel="var(S_j)/j",
        )
    }
    curves.update(_lil_curve(spec, gm, summary, cfg.seed))
    records = [{"i": int(i), "s_m": float(v)} for i, v in enumerate(s_m)]
    return KindResult(rows=rows, records=records, curves=curves)
