"""Block-streaming orbit sweeps for large Monte-Carlo batches.

A batch of binary orbits is scanned in column blocks of a few hundred time
steps so peak memory stays near samples * block * 8 bytes regardless of the
horizon.  One pass produces everything the count statistics need: exact hit
counts, the r smallest target distances, and first hit times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .fastpath import BitOrbitBatch, u64_of_fraction

__all__ = [
    "SweepResult",
    "hit_sweep",
    "return_sweep",
    "mark_sweep",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SweepResult:
    counts: np.ndarray  # (S,) int64 exact hit counts over times 1..n
    minima: np.ndarray  # (S, r_max) float64 ascending smallest distances
    first_hit: np.ndarray  # (S,) int64 first hit time, n+1 when no hit


def _gray_recheck(
    batch: BitOrbitBatch,
    dist: np.ndarray,
    k_lo: int,
    threshold: Fraction,
    t64: int,
    center: Fraction,
    hits: np.ndarray,
) -> None:
    # entries within 8 ulps of the u64 threshold are re-decided exactly
    lo = np.uint64(max(t64 - 8, 0))
    hi = np.uint64(min(t64 + 8, _MASK64))
    gray = (dist >= lo) & (dist <= hi)
    if not np.any(gray):
        return
    for row, col in zip(*np.nonzero(gray)):
        x = batch.exact_fraction(int(row), k_lo + int(col))
        d = abs(x - center) % 1
        d = min(d, 1 - d)
        hits[row, col] = d <= threshold


def hit_sweep(
    batch: BitOrbitBatch,
    center: Fraction,
    rho: Fraction,
    n: int,
    *,
    r_max: int = 1,
    block: int = 128,
) -> SweepResult:
    """Exact hit counts, r smallest distances, and first hit times over 1..n.

    Hits are d(x_k, center) <= rho with the boundary decided in exact rational
    arithmetic; distances feeding the minima stay 64-bit approximations, ample
    for continuous statistics of near-misses.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if r_max < 1:
        raise ValueError("r_max must be positive")
    if not 0 < rho < Fraction(1, 2):
        raise ValueError("rho must lie in (0, 1/2)")
    s_count = batch.n_samples
    center = center % 1
    c64 = np.uint64(u64_of_fraction(center))
    t64 = u64_of_fraction(rho)
    counts = np.zeros(s_count, dtype=np.int64)
    first_hit = np.full(s_count, n + 1, dtype=np.int64)
    run_min = np.full((s_count, r_max), np.uint64(_MASK64), dtype=np.uint64)
    for k_lo in range(1, n + 1, block):
        k_hi = min(k_lo + block - 1, n)
        w = batch.windows(k_lo, k_hi)
        dist = np.minimum(w - c64, c64 - w)
        hits = dist <= np.uint64(t64)
        _gray_recheck(batch, dist, k_lo, rho, t64, center, hits)
        counts += hits.sum(axis=1)
        hit_rows = np.nonzero(hits.any(axis=1))[0]
        if hit_rows.size:
            firsts = k_lo + hits[hit_rows].argmax(axis=1)
            np.minimum.at(first_hit, hit_rows, firsts)
        if r_max == 1:
            run_min[:, 0] = np.minimum(run_min[:, 0], dist.min(axis=1))
        else:
            take = min(r_max, dist.shape[1])
            part = np.partition(dist, take - 1, axis=1)[:, :take]
            run_min = np.sort(np.concatenate([run_min, part], axis=1), axis=1)[:, :r_max]
    minima = np.sort(run_min, axis=1).astype(np.float64) * 2.0**-64
    return SweepResult(counts=counts, minima=minima, first_hit=first_hit)


def return_sweep(
    batch: BitOrbitBatch,
    amplitude: float,
    rho: float,
    n: int,
    *,
    block: int = 128,
) -> np.ndarray:
    """Return counts for the circle map conjugated to doubling by h(u) = u + a sin(2 pi u) / (2 pi).

    Sample i counts times k in 1..n with d(z_k, z_0) <= rho, where z = h(u)
    and u follows the binary orbit.  Distances are evaluated in float64,
    adequate because return radii sit far above the 2^-53 resolution.
    """
    if not 0 <= amplitude < 1:
        raise ValueError("amplitude must lie in [0, 1)")
    if not 0 < rho < 0.5:
        raise ValueError("rho must lie in (0, 1/2)")
    a = amplitude / (2.0 * math.pi)
    u0 = batch.windows(0, 0)[:, 0].astype(np.float64) * 2.0**-64
    z0 = u0 + a * np.sin(2.0 * math.pi * u0)
    counts = np.zeros(batch.n_samples, dtype=np.int64)
    for k_lo in range(1, n + 1, block):
        k_hi = min(k_lo + block - 1, n)
        u = batch.windows(k_lo, k_hi).astype(np.float64) * 2.0**-64
        z = u + a * np.sin(2.0 * math.pi * u)
        d = np.abs(z - z0[:, None]) % 1.0
        d = np.minimum(d, 1.0 - d)
        counts += (d <= rho).sum(axis=1)
    return counts


def mark_sweep(
    batch: BitOrbitBatch,
    center: Fraction,
    n: int,
    radius_cap: float,
    *,
    block: int = 256,
) -> list[np.ndarray]:
    """Per-sample ascending-time marks n * d(x_k, center) for d <= radius_cap / n.

    The output feeds band statistics of the rescaled hit point process; marks
    keep their time order, one float array per sample.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if radius_cap <= 0:
        raise ValueError("radius_cap must be positive")
    thr = Fraction(radius_cap) / n
    if thr >= Fraction(1, 2):
        raise ValueError("radius_cap / n must stay below 1/2")
    c64 = np.uint64(u64_of_fraction(center % 1))
    t64 = np.uint64(u64_of_fraction(thr))
    rows: list[list[np.ndarray]] = [[] for _ in range(batch.n_samples)]
    for k_lo in range(1, n + 1, block):
        k_hi = min(k_lo + block - 1, n)
        w = batch.windows(k_lo, k_hi)
        dist = np.minimum(w - c64, c64 - w)
        hit_r, hit_c = np.nonzero(dist <= t64)
        marks = dist[hit_r, hit_c].astype(np.float64) * 2.0**-64 * n
        for r, m in zip(hit_r, marks):
            rows[int(r)].append(np.float64(m))
    return [np.asarray(r, dtype=np.float64) for r in rows]
