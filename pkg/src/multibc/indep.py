"""Monte-Carlo audits of near-independence for hit events along orbits.

Three quantitative regimes are probed for tuples of hit times:

* separated tuples, joint probability matching the product sigma^r (M1);
* clustered tuples, joint probability collapsing well below sigma^m for a
  tuple whose separation index is m < r (M2);
* cross-scale pairs of tuples at two radii, joint probability matching the
  product of the two per-scale targets (M3).

A fourth family (EM-r) checks multi-time correlation defects for smooth or
Lipschitz observables directly, with an exact Fourier ledger for trigonometric
modes under the doubling map.  ``slow_recurrence_profile`` measures how fast
mu(B intersect f^-k B) / mu(B) settles to mu(B), exactly for linear expanding
maps.

Decay exponents are only ever reported as fitted slopes with error bars;
nothing here certifies a constant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .fastpath import BitOrbitBatch, decide_leq_with_fallback, u64_of_fraction, wrapped_dist_u64
from .hitstats import SeparationFns, separation_index
from .precision import SeededRng, make_point, uniform_point
from .systems import (
    LinearExpanding,
    SystemSpec,
    ToralTranslation,
    orbit_stream,
    sample_initial,
)
from .targets import RadiusSchedule

__all__ = [
    "UnderpoweredError",
    "TupleSpec",
    "IndepReport",
    "CSV_HEADER",
    "write_reports_csv",
    "hit_matrix",
    "joint_hit_probability_mc",
    "exact_joint_hit_probability",
    "estimate_M1",
    "estimate_M2",
    "estimate_M3",
    "em_defect_fourier",
    "estimate_EMr",
    "RecurrenceRow",
    "slow_recurrence_profile",
]

MIN_SAMPLES = 10_000
RECURRENCE_DEPTH_FACTOR = 50.0


class UnderpoweredError(RuntimeError):
    """Raised when the target probability is too small for the sample budget."""


@dataclass(frozen=True)
class TupleSpec:
    """Hit times 1 <= k_1 < ... < k_r <= n inside a block of length n."""

    n: int
    ks: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ValueError("block length must be at least 3")
        if not self.ks:
            raise ValueError("tuple must contain at least one time")
        prev = 0
        for k in self.ks:
            if k <= prev:
                raise ValueError("times must be strictly ascending and positive")
            prev = k
        if prev > self.n:
            raise ValueError("times must not exceed the block length")

    @property
    def r(self) -> int:
        return len(self.ks)

    def separation(self, fns: SeparationFns) -> int:
        return separation_index(self.ks, fns.s(self.n))

    def is_separated(self, fns: SeparationFns) -> bool:
        return self.separation(fns) == self.r


@dataclass(frozen=True)
class IndepReport:
    axiom: str
    system: str
    r: int
    times: tuple[int, ...]
    estimate: float
    target: float
    ratio: float
    mc_stderr: float
    samples: int
    verdict: bool
    note: str = ""

    def csv_row(self) -> list:
        return [
            self.axiom,
            self.system,
            self.r,
            " ".join(str(k) for k in self.times),
            f"{self.estimate:.10g}",
            f"{self.target:.10g}",
            f"{self.ratio:.10g}",
            f"{self.mc_stderr:.10g}",
            self.samples,
            "pass" if self.verdict else "fail",
        ]


CSV_HEADER = [
    "axiom",
    "system",
    "r",
    "tuple",
    "estimate",
    "target",
    "ratio",
    "stderr",
    "verdict",
]


def write_reports_csv(reports: Iterable[IndepReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rep in reports:
            w.writerow(rep.csv_row())


def _system_label(system: SystemSpec) -> str:
    if isinstance(system, LinearExpanding):
        return f"linear-{system.branch_count}"
    if isinstance(system, ToralTranslation):
        return "translation"
    return type(system).__name__


def _wrapped_fraction_dist(x: Fraction, c: Fraction) -> Fraction:
    d = abs(x - c) % 1
    return min(d, 1 - d)


def _hits_doubling(
    rng: SeededRng,
    times: Sequence[int],
    center: Fraction,
    rhos: Sequence[Fraction],
    samples: int,
    channel: int,
) -> np.ndarray:
    batch = BitOrbitBatch.sample(rng, np.arange(samples), n_steps=max(times), channel=channel)
    c64 = u64_of_fraction(center % 1)
    cf = center % 1
    out = np.empty((samples, len(times)), dtype=bool)
    for j, (t, rho) in enumerate(zip(times, rhos)):
        w = batch.window_at([t])[:, 0]
        d = wrapped_dist_u64(w, np.uint64(c64))
        out[:, j] = decide_leq_with_fallback(
            d,
            Fraction(rho),
            lambda flat, t=t: _wrapped_fraction_dist(batch.exact_fraction(flat, t), cf),
        )
    return out


def _hits_translation(
    system: ToralTranslation,
    rng: SeededRng,
    times: Sequence[int],
    center: Fraction,
    rhos: Sequence[Fraction],
    samples: int,
    channel: int,
) -> np.ndarray:
    bits = system.alpha.bits
    a = system.alpha.coords[0]
    scale = 1 << bits
    cf = center % 1
    # scaled thresholds once; per-sample work is integer adds and compares
    thr = [Fraction(rho) * scale for rho in rhos]
    out = np.empty((samples, len(times)), dtype=bool)
    for i in range(samples):
        sub = rng.child((channel << 48) | i)
        x0 = uniform_point(sub, dim=1, bits=bits).coords[0]
        for j, t in enumerate(times):
            p = (x0 + t * a) % scale
            d = abs(Fraction(p, scale) - cf)
            d = min(d, 1 - d)
            out[i, j] = d * scale <= thr[j]
    return out


def _hits_generic(
    system: SystemSpec,
    rng: SeededRng,
    times: Sequence[int],
    center: Fraction,
    rhos: Sequence[Fraction],
    samples: int,
    channel: int,
    bits: int,
) -> np.ndarray:
    # exact orbit per sample; cost grows with max(times), keep budgets small
    tmax = max(times)
    tset = {t: j for j, t in enumerate(times)}
    cf = center % 1
    out = np.zeros((samples, len(times)), dtype=bool)
    for i in range(samples):
        sub = rng.child((channel << 48) | i)
        x0 = sample_initial(system, sub, bits=bits)
        for k, p in enumerate(orbit_stream(system, x0, tmax), start=1):
            j = tset.get(k)
            if j is not None:
                x = Fraction(p.coords[0], 1 << p.bits)
                out[i, j] = _wrapped_fraction_dist(x, cf) <= rhos[j]
    return out


def hit_matrix(
    system: SystemSpec,
    rng: SeededRng,
    times: Sequence[int],
    center: Fraction,
    rhos: Sequence[Fraction],
    samples: int,
    *,
    channel: int = 0,
    bits: int = 256,
) -> np.ndarray:
    """Boolean (samples, len(times)): orbit of sample i within rhos[j] of center at times[j].

    Initial points are uniform for expanding maps and translations (their
    invariant measure); comparisons are exact at the stored resolution, with
    the doubling map on the bit-window fast path.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    times = [int(t) for t in times]
    if sorted(set(times)) != times or times[0] < 1:
        raise ValueError("times must be strictly ascending and positive")
    rhos = [Fraction(r) for r in rhos]
    if len(rhos) != len(times):
        raise ValueError("one radius per time required")
    if any(r <= 0 for r in rhos):
        raise ValueError("radii must be positive")
    if isinstance(system, LinearExpanding) and system.branch_count == 2 and system.dim == 1:
        return _hits_doubling(rng, times, center, rhos, samples, channel)
    if isinstance(system, ToralTranslation) and system.dim == 1:
        return _hits_translation(system, rng, times, center, rhos, samples, channel)
    return _hits_generic(system, rng, times, center, rhos, samples, channel, bits)


def joint_hit_probability_mc(
    system: SystemSpec,
    rng: SeededRng,
    times: Sequence[int],
    center: Fraction,
    rhos: Sequence[Fraction],
    samples: int,
    *,
    channel: int = 0,
) -> tuple[float, float]:
    """(estimate, binomial stderr) for P(hit at every listed time)."""
    hits = hit_matrix(system, rng, times, center, rhos, samples, channel=channel)
    count = int(np.all(hits, axis=1).sum())
    est = count / samples
    stderr = math.sqrt(max(est * (1.0 - est), 1.0 / samples) / samples)
    return est, stderr


def exact_joint_hit_probability(
    times: Sequence[int],
    ball_bits: int,
    center: Fraction,
) -> Fraction:
    """Exact joint hit probability for the doubling map and a dyadic-aligned ball.

    The ball B(center, 2^-ball_bits) with center a multiple of 2^-ball_bits is
    exactly two depth-ball_bits cylinders, so the event at time k depends only
    on bits k+1 .. k+ball_bits of the expansion.  The joint probability is a
    count over all bit strings covering the union of those windows.
    """
    times = [int(t) for t in times]
    if sorted(set(times)) != times or times[0] < 0:
        raise ValueError("times must be strictly ascending and nonnegative")
    if ball_bits < 1:
        raise ValueError("ball_bits must be positive")
    c = center % 1
    j = c * (1 << ball_bits)
    if j.denominator != 1:
        raise ValueError("center must be a multiple of 2^-ball_bits")
    j = int(j)
    mask = (1 << ball_bits) - 1
    allowed = {(j - 1) & mask, j & mask}
    span = times[-1] - times[0] + ball_bits
    if span > 26:
        raise ValueError("window span too wide for exact enumeration")
    s = np.arange(1 << span, dtype=np.int64)
    ok = np.ones(s.shape, dtype=bool)
    for t in times:
        off = t - times[0]
        w = (s >> (span - off - ball_bits)) & mask
        ok &= np.isin(w, list(allowed))
    return Fraction(int(ok.sum()), 1 << span)


def _binomial_report(
    axiom: str,
    system: SystemSpec,
    tup_times: Sequence[int],
    r: int,
    est: float,
    stderr: float,
    target: float,
    samples: int,
    verdict: bool,
    note: str = "",
) -> IndepReport:
    ratio = est / target if target > 0 else math.inf
    return IndepReport(
        axiom=axiom,
        system=_system_label(system),
        r=r,
        times=tuple(int(t) for t in tup_times),
        estimate=est,
        target=target,
        ratio=ratio,
        mc_stderr=stderr,
        samples=samples,
        verdict=verdict,
        note=note,
    )


def _require_power(target: float, samples: int) -> None:
    if target * samples < 10.0:
        raise UnderpoweredError(
            f"target probability {target:.3g} needs more than {samples} samples"
        )


def _sigma_of(measure, center: Fraction, rho: float) -> float:
    pt = make_point((float(center % 1),), bits=96)
    return float(measure.ball_mass(pt, rho))


def estimate_M1(
    system: SystemSpec,
    measure,
    center: Fraction,
    schedule: RadiusSchedule,
    tup: TupleSpec,
    samples: int,
    rng: SeededRng,
    *,
    fns: Optional[SeparationFns] = None,
    ratio_tol: float = 0.15,
    channel: int = 0,
) -> IndepReport:
    """Joint hit probability of a separated tuple against the product target sigma^r.

    sigma is the single-event mass of the scale-rho_n ball under the given
    measure; the verdict passes when the estimate sits within ratio_tol of
    sigma^r after allowing 3 binomial standard errors.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    fns = fns if fns is not None else SeparationFns(r=tup.r)
    if not tup.is_separated(fns):
        raise ValueError("tuple is not s(n)-separated; use estimate_M2")
    rho = schedule.radius_at(tup.n)
    sigma = _sigma_of(measure, center, rho)
    target = sigma**tup.r
    _require_power(target, samples)
    est, stderr = joint_hit_probability_mc(
        system, rng, tup.ks, center, [Fraction(rho)] * tup.r, samples, channel=channel
    )
    verdict = abs(est - target) <= ratio_tol * target + 3.0 * stderr
    return _binomial_report("M1", system, tup.ks, tup.r, est, stderr, target, samples, verdict)


def estimate_M2(
    system: SystemSpec,
    measure,
    center: Fraction,
    schedule: RadiusSchedule,
    tup: TupleSpec,
    samples: int,
    rng: SeededRng,
    *,
    fns: Optional[SeparationFns] = None,
    surrogate_factor: float = 1e-2,
    channel: int = 0,
) -> IndepReport:
    """Joint hit probability of a clustered tuple against the collapse bound.

    For a tuple with separation index m < r the joint probability must fall
    well below sigma^m; the desk-scale surrogate bound is
    surrogate_factor * sigma^m, checked one-sidedly with 3 standard errors.
    Zero observed events pass: the bound is an upper bound, so the check
    stays sound at counts the budget cannot resolve.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    fns = fns if fns is not None else SeparationFns(r=tup.r)
    m = tup.separation(fns)
    if m >= tup.r:
        raise ValueError("tuple is separated; use estimate_M1")
    rho = schedule.radius_at(tup.n)
    sigma = _sigma_of(measure, center, rho)
    target = surrogate_factor * sigma**m
    est, stderr = joint_hit_probability_mc(
        system, rng, tup.ks, center, [Fraction(rho)] * tup.r, samples, channel=channel
    )
    verdict = est <= target + 3.0 * stderr
    note = f"separation_index={m}"
    return _binomial_report(
        "M2", system, tup.ks, tup.r, est, stderr, target, samples, verdict, note
    )


def estimate_M3(
    system: SystemSpec,
    measure,
    center: Fraction,
    schedule: RadiusSchedule,
    scale_lo: int,
    scale_hi: int,
    times_lo: Sequence[int],
    times_hi: Sequence[int],
    samples: int,
    rng: SeededRng,
    *,
    fns: Optional[SeparationFns] = None,
    min_scale_gap: int = 4,
    ratio_tol: float = 0.2,
    channel: int = 0,
) -> IndepReport:
    """Cross-scale joint probability against the product of per-scale targets.

    Times in times_lo hit at radius rho(2^scale_lo), times in times_hi at
    radius rho(2^scale_hi); the tuples must be shat-separated within their
    scales, the first hi time must trail the last lo time by
    shat(2^(scale_hi+1)), and the scales must differ by at least
    min_scale_gap.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    if scale_hi - scale_lo < min_scale_gap:
        raise ValueError(f"scale gap must be at least {min_scale_gap}")
    r_lo, r_hi = len(times_lo), len(times_hi)
    fns = fns if fns is not None else SeparationFns(r=max(r_lo, r_hi))
    if separation_index(tuple(times_lo), fns.shat(1 << (scale_lo + 1))) != r_lo:
        raise ValueError("low-scale tuple is not shat-separated")
    if separation_index(tuple(times_hi), fns.shat(1 << (scale_hi + 1))) != r_hi:
        raise ValueError("high-scale tuple is not shat-separated")
    if times_hi[0] - times_lo[-1] < fns.shat(1 << (scale_hi + 1)):
        raise ValueError("cross-scale gap below shat threshold")
    rho_lo = schedule.radius_at(1 << scale_lo)
    rho_hi = schedule.radius_at(1 << scale_hi)
    target = _sigma_of(measure, center, rho_lo) ** r_lo * _sigma_of(measure, center, rho_hi) ** r_hi
    _require_power(target, samples)
    times = list(times_lo) + list(times_hi)
    rhos = [Fraction(rho_lo)] * r_lo + [Fraction(rho_hi)] * r_hi
    est, stderr = joint_hit_probability_mc(
        system, rng, times, center, rhos, samples, channel=channel
    )
    verdict = abs(est - target) <= ratio_tol * target + 3.0 * stderr
    note = f"scales=({scale_lo},{scale_hi})"
    return _binomial_report(
        "M3", system, times, r_lo + r_hi, est, stderr, target, samples, verdict, note
    )


def em_defect_fourier(modes: Sequence[int], times: Sequence[int]) -> float:
    """Exact correlation defect for products of modes e(m_j 2^(k_j) x) under doubling.

    The joint integral is 1 when sum_j m_j 2^(k_j) vanishes as an integer
    and 0 otherwise; the product of marginals is 1 only when every mode is 0.
    All bookkeeping is integer-exact, so the returned defect is exact.
    """
    if len(modes) != len(times):
        raise ValueError("one mode per time required")
    ts = [int(t) for t in times]
    if sorted(set(ts)) != ts or (ts and ts[0] < 0):
        raise ValueError("times must be strictly ascending and nonnegative")
    total = sum(int(m) << t for m, t in zip(modes, ts))
    joint = 1.0 if total == 0 else 0.0
    product = 1.0 if all(int(m) == 0 for m in modes) else 0.0
    return abs(joint - product)


def estimate_EMr(
    system: SystemSpec,
    observables: Sequence[Callable[[np.ndarray], np.ndarray]],
    times: Sequence[int],
    samples: int,
    rng: SeededRng,
    *,
    defect_tol: float = 1e-3,
    channel: int = 0,
) -> IndepReport:
    """Monte-Carlo correlation defect |E prod A_j(x_{k_j}) - prod E A_j| for observables.

    Observables are vectorized callables on float orbit points in [0, 1).
    Restricted to the doubling map, where the bit-window fast path makes
    million-sample budgets cheap; points carry 64 bits, ample for Lipschitz
    observables with O(1) constants.
    """
    if not (isinstance(system, LinearExpanding) and system.branch_count == 2 and system.dim == 1):
        raise ValueError("EM-r Monte Carlo is implemented for the doubling map")
    if len(observables) != len(times):
        raise ValueError("one observable per time required")
    ts = [int(t) for t in times]
    if sorted(set(ts)) != ts or ts[0] < 1:
        raise ValueError("times must be strictly ascending and positive")
    batch = BitOrbitBatch.sample(rng, np.arange(samples), n_steps=max(ts), channel=channel)
    w = batch.window_at(ts)
    pts = w.astype(np.float64) * 2.0**-64
    vals = np.stack([np.asarray(obs(pts[:, j]), dtype=np.float64) for j, obs in enumerate(observables)], axis=1)
    prod = vals.prod(axis=1)
    joint = float(prod.mean())
    joint_se = float(prod.std(ddof=1) / math.sqrt(samples))
    means = vals.mean(axis=0)
    target = float(np.prod(means))
    # first-order propagation of per-marginal error into the product
    se_prop = joint_se
    for j in range(vals.shape[1]):
        other = float(np.prod(np.delete(means, j)))
        se_prop += abs(other) * float(vals[:, j].std(ddof=1) / math.sqrt(samples))
    defect = abs(joint - target)
    verdict = defect <= defect_tol + 3.0 * se_prop
    return IndepReport(
        axiom=f"EM{len(ts)}",
        system=_system_label(system),
        r=len(ts),
        times=tuple(ts),
        estimate=joint,
        target=target,
        ratio=joint / target if target != 0 else math.inf,
        mc_stderr=se_prop,
        samples=samples,
        verdict=verdict,
        note=f"defect={defect:.3g}",
    )


@dataclass(frozen=True)
class RecurrenceRow:
    rho: float
    k: int
    ratio: float
    exact: bool


def _overlap(a0: Fraction, alen: Fraction, b0: Fraction, blen: Fraction) -> Fraction:
    lo = max(a0, b0)
    hi = min(a0 + alen, b0 + blen)
    return max(Fraction(0), hi - lo)


def _circle_arcs(start: Fraction, length: Fraction) -> list[tuple[Fraction, Fraction]]:
    start %= 1
    if start + length <= 1:
        return [(start, length)]
    return [(start, 1 - start), (Fraction(0), start + length - 1)]


def recurrence_overlap_exact(branches: int, x: Fraction, rho: Fraction, k: int) -> Fraction:
    """mu(B intersect f^-k B) / mu(B) for f = branches * x mod 1, B = B(x, rho), exactly.

    Decomposes B into full depth-k cylinders plus at most two partial end
    pieces per arc; each full cylinder maps onto the circle, each partial
    piece affinely onto a short arc, so the overlap is a finite sum of
    rational interval intersections whatever k is.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if rho <= 0:
        raise ValueError("rho must be positive")
    length = 2 * rho
    if length >= 1:
        return Fraction(1)
    arcs = _circle_arcs(x - rho, length)
    scale = branches**k
    total = Fraction(0)
    for u0, ulen in arcs:
        u, v = u0, u0 + ulen
        j_first = math.floor(u * scale) + 1
        j_last = math.ceil(v * scale) - 1
        if j_first > j_last:
            pieces = [(u, v)]
        else:
            # interior grid points; the cylinders between them are full
            total += (j_last - j_first) * Fraction(length, scale)
            pieces = [
                (u, Fraction(j_first, scale)),
                (Fraction(j_last, scale), v),
            ]
        for p, q in pieces:
            if q <= p:
                continue
            img0 = (p * scale) % 1
            imglen = (q - p) * scale
            for t0, tlen in arcs:
                total += Fraction(1, scale) * _overlap(img0, imglen, t0, tlen)
    return total / length


def slow_recurrence_profile(
    system: SystemSpec,
    x: Fraction,
    rhos: Sequence[Fraction],
    ks: Sequence[int],
    *,
    rng: Optional[SeededRng] = None,
    samples: int = 100_000,
    bits: int = 256,
    channel: int = 9,
) -> list[RecurrenceRow]:
    """Short-time return mass mu(B(x,rho) intersect f^-k B(x,rho)) / mu(B(x,rho)).

    Exact rational arithmetic for linear expanding maps; Monte Carlo under the
    invariant measure otherwise.  Depths are capped at
    RECURRENCE_DEPTH_FACTOR * |ln rho| since beyond the mixing time the
    profile is flat at mu(B).
    """
    rows: list[RecurrenceRow] = []
    for rho in rhos:
        rho = Fraction(rho)
        if rho <= 0 or rho >= Fraction(1, 2):
            raise ValueError("rho must lie in (0, 1/2)")
        k_cap = RECURRENCE_DEPTH_FACTOR * abs(math.log(float(rho)))
        for k in ks:
            if k < 1:
                raise ValueError("k must be positive")
            if k > k_cap:
                raise ValueError(f"k={k} beyond the mixing-time cap {k_cap:.0f} for rho={rho}")
            if isinstance(system, LinearExpanding) and system.dim == 1:
                ratio = recurrence_overlap_exact(system.branch_count, x, rho, k)
                rows.append(RecurrenceRow(rho=float(rho), k=k, ratio=float(ratio), exact=True))
                continue
            if rng is None:
                raise ValueError("Monte Carlo recurrence needs an rng")
            hit0 = 0
            hitk = 0
            for i in range(samples):
                sub = rng.child((channel << 48) | i)
                p0 = sample_initial(system, sub, bits=bits)
                x0 = Fraction(p0.coords[0], 1 << p0.bits)
                if _wrapped_fraction_dist(x0, x) > rho:
                    continue
                hit0 += 1
                pk = p0
                for p in orbit_stream(system, p0, k):
                    pk = p
                xk = Fraction(pk.coords[0], 1 << pk.bits)
                if _wrapped_fraction_dist(xk, x) <= rho:
                    hitk += 1
            ratio_f = hitk / hit0 if hit0 else math.nan
            rows.append(RecurrenceRow(rho=float(rho), k=k, ratio=ratio_f, exact=False))
    return rows
