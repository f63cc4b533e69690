"""Hit counting, r-fold nearest approaches, and dyadic-scale scans.

Everything here consumes a lazy orbit stream once and keeps bounded state:
counts are integers, r-th minima live in a max-heap of size r, and the
dyadic scan keeps one record per hit whose distance is small enough to
matter at some dyadic scale.

Conventions shared with the limit theory:

* Hits are counted at times 1 <= k <= n; the time-0 point is never a hit.
* The separation index of a tuple k_1 < ... < k_r counts the gaps
  k_{j+1} - k_j that reach the threshold, with k_0 = 0 prepended, so a tuple
  whose first hit comes too early is already penalized.
* Block m of the dyadic scan looks at times in (2^m, 2^(m+1)]; the
  existence flag at the coarse radius rho_{2^m} uses all times up to
  2^(m+1), while the separated flag uses the fine radius rho_{2^(m+1)}.
  The radius asymmetry is deliberate: together the two flags sandwich the
  limsup behaviour of r-fold hits between two Borel-Cantelli series.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Optional, Sequence

from .precision import TorusPoint, torus_distance_scaled
from .targets import RadiusSchedule, TargetFamily, effective_radius, reference_point

__all__ = [
    "HitRecord",
    "SeparationFns",
    "DyadicBlockRow",
    "DyadicScan",
    "iter_distances",
    "count_hits",
    "collect_hits",
    "running_max",
    "rth_minima",
    "separation_index",
    "max_separated_count",
    "dyadic_scan",
    "series_terms",
    "series_partial_sums",
    "series_verdict",
    "multilog_statistic",
]


@dataclass(frozen=True)
class HitRecord:
    time: int
    distance: float


@dataclass(frozen=True)
class SeparationFns:
    """Gap thresholds: polylog s(n) = (ln n)^2 and linear shat(n) = eps * n.

    eps must stay below (1 - q) / (2 r) so that r disjoint shat-gaps fit in
    the top-q fraction of a block.
    """

    eps: float = 0.01
    q: float = 0.5
    r: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.r < 1:
            raise ValueError("r must be positive")
        if not 0 < self.eps < (1.0 - self.q) / (2.0 * self.r):
            raise ValueError("eps must lie in (0, (1-q)/(2r))")

    def s(self, n: int) -> float:
        if n < 3:
            raise ValueError("n must be at least 3")
        return math.log(n) ** 2

    def shat(self, n: int) -> float:
        if n < 3:
            raise ValueError("n must be at least 3")
        return self.eps * n


def iter_distances(
    orbit: Iterable[TorusPoint],
    target: TargetFamily,
    *,
    x_ref: Optional[TorusPoint] = None,
) -> Iterator[tuple[int, int, int]]:
    """Yield (time, scaled_distance, bits) along the orbit, times starting at 1.

    The scaled distance is the exact integer 2^bits * d(ref, point), so any
    later threshold comparison can be done exactly.
    """
    ref = None
    for k, p in enumerate(orbit, start=1):
        if ref is None:
            ref = reference_point(target, x_ref)
            if ref.bits != p.bits:
                raise ValueError("reference and orbit resolution differ")
        yield k, torus_distance_scaled(ref, p), p.bits


def _scaled_threshold(r_eff: float, bits: int) -> Fraction:
    return Fraction(r_eff) * (1 << bits)


def count_hits(
    orbit: Iterable[TorusPoint],
    target: TargetFamily,
    rho: float,
    n: int,
    *,
    x_ref: Optional[TorusPoint] = None,
    gamma_value: Optional[float] = None,
) -> int:
    """Number of times 1..n the orbit enters the scale-rho target; exact comparisons."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    count = 0
    thr: Optional[Fraction] = None
    for k, scaled, bits in iter_distances(orbit, target, x_ref=x_ref):
        if k > n:
            break
        if thr is None:
            ref = reference_point(target, x_ref)
            r_eff = effective_radius(target, rho, gamma_value=gamma_value, dim=ref.dim)
            thr = _scaled_threshold(r_eff, bits)
        if scaled * thr.denominator <= thr.numerator:
            count += 1
    return count


def collect_hits(
    orbit: Iterable[TorusPoint],
    target: TargetFamily,
    rho: float,
    n: int,
    *,
    x_ref: Optional[TorusPoint] = None,
    gamma_value: Optional[float] = None,
) -> list[HitRecord]:
    """All hit times 1..n with their distances; same exact comparison as count_hits."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out: list[HitRecord] = []
    thr: Optional[Fraction] = None
    for k, scaled, bits in iter_distances(orbit, target, x_ref=x_ref):
        if k > n:
            break
        if thr is None:
            ref = reference_point(target, x_ref)
            r_eff = effective_radius(target, rho, gamma_value=gamma_value, dim=ref.dim)
            thr = _scaled_threshold(r_eff, bits)
        if scaled * thr.denominator <= thr.numerator:
            out.append(HitRecord(time=k, distance=scaled / (1 << bits)))
    return out


def rth_minima(
    orbit: Iterable[TorusPoint],
    target: TargetFamily,
    n: int,
    r_max: int,
    *,
    x_ref: Optional[TorusPoint] = None,
    checkpoints: Optional[Sequence[int]] = None,
) -> dict[int, list[float]]:
    """Sorted r_max smallest target distances among times 1..checkpoint.

    Streams once with a bounded max-heap; returns, per checkpoint, the list
    [d^(1), ..., d^(r_max)] padded with inf when fewer points were seen.
    """
    if r_max < 1:
        raise ValueError("r_max must be positive")
    cps = sorted(set(checkpoints)) if checkpoints is not None else [n]
    if any(c < 1 or c > n for c in cps):
        raise ValueError("checkpoints must lie in 1..n")
    heap: list[int] = []  # negated scaled distances, size <= r_max
    out: dict[int, list[float]] = {}
    cp_iter = iter(cps)
    next_cp = next(cp_iter)
    bits_seen = None

    def snapshot(bits) -> list[float]:
        vals = sorted(-h for h in heap)
        scale = 1 << bits if bits is not None else 1
        res = [v / scale for v in vals]
        res += [math.inf] * (r_max - len(res))
        return res

    k_last = 0
    for k, scaled, bits in iter_distances(orbit, target, x_ref=x_ref):
        if k > n:
            break
        bits_seen = bits
        while k > next_cp:
            out[next_cp] = snapshot(bits_seen)
            try:
                next_cp = next(cp_iter)
            except StopIteration:
                return out
        if len(heap) < r_max:
            heapq.heappush(heap, -scaled)
        elif -heap[0] > scaled:
            heapq.heapreplace(heap, -scaled)
        k_last = k
    while True:
        out[next_cp] = snapshot(bits_seen)
        try:
            next_cp = next(cp_iter)
        except StopIteration:
            break
    return out


def separation_index(times: Sequence[int], threshold: float) -> int:
    """Card{j in 0..r-1 : k_{j+1} - k_j >= threshold} with k_0 = 0.

    Counts large gaps in the hit tuple, origin gap included.
    """
    ks = list(times)
    if any(b <= a for a, b in zip(ks, ks[1:])) or (ks and ks[0] <= 0):
        raise ValueError("times must be strictly increasing positive integers")
    prev = 0
    cnt = 0
    for k in ks:
        if k - prev >= threshold:
            cnt += 1
        prev = k
    return cnt


def max_separated_count(times: Sequence[int], threshold: float) -> int:
    """Largest subset of hit times whose separation index equals its size.

    Greedy earliest-first selection is optimal because gaps only need to
    reach a fixed threshold.
    """
    prev = 0
    cnt = 0
    for k in sorted(times):
        if k - prev >= threshold:
            cnt += 1
            prev = k
    return cnt


@dataclass(frozen=True)
class DyadicBlockRow:
    m: int
    n_hits_coarse: int  # times <= 2^(m+1), radius rho_{2^m}
    exists_flag: bool  # n_hits_coarse >= r
    n_hits_block_fine: int  # times in (2^m, 2^(m+1)], radius rho_{2^(m+1)}
    separated_flag: bool  # an shat-separated r-tuple exists among the fine hits
    series_term: float  # (2^m sigma(rho_{2^m}))^r


@dataclass
class DyadicScan:
    r: int
    rows: list[DyadicBlockRow] = field(default_factory=list)

    @property
    def partial_sums(self) -> list[float]:
        out, acc = [], 0.0
        for row in self.rows:
            acc += row.series_term
            out.append(acc)
        return out


def dyadic_scan(
    orbit: Iterable[TorusPoint],
    target: TargetFamily,
    schedule: RadiusSchedule,
    sigma_fn: Callable[[float], float],
    *,
    r: int,
    m_lo: int,
    m_hi: int,
    sep: Optional[SeparationFns] = None,
    x_ref: Optional[TorusPoint] = None,
    gamma_value: Optional[float] = None,
) -> DyadicScan:
    """One streaming pass computing, per block m, the two r-fold hit flags.

    Keeps only hits whose distance is at most the largest radius at which the
    hit time can still matter, i.e. rho at the first dyadic scale >= k.
    """
    if sep is None:
        sep = SeparationFns(r=r)
    if m_lo < max(2, int(math.log2(schedule.n_min)) + 1) or m_hi < m_lo:
        raise ValueError("bad block range")
    n_max = 1 << (m_hi + 1)
    ref_dim = reference_point(target, x_ref).dim

    def thr_for(n: int, bits: int) -> Fraction:
        r_eff = effective_radius(target, schedule.radius_at(n), gamma_value=gamma_value, dim=ref_dim)
        return _scaled_threshold(r_eff, bits)

    kept_times: list[int] = []
    kept_scaled: list[int] = []
    bits_seen = None
    keep_thr: Optional[Fraction] = None
    keep_scale_exp = None
    for k, scaled, bits in iter_distances(orbit, target, x_ref=x_ref):
        if k > n_max:
            break
        bits_seen = bits
        # time k first matters in block m = ceil(log2 k) - 1, whose coarse
        # radius rho_{2^m} is the largest ever applied to this time
        exp = max(m_lo, math.ceil(math.log2(max(k, 2))) - 1)
        if exp != keep_scale_exp:
            keep_scale_exp = exp
            keep_thr = thr_for(1 << exp, bits)
        if scaled * keep_thr.denominator <= keep_thr.numerator:
            kept_times.append(k)
            kept_scaled.append(scaled)
    times = kept_times
    dists = kept_scaled  # python ints, exact

    scan = DyadicScan(r=r)
    for m in range(m_lo, m_hi + 1):
        n_coarse = 1 << m
        n_fine = 1 << (m + 1)
        thr_c = thr_for(n_coarse, bits_seen) if bits_seen is not None else Fraction(0)
        thr_f = thr_for(n_fine, bits_seen) if bits_seen is not None else Fraction(0)
        hits_coarse = [
            t
            for t, sc in zip(times, dists)
            if t <= n_fine and sc * thr_c.denominator <= thr_c.numerator
        ]
        hits_fine = [
            int(t)
            for t, sc in zip(times, dists)
            if n_coarse < t <= n_fine and sc * thr_f.denominator <= thr_f.numerator
        ]
        shat = sep.shat(n_fine)
        sep_count = max_separated_count(hits_fine, shat)
        sigma_c = sigma_fn(schedule.radius_at(n_coarse))
        scan.rows.append(
            DyadicBlockRow(
                m=m,
                n_hits_coarse=len(hits_coarse),
                exists_flag=len(hits_coarse) >= r,
                n_hits_block_fine=len(hits_fine),
                separated_flag=sep_count >= r,
                series_term=(n_coarse * sigma_c) ** r,
            )
        )
    return scan


# --- the dichotomy series ----------------------------------------------------


def series_terms(
    schedule: RadiusSchedule,
    sigma_fn: Callable[[float], float],
    r: int,
    j_lo: int,
    j_hi: int,
) -> list[float]:
    """Terms (2^j sigma(rho_{2^j}))^r for j in [j_lo, j_hi]."""
    if r < 1:
        raise ValueError("r must be positive")
    return [(2.0**j * sigma_fn(schedule.radius_at(1 << j))) ** r for j in range(j_lo, j_hi + 1)]


def series_partial_sums(terms: Sequence[float]) -> list[float]:
    out, acc = [], 0.0
    for t in terms:
        acc += t
        out.append(acc)
    return out


def series_verdict(schedule: RadiusSchedule, r: int) -> str:
    """'diverging' iff r * s * d_eff <= 1 for sigma(rho) ~ rho^d_eff.

    With rho_n = c n^(-1/d_eff) (ln n)^(-s), the j-th term is asymptotically
    proportional to j^(-r*s*d_eff), so the series diverges exactly when that
    exponent is <= 1.  Decided analytically; partial sums converge too slowly
    to decide divergence numerically near the threshold.
    """
    exponent = r * schedule.s * schedule.d_eff
    return "diverging" if exponent <= 1.0 else "converging"


# --- normalized log-law statistic ---------------------------------------------


def multilog_statistic(
    minima_by_checkpoint: dict[int, Sequence[float]],
    r: int,
    d_eff: float,
) -> dict[int, float]:
    """(|ln d_n^(r)| - (1/d_eff) ln n) / ln ln n per checkpoint n.

    Exact hits (zero distance) map to +inf, the correct sentinel for a
    statistic tracking how unusually close the orbit has come.
    """
    out: dict[int, float] = {}
    for n, minima in minima_by_checkpoint.items():
        if n < 3 or math.log(n) <= 1.0:
            raise ValueError("checkpoint too small for ln ln normalization")
        d = minima[r - 1]
        if d == 0.0:
            out[n] = math.inf
        elif math.isinf(d):
            out[n] = -math.inf
        else:
            out[n] = (-math.log(d) - math.log(n) / d_eff) / math.log(math.log(n))
    return out


def running_max(stats: dict[int, float]) -> list[tuple[int, float]]:
    """Running maximum over checkpoints, skipping +inf sentinels.

    An exact hit produces a +inf statistic that would freeze the maximum
    forever; it carries no scaling information, so it is dropped with a
    warning and the max continues over finite values.
    """
    acc = -math.inf
    out = []
    for n in sorted(stats):
        v = stats[n]
        if v == math.inf:
            warnings.warn(
                f"exact hit at checkpoint {n}: +inf excluded from running max",
                stacklevel=2,
            )
        else:
            acc = max(acc, v)
        out.append((n, acc))
    return out
