"""Vectorized orbits for the binary expanding map.

The doubling map acts on a B-bit fixed-point number as a left shift, so the
point at time k is simply the binary expansion read from bit offset k.  An
entire orbit therefore lives inside one random bit string, and the top 64
bits of every orbit point can be extracted with a handful of numpy
operations.  That turns orbit statistics over 10^9 time steps into array
arithmetic.

Distance thresholds are decided on the 64-bit windows with a safety margin:
any comparison that lands within a few ulps of the threshold is re-decided
exactly on the full bit string with rational arithmetic.  Gray cases occur
with probability about 2^-60 per comparison, so the exact fallback keeps the
results bit-for-bit deterministic at negligible cost.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .precision import SeededRng

__all__ = [
    "BitOrbitBatch",
    "u64_of_fraction",
    "wrapped_dist_u64",
    "wrapped_dist_float",
    "decide_leq_with_fallback",
]

_MASK64 = (1 << 64) - 1
_GRAY_ULPS = 8


def u64_of_fraction(x: Fraction) -> int:
    """floor(x * 2^64) for x in [0, 1)."""
    if not 0 <= x < 1:
        raise ValueError("expected a value in [0, 1)")
    return (x.numerator << 64) // x.denominator


def wrapped_dist_u64(a, b):
    """Torus distance between u64-scaled circle points, as u64 (error < 2 ulps)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    d1 = a - b
    d2 = b - a
    return np.minimum(d1, d2)


def wrapped_dist_float(a, b):
    """Torus distance between float circle points in [0, 1)."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return np.minimum(d, 1.0 - d)


@dataclass
class BitOrbitBatch:
    """A batch of binary-map orbits stored as raw big-endian bit strings.

    Row i holds the expansion of the initial point of sample i; bit offset k
    is the orbit point at time k.  ``bits`` counts usable bits; windows may
    be requested for offsets k with k + 64 <= bits.
    """

    raw: np.ndarray  # (n_samples, n_bytes) uint8
    bits: int

    @classmethod
    def sample(
        cls,
        rng: SeededRng,
        sample_indices: np.ndarray,
        n_steps: int,
        channel: int = 0,
        guard_bits: int = 64,
    ) -> "BitOrbitBatch":
        """Draw one bit string per sample index from its own Philox stream.

        The stream for sample i is ``(channel << 48) | i``, which depends only
        on the experiment seed and the sample index, never on batching or
        worker layout.
        """
        n_bytes = (n_steps + guard_bits + 7) // 8 + 9
        rows = []
        for idx in np.asarray(sample_indices, dtype=np.int64):
            sub = rng.child((int(channel) << 48) | int(idx))
            rows.append(np.frombuffer(sub.generator().bytes(n_bytes), dtype=np.uint8))
        return cls(raw=np.vstack(rows), bits=8 * n_bytes - 8)

    @property
    def n_samples(self) -> int:
        return self.raw.shape[0]

    def windows(self, k_lo: int, k_hi: int) -> np.ndarray:
        """uint64 windows at bit offsets k_lo..k_hi inclusive, shape (samples, k_hi-k_lo+1).

        Window k holds bits k..k+63, i.e. floor(2^64 * frac(2^k x)).
        """
        if k_lo < 0 or k_hi < k_lo:
            raise ValueError("bad window range")
        if k_hi + 64 > self.bits:
            raise ValueError("window range exceeds stored bits")
        byte0 = k_lo >> 3
        raw = self.raw[:, byte0 : (k_hi >> 3) + 10]
        sw = np.lib.stride_tricks.sliding_window_view(raw, 8, axis=1)
        base = np.ascontiguousarray(sw).view(np.uint64)[..., 0]
        if sys.byteorder == "little":
            base = base.byteswap()
        ks = np.arange(k_lo, k_hi + 1, dtype=np.int64)
        j = (ks >> 3) - byte0
        s = (ks & 7).astype(np.uint64)
        nxt = raw[:, 8:][:, j].astype(np.uint64)
        return (base[:, j] << s) | (nxt >> (np.uint64(8) - s))

    def window_at(self, ks) -> np.ndarray:
        """uint64 windows at sparse bit offsets, shape (samples, len(ks)).

        Same values as ``windows`` but gathers only the bytes each offset
        touches, so cost does not grow with the offsets themselves.
        """
        ks = np.asarray(ks, dtype=np.int64)
        if ks.size and (int(ks.min()) < 0 or int(ks.max()) + 64 > self.bits):
            raise ValueError("window range exceeds stored bits")
        cols = []
        for k in ks:
            j = int(k) >> 3
            s = np.uint64(int(k) & 7)
            base = np.ascontiguousarray(self.raw[:, j : j + 8]).view(np.uint64)[:, 0]
            if sys.byteorder == "little":
                base = base.byteswap()
            nxt = self.raw[:, j + 8].astype(np.uint64)
            cols.append((base << s) | (nxt >> (np.uint64(8) - s)))
        return np.stack(cols, axis=1)

    def exact_fraction(self, row: int, k: int) -> Fraction:
        """The orbit point of sample ``row`` at time k, as an exact rational."""
        if k < 0 or k >= self.bits:
            raise ValueError("time outside stored range")
        v = int.from_bytes(self.raw[row].tobytes(), "big")
        total = 8 * self.raw.shape[1]
        rem = total - k
        return Fraction(v & ((1 << rem) - 1), 1 << rem)


def decide_leq_with_fallback(
    dist_u64: np.ndarray,
    threshold: Fraction,
    exact_dist,
) -> np.ndarray:
    """dist <= threshold, decided on u64 approximations with an exact escape hatch.

    ``dist_u64`` approximates 2^64 * dist within ``_GRAY_ULPS`` ulps.  Entries
    farther than the margin from the threshold are decided directly; the rare
    rest are re-decided by calling ``exact_dist(flat_index) -> Fraction``.
    """
    t = u64_of_fraction(threshold) if threshold < 1 else _MASK64
    d = np.asarray(dist_u64, dtype=np.uint64)
    lo = max(t - _GRAY_ULPS, 0)
    hi = min(t + _GRAY_ULPS, _MASK64)
    out = d <= np.uint64(t)
    gray = (d >= np.uint64(lo)) & (d <= np.uint64(hi))
    if np.any(gray):
        for flat in np.flatnonzero(gray.ravel()):
            out.ravel()[flat] = exact_dist(int(flat)) <= threshold
    return out
