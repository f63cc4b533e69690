"""Exact fixed-point arithmetic on the torus and reproducible randomness.

Points on T^d are stored as tuples of B-bit unsigned integers; the integer v
represents the real number v / 2^B in [0, 1).  Addition, scalar multiplication
by integers, and reduction mod 1 are exact in this representation, which is
what makes long orbits of piecewise-linear expanding maps reproducible at the
bit level.  The expansion of a k-ary map consumes ceil(log2 k) bits of
resolution per step; `PrecisionPolicy` sizes B so a whole orbit stays above a
guard margin, and `step` raises `PrecisionError` instead of silently running
out of bits.

Randomness is counter-based: every stream is Philox4x64-10 (as shipped in
``numpy.random.Philox``) keyed by ``(seed, stream)``.  Streams are cheap to
derive, independent of each other, and independent of how work is partitioned
across tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Sequence, Union

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "PrecisionError",
    "PrecisionPolicy",
    "DEFAULT_POLICY",
    "TorusPoint",
    "SeededRng",
    "make_point",
    "torus_distance",
    "torus_distance_scaled",
    "uniform_point",
    "as_fraction",
]

CoordLike = Union[int, float, str, Rational]


class PrecisionError(ArithmeticError):
    """Raised when an operation would drop below the precision guard."""


@dataclass(frozen=True)
class PrecisionPolicy:
    """Sizing rule for fixed-point resolution along expanding orbits.

    ``guard_bits`` is the resolution that must remain after the last step.
    """

    guard_bits: int = 64

    def bits_for_orbit(self, n_steps: int, branch_count: int) -> int:
        """Minimal B so an n-step orbit of a k-ary expanding map keeps the guard."""
        if n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if branch_count < 2:
            raise ValueError("branch_count must be at least 2")
        per_step = (branch_count - 1).bit_length()
        return n_steps * per_step + self.guard_bits

    def check_spend(self, point: "TorusPoint", cost_bits: int) -> None:
        if point.bits - point.spent_bits - cost_bits < self.guard_bits:
            raise PrecisionError(
                f"precision budget exhausted: {point.bits} bits, "
                f"{point.spent_bits} already spent, step costs {cost_bits}, "
                f"guard is {self.guard_bits}"
            )


DEFAULT_POLICY = PrecisionPolicy()


@dataclass(frozen=True)
class TorusPoint:
    """Point on T^d with coordinates coord/2^bits in [0, 1).

    ``spent_bits`` records resolution consumed by past expanding-map steps;
    the fraction of the stored bits that is still meaningful is
    ``bits - spent_bits``.
    """

    coords: tuple[int, ...]
    bits: int
    spent_bits: int = 0

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ValueError("bits must be positive")
        if self.spent_bits < 0 or self.spent_bits > self.bits:
            raise ValueError("spent_bits out of range")
        lim = 1 << self.bits
        for c in self.coords:
            if not 0 <= c < lim:
                raise ValueError("coordinate outside [0, 2^bits)")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_floats(self) -> tuple[float, ...]:
        scale = 1 << self.bits
        return tuple(c / scale for c in self.coords)

    def as_fractions(self) -> tuple[Fraction, ...]:
        scale = 1 << self.bits
        return tuple(Fraction(c, scale) for c in self.coords)


def as_fraction(value: CoordLike) -> Fraction:
    """Exact rational view of a coordinate-like value (floats are exact dyadics)."""
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(value)


def make_point(coords: Sequence[CoordLike], bits: int) -> TorusPoint:
    """Quantize rationals in [0, 1) to a B-bit TorusPoint, rounding toward zero."""
    if bits < 1:
        raise ValueError("bits must be positive")
    ints = []
    for c in coords:
        f = as_fraction(c)
        if not 0 <= f < 1:
            raise ValueError(f"coordinate {c!r} outside [0, 1)")
        ints.append((f.numerator << bits) // f.denominator)
    return TorusPoint(coords=tuple(ints), bits=bits)


def _require_compatible(a: TorusPoint, b: TorusPoint) -> None:
    if a.bits != b.bits:
        raise ValueError(f"mixed resolutions: {a.bits} vs {b.bits} bits")
    if a.dim != b.dim:
        raise ValueError(f"mixed dimensions: {a.dim} vs {b.dim}")


def torus_distance_scaled(a: TorusPoint, b: TorusPoint) -> int:
    """Exact max-metric distance times 2^bits, as an integer in [0, 2^(bits-1)].

    Per coordinate the torus distance is min(|u - v|, 2^B - |u - v|); the
    max-metric takes the largest coordinate.  Minimizing over integer shifts
    is what the wrap-around min does.
    """
    _require_compatible(a, b)
    half = 1 << (a.bits - 1)
    full = 1 << a.bits
    best = 0
    for u, v in zip(a.coords, b.coords):
        d = u - v if u >= v else v - u
        if d > half:
            d = full - d
        if d > best:
            best = d
    return best


def torus_distance(a: TorusPoint, b: TorusPoint) -> float:
    """Max-metric torus distance in [0, 1/2], correctly rounded to float."""
    return torus_distance_scaled(a, b) / (1 << a.bits)


@dataclass(frozen=True)
class SeededRng:
    """Counter-based random stream: Philox4x64-10 keyed by (seed, stream).

    Distinct ``stream`` values give statistically independent streams under
    the same seed, so per-sample and per-task streams can be derived without
    any coordination.  The byte stream for a given (seed, stream) is a pure
    function of the key; it does not depend on platform or on how other
    streams were consumed.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must fit in 64 bits")
        if not 0 <= self.stream < 1 << 64:
            raise ValueError("stream must fit in 64 bits")

    def generator(self) -> Generator:
        return Generator(Philox(key=np.array([self.seed, self.stream], dtype=np.uint64)))

    def child(self, stream: int) -> "SeededRng":
        """Derived stream under the same seed.  Streams must not be reused."""
        return SeededRng(seed=self.seed, stream=stream)

    def random_bits(self, nbits: int) -> int:
        """nbits of raw entropy as an unsigned integer."""
        nbytes = (nbits + 7) // 8
        raw = self.generator().bytes(nbytes)
        value = int.from_bytes(raw, "big")
        excess = 8 * nbytes - nbits
        return value >> excess


def uniform_point(rng: SeededRng, dim: int, bits: int) -> TorusPoint:
    """Uniform sample on T^d at B-bit resolution.

    Consumes dim * ceil(bits/8) bytes from the stream; coordinates are drawn
    in order, each from its own contiguous byte block.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    if bits < 1:
        raise ValueError("bits must be positive")
    nbytes = (bits + 7) // 8
    raw = rng.generator().bytes(dim * nbytes)
    excess = 8 * nbytes - bits
    coords = tuple(
        int.from_bytes(raw[i * nbytes : (i + 1) * nbytes], "big") >> excess
        for i in range(dim)
    )
    return TorusPoint(coords=coords, bits=bits)
