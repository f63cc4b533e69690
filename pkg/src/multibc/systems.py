"""Torus dynamical systems with exact or faithfully rounded stepping.

Three families:

* ``LinearExpanding(k)``: x -> k x mod 1 per coordinate.  Exact on fixed-point
  coordinates (an integer multiply and mask), consuming ceil(log2 k) bits of
  resolution per step.
* ``ConjugatedExpanding``: h o (k x) o h^{-1} for the analytic circle
  diffeomorphism h(x) = x + a sin(2 pi x) / (2 pi), 0 <= a < 1.  Smooth,
  exponentially mixing for its invariant measure h_* Lebesgue, and with a
  genuinely non-constant invariant density, which is what makes mixed limit
  laws visible.
* ``ToralTranslation``: x -> x + alpha mod 1.  An exact isometry; zero
  mixing.  Serves as the negative control for independence properties.

Single-point stepping on ``ConjugatedExpanding`` evaluates h and h^{-1} with
mpmath at a working precision comfortably above the point's resolution and
rounds to nearest once; ``orbit_stream`` instead conjugates the exact linear
orbit so the rounding error per emitted point stays at a couple of ulps no
matter how long the orbit is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union

import mpmath
import numpy as np

from .precision import (
    DEFAULT_POLICY,
    PrecisionPolicy,
    SeededRng,
    TorusPoint,
    uniform_point,
)

__all__ = [
    "DiffeoSpec",
    "LinearExpanding",
    "ConjugatedExpanding",
    "ToralTranslation",
    "SystemSpec",
    "step",
    "orbit_stream",
    "sample_initial",
    "invariant_cdf",
    "golden_rotation",
    "random_rotation",
]


@dataclass(frozen=True)
class DiffeoSpec:
    """Circle diffeomorphism h(x) = x + a sin(2 pi x) / (2 pi).

    h fixes 0, is orientation preserving, and h'(x) = 1 + a cos(2 pi x) stays
    in [1 - a, 1 + a], so amplitudes below 1 give a bi-Lipschitz conjugacy.
    Amplitudes are capped at 0.99 to keep h' bounded away from zero.
    """

    amplitude: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.amplitude < 0.99:
            raise ValueError("amplitude must lie in [0, 0.99)")

    # float64 paths, vectorized ------------------------------------------------

    def h(self, x):
        a = self.amplitude
        return np.mod(x + a * np.sin(2.0 * np.pi * x) / (2.0 * np.pi), 1.0)

    def h_prime(self, x):
        return 1.0 + self.amplitude * np.cos(2.0 * np.pi * x)

    def h_inv(self, y):
        """Newton inversion of h on [0, 1); float64, vectorized."""
        y = np.asarray(y, dtype=np.float64)
        u = y.copy()
        a = self.amplitude
        for _ in range(60):
            f = u + a * np.sin(2.0 * np.pi * u) / (2.0 * np.pi) - y
            df = 1.0 + a * np.cos(2.0 * np.pi * u)
            du = f / df
            u = u - np.clip(du, -0.25, 0.25)
            if np.max(np.abs(du)) < 1e-15:
                break
        return np.mod(u, 1.0)

    # fixed-point paths, faithfully rounded ------------------------------------

    def _workdps(self, bits: int) -> int:
        return int((bits + 96) * 0.3011) + 10

    def h_fixed(self, v: int, bits: int) -> int:
        """h(v / 2^bits) rounded to nearest at B bits (ties toward even)."""
        with mpmath.workdps(self._workdps(bits)):
            x = mpmath.ldexp(mpmath.mpf(v), -bits)
            val = x + self.amplitude * mpmath.sin(2 * mpmath.pi * x) / (2 * mpmath.pi)
            val = val - mpmath.floor(val)
            out = int(mpmath.nint(mpmath.ldexp(val, bits)))
        return out % (1 << bits)

    def h_inv_fixed(self, w: int, bits: int) -> int:
        """h^{-1}(w / 2^bits) rounded to nearest at B bits."""
        with mpmath.workdps(self._workdps(bits)):
            y = mpmath.ldexp(mpmath.mpf(w), -bits)
            a = mpmath.mpf(self.amplitude)
            two_pi = 2 * mpmath.pi
            lo, hi = mpmath.mpf(0), mpmath.mpf(1)
            u = y
            for _ in range(bits + 80):
                f = u + a * mpmath.sin(two_pi * u) / two_pi - y
                if f > 0:
                    hi = u
                else:
                    lo = u
                df = 1 + a * mpmath.cos(two_pi * u)
                nxt = u - f / df
                if not (lo < nxt < hi):
                    nxt = (lo + hi) / 2
                if abs(nxt - u) < mpmath.ldexp(1, -(bits + 72)):
                    u = nxt
                    break
                u = nxt
            out = int(mpmath.nint(mpmath.ldexp(u, bits)))
        return out % (1 << bits)


@dataclass(frozen=True)
class LinearExpanding:
    """x -> k x mod 1 in every coordinate; Lebesgue measure is invariant."""

    branch_count: int
    dim: int = 1

    def __post_init__(self) -> None:
        if self.branch_count < 2:
            raise ValueError("branch_count must be at least 2")
        if self.dim < 1:
            raise ValueError("dim must be positive")

    @property
    def step_cost_bits(self) -> int:
        return (self.branch_count - 1).bit_length()


@dataclass(frozen=True)
class ConjugatedExpanding:
    """h o (k x mod 1) o h^{-1} on the circle; h_* Lebesgue is invariant."""

    branch_count: int
    diffeo: DiffeoSpec

    def __post_init__(self) -> None:
        if self.branch_count < 2:
            raise ValueError("branch_count must be at least 2")

    @property
    def dim(self) -> int:
        return 1

    @property
    def step_cost_bits(self) -> int:
        return (self.branch_count - 1).bit_length()

    def gamma(self, z):
        """Scaling constant of the invariant measure at z: mu(B(z, rho)) ~ gamma(z) rho.

        The invariant density is w(z) = 1 / h'(h^{-1}(z)) and balls in the max
        metric on the circle have length 2 rho, so gamma(z) = 2 w(z).
        """
        return 2.0 / self.h_prime_at_preimage(z)

    def h_prime_at_preimage(self, z):
        return self.diffeo.h_prime(self.diffeo.h_inv(z))


@dataclass(frozen=True)
class ToralTranslation:
    """x -> x + alpha mod 1; exact isometry, Lebesgue invariant."""

    alpha: TorusPoint

    @property
    def dim(self) -> int:
        return self.alpha.dim

    @property
    def step_cost_bits(self) -> int:
        return 0


SystemSpec = Union[LinearExpanding, ConjugatedExpanding, ToralTranslation]


def golden_rotation(bits: int = 256) -> ToralTranslation:
    """Rotation by the golden mean fractional part (sqrt(5) - 1) / 2, floor-quantized.

    Badly approximable with the largest possible constant:
    liminf k ||k alpha|| = 1/sqrt(5), and inf over k >= 1 is alpha^2 ~ 0.382.
    """
    root = math.isqrt(5 << (2 * bits))
    coord = (root - (1 << bits)) >> 1
    return ToralTranslation(alpha=TorusPoint(coords=(coord,), bits=bits))


def random_rotation(rng: SeededRng, dim: int = 1, bits: int = 256) -> ToralTranslation:
    """Rotation with alpha drawn uniformly at the given resolution."""
    return ToralTranslation(alpha=uniform_point(rng, dim=dim, bits=bits))


def step(system: SystemSpec, x: TorusPoint, policy: PrecisionPolicy = DEFAULT_POLICY) -> TorusPoint:
    """One application of the map, exact or faithfully rounded; checks the bit budget."""
    if isinstance(system, LinearExpanding):
        policy.check_spend(x, system.step_cost_bits)
        mask = (1 << x.bits) - 1
        k = system.branch_count
        coords = tuple((c * k) & mask for c in x.coords)
        return TorusPoint(coords=coords, bits=x.bits, spent_bits=x.spent_bits + system.step_cost_bits)
    if isinstance(system, ToralTranslation):
        if system.alpha.bits != x.bits:
            raise ValueError("alpha resolution must match the point")
        if system.alpha.dim != x.dim:
            raise ValueError("alpha dimension must match the point")
        mask = (1 << x.bits) - 1
        coords = tuple((c + a) & mask for c, a in zip(x.coords, system.alpha.coords))
        return TorusPoint(coords=coords, bits=x.bits, spent_bits=x.spent_bits)
    if isinstance(system, ConjugatedExpanding):
        policy.check_spend(x, system.step_cost_bits)
        bits = x.bits
        u = system.diffeo.h_inv_fixed(x.coords[0], bits)
        u_next = (u * system.branch_count) % (1 << bits)
        y = system.diffeo.h_fixed(u_next, bits)
        return TorusPoint(coords=(y,), bits=bits, spent_bits=x.spent_bits + system.step_cost_bits)
    raise TypeError(f"unknown system {system!r}")


def orbit_stream(
    system: SystemSpec,
    x0: TorusPoint,
    n_steps: int,
    policy: PrecisionPolicy = DEFAULT_POLICY,
) -> Iterator[TorusPoint]:
    """Lazily yield f(x0), f^2(x0), ..., f^n(x0); constant memory.

    For ``ConjugatedExpanding`` the orbit is generated by conjugating the
    exact linear orbit of u0 = h^{-1}(x0), so each emitted point carries a
    bounded rounding error independent of its index.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if isinstance(system, ConjugatedExpanding):
        bits = x0.bits
        mask = (1 << bits) - 1
        u = system.diffeo.h_inv_fixed(x0.coords[0], bits)
        spent = x0.spent_bits
        cost = system.step_cost_bits
        k = system.branch_count
        for _ in range(n_steps):
            policy.check_spend(TorusPoint((u,), bits, spent), cost)
            u = (u * k) & mask
            spent += cost
            yield TorusPoint(coords=(system.diffeo.h_fixed(u, bits),), bits=bits, spent_bits=spent)
        return
    x = x0
    for _ in range(n_steps):
        x = step(system, x, policy)
        yield x


def sample_initial(system: SystemSpec, rng: SeededRng, bits: int) -> TorusPoint:
    """Draw an initial point from the system's invariant measure.

    Lebesgue systems sample uniformly; the conjugated family pushes a uniform
    point through h, which is exactly the invariant measure h_* Lebesgue.
    """
    if isinstance(system, ConjugatedExpanding):
        u = uniform_point(rng, dim=1, bits=bits)
        y = system.diffeo.h_fixed(u.coords[0], bits)
        return TorusPoint(coords=(y,), bits=bits)
    dim = system.dim
    return uniform_point(rng, dim=dim, bits=bits)


def invariant_cdf(system: SystemSpec, t):
    """CDF of one coordinate of the invariant measure, for goodness-of-fit tests."""
    t = np.asarray(t, dtype=np.float64)
    if isinstance(system, ConjugatedExpanding):
        return system.diffeo.h_inv(np.clip(t, 0.0, 1.0))
    return np.clip(t, 0.0, 1.0)
