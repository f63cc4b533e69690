"""Shrinking target families, radius schedules, and mollified indicators.

A target is a set whose indicator the hit statistics sample along orbits.
Every family here is distance-monotone: membership at scale rho is
``distance-to-reference <= effective_radius(rho)``, where the reference point
and the monotone rescaling depend on the family.  That single reduction keeps
hit counting, r-th minima, and sublevel statistics on one code path.

``RadiusSchedule`` is the scale sequence rho_n = c n^(-1/d_eff) (ln n)^(-s);
the Borel-Cantelli dichotomy for r-fold hits turns on whether
sum_j (2^j sigma(rho_{2^j}))^r diverges, which for this schedule is decided
by r*s*d_eff <= 1.

``MollifierPair`` sandwiches an indicator between Lipschitz ramps A- <= 1_target
<= A+ whose sup norm, Lipschitz constant, and measure gap are certified, the
shape multi-correlation estimates need in order to transfer from smooth
observables to indicators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .precision import TorusPoint, torus_distance, torus_distance_scaled
from .systems import ConjugatedExpanding, DiffeoSpec

__all__ = [
    "RadiusSchedule",
    "SimpleBall",
    "CompositeReturn",
    "SublevelObservable",
    "TargetFamily",
    "QuadraticMin",
    "PowerSingularity",
    "ObservableSpec",
    "LebesgueMeasure",
    "ConjugatedMeasure",
    "MollifierPair",
    "GammaEstimate",
    "effective_radius",
    "reference_point",
    "hit_test",
    "gamma_estimate",
    "mollify",
]


@dataclass(frozen=True)
class RadiusSchedule:
    """rho_n = c * n^(-1/d_eff) * (ln n)^(-s) for n >= n_min.

    d_eff is the effective dimension governing the measure of a radius-rho
    target (sigma(rho) ~ rho^d_eff); it may be fractional for Gibbs measures.
    ``poly_lower_exponent`` declares a u with rho_n >= n^-u on the working
    range, which keeps targets inside the polynomial-size regime.
    """

    c: float = 1.0
    d_eff: float = 1.0
    s: float = 0.0
    n_min: int = 3
    poly_lower_exponent: Optional[float] = None

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.d_eff <= 0:
            raise ValueError("d_eff must be positive")
        if self.s < 0:
            raise ValueError("s must be nonnegative")
        if self.n_min < 3:
            raise ValueError("n_min must be at least 3")

    def radius_at(self, n: int) -> float:
        if n < self.n_min:
            raise ValueError(f"n={n} below n_min={self.n_min}")
        return self.c * n ** (-1.0 / self.d_eff) * math.log(n) ** (-self.s)

    @property
    def u(self) -> float:
        """Polynomial lower-bound exponent: rho_n >= n^-u for large n."""
        if self.poly_lower_exponent is not None:
            return self.poly_lower_exponent
        return 1.0 / self.d_eff + max(self.s, 0.5)

    def check_poly_bound(self, n_hi: int) -> bool:
        """rho_n >= n^-u on [n_min, n_hi], checked on a log grid plus endpoints."""
        ns = sorted(set([self.n_min, n_hi] + [int(self.n_min * 2**j) for j in range(64) if self.n_min * 2**j <= n_hi]))
        return all(self.radius_at(n) >= n ** (-self.u) for n in ns)


# --- observables -------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticMin:
    """phi(y) = offset + scale * d(center, y)^2; unique minimum at the center.

    Satisfies the two-sided quadratic pinch K^-1 d^2 <= phi - phi(center) <= K d^2
    with K = max(scale, 1/scale).
    """

    center: TorusPoint
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def value(self, y: TorusPoint) -> float:
        d = torus_distance(self.center, y)
        return self.offset + self.scale * d * d

    def value_from_distance(self, d):
        return self.offset + self.scale * np.square(d)

    def min_value(self) -> float:
        return self.offset


@dataclass(frozen=True)
class PowerSingularity:
    """phi(y) = coeff / d(center, y)^power + offset with coeff < 0.

    Bounded above, unbounded below at the center; deep minima of Birkhoff
    samples correspond to close approaches to the center.
    """

    center: TorusPoint
    coeff: float
    power: float
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.coeff >= 0:
            raise ValueError("coeff must be negative")
        if self.power <= 0:
            raise ValueError("power must be positive")

    def value(self, y: TorusPoint) -> float:
        d = torus_distance(self.center, y)
        if d == 0.0:
            return -math.inf
        return self.coeff / d**self.power + self.offset

    def value_from_distance(self, d):
        d = np.asarray(d, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.where(d > 0, self.coeff / d**self.power, -np.inf) + self.offset


ObservableSpec = Union[QuadraticMin, PowerSingularity]


# --- target families ---------------------------------------------------------


@dataclass(frozen=True)
class SimpleBall:
    """Fixed-center max-metric ball of the scheduled radius."""

    center: TorusPoint


@dataclass(frozen=True)
class CompositeReturn:
    """Return target along the diagonal: hit at time k iff d(x, f^k x) <= radius.

    With ``gamma_weighted`` the radius is rho / gamma(x)^(1/d), where gamma is
    the local scaling constant of the invariant measure at the orbit start x;
    the weight is evaluated once when the orbit starts and held fixed, which
    turns the return-count law into a parameter-free Poisson(tau).  Without
    weighting the radius is rho itself and the count law is the gamma-mixture.
    """

    gamma_weighted: bool = False


@dataclass(frozen=True)
class SublevelObservable:
    """Sublevel target of an observable with a distance-monotone profile."""

    observable: ObservableSpec


TargetFamily = Union[SimpleBall, CompositeReturn, SublevelObservable]


def reference_point(target: TargetFamily, x_ref: Optional[TorusPoint]) -> TorusPoint:
    if isinstance(target, SimpleBall):
        return target.center
    if isinstance(target, CompositeReturn):
        if x_ref is None:
            raise ValueError("CompositeReturn needs the orbit start as x_ref")
        return x_ref
    if isinstance(target, SublevelObservable):
        return target.observable.center
    raise TypeError(f"unknown target {target!r}")


def effective_radius(
    target: TargetFamily,
    rho: float,
    *,
    gamma_value: Optional[float] = None,
    dim: int = 1,
) -> float:
    """Distance threshold equivalent to membership at scale rho."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if isinstance(target, SimpleBall):
        return rho
    if isinstance(target, CompositeReturn):
        if not target.gamma_weighted:
            return rho
        if gamma_value is None or gamma_value <= 0:
            raise ValueError("gamma-weighted return target needs gamma_value > 0")
        return rho / gamma_value ** (1.0 / dim)
    if isinstance(target, SublevelObservable):
        # For both observable shapes the sublevel set at scale rho is exactly
        # the distance ball of radius rho around the center.
        return rho
    raise TypeError(f"unknown target {target!r}")


def sublevel_threshold(obs: ObservableSpec, rho: float) -> float:
    """Observable value whose sublevel set equals the radius-rho ball."""
    if isinstance(obs, QuadraticMin):
        return obs.offset + obs.scale * rho * rho
    if isinstance(obs, PowerSingularity):
        if rho <= 0:
            return -math.inf
        return obs.coeff / rho**obs.power + obs.offset
    raise TypeError(f"unknown observable {obs!r}")


def hit_test(
    target: TargetFamily,
    rho: float,
    y: TorusPoint,
    *,
    x_ref: Optional[TorusPoint] = None,
    gamma_value: Optional[float] = None,
) -> bool:
    """Exact membership of y in the scale-rho target.

    The comparison distance <= effective radius is made in integer arithmetic
    on the fixed-point coordinates, so boundary cases are decided exactly.
    """
    ref = reference_point(target, x_ref)
    r_eff = effective_radius(target, rho, gamma_value=gamma_value, dim=ref.dim)
    scaled = torus_distance_scaled(ref, y)
    thr = Fraction(r_eff) * (1 << ref.bits)
    return scaled * thr.denominator <= thr.numerator


# --- measures ----------------------------------------------------------------


@dataclass(frozen=True)
class LebesgueMeasure:
    """Lebesgue on T^d; max-metric balls have mass (2 rho)^d exactly."""

    dim: int = 1

    def ball_mass(self, x: TorusPoint, rho: float) -> float:
        if rho <= 0:
            return 0.0
        return min(2.0 * rho, 1.0) ** self.dim

    def gamma(self, x: TorusPoint) -> float:
        return 2.0**self.dim


@dataclass(frozen=True)
class ConjugatedMeasure:
    """Pushforward h_* Lebesgue on the circle; density 1/h'(h^{-1}(z))."""

    diffeo: DiffeoSpec

    def ball_mass(self, x: TorusPoint, rho: float) -> float:
        if rho <= 0:
            return 0.0
        if 2 * rho >= 1:
            return 1.0
        z = x.as_floats()[0]
        lo = (z - rho) % 1.0
        hi = (z + rho) % 1.0
        ilo = float(self.diffeo.h_inv(lo))
        ihi = float(self.diffeo.h_inv(hi))
        return (ihi - ilo) % 1.0

    def gamma(self, x: TorusPoint) -> float:
        z = np.array([x.as_floats()[0]])
        return float(2.0 / self.diffeo.h_prime(self.diffeo.h_inv(z))[0])


MeasureSpec = Union[LebesgueMeasure, ConjugatedMeasure]


@dataclass
class GammaEstimate:
    value: float
    error_estimate: float
    table: list[list[float]] = field(default_factory=list)


def gamma_estimate(
    measure,
    x: TorusPoint,
    base_rho: float = 1e-3,
    levels: int = 5,
) -> GammaEstimate:
    """Richardson extrapolation of mu(B(x, rho)) / rho^d as rho -> 0.

    Assumes a first-order error expansion in rho, which holds for measures
    with a C^1 density, and estimates the remaining error from the last
    extrapolation increment.
    """
    d = getattr(measure, "dim", 1)
    f = [measure.ball_mass(x, base_rho / 2**j) / (base_rho / 2**j) ** d for j in range(levels)]
    table = [f]
    col = f
    for m in range(1, levels):
        w = 2.0**m
        col = [(w * col[i + 1] - col[i]) / (w - 1.0) for i in range(len(col) - 1)]
        table.append(col)
    err = abs(table[-1][0] - table[-2][0]) if levels >= 2 else math.inf
    return GammaEstimate(value=table[-1][0], error_estimate=err, table=table)


# --- mollifiers --------------------------------------------------------------


@dataclass(frozen=True)
class MollifierPair:
    """Lipschitz sandwich A- <= 1_target <= A+ as functions of the distance.

    The ramps transition over width ``width``; declared bounds: values in
    [0, 2], Lipschitz constant 1/width, and measure gap at most
    mu(annulus of width 2*width around the boundary sphere).
    """

    radius: float
    width: float

    def __post_init__(self) -> None:
        if self.radius <= 0 or self.width <= 0:
            raise ValueError("radius and width must be positive")
        if self.width >= self.radius:
            raise ValueError("transition width must stay below the radius")

    def upper(self, dist):
        t = np.asarray(dist, dtype=np.float64)
        return np.clip(1.0 - (t - self.radius) / self.width, 0.0, 1.0)

    def lower(self, dist):
        t = np.asarray(dist, dtype=np.float64)
        return np.clip((self.radius - t) / self.width, 0.0, 1.0)

    @property
    def lipschitz(self) -> float:
        return 1.0 / self.width

    @property
    def sup_norm(self) -> float:
        return 1.0

    def lebesgue_gap(self, dim: int = 1) -> float:
        """Exact integral of (A+ - A-) against Lebesgue on T^1; bound for d=1."""
        if dim != 1:
            raise NotImplementedError("exact gap implemented on the circle")
        return 2.0 * self.width


def mollify(rho: float, b: float = 3.0) -> MollifierPair:
    """Ramp sandwich for a radius-rho ball with transition width rho^b * (2 rho).

    Width shrinks faster than any fixed power of the target measure once
    b >= 1, so the measure gap is o(sigma(rho)^(1+eta)) with eta = 1 for balls
    under measures with bounded density.
    """
    if not 0 < rho < 0.5:
        raise ValueError("rho must lie in (0, 1/2)")
    if b < 1:
        raise ValueError("b must be at least 1")
    return MollifierPair(radius=rho, width=(rho**b) * (2.0 * rho))
