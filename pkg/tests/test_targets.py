import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from multibc.precision import make_point, torus_distance
from multibc.systems import DiffeoSpec
from multibc.targets import (
    CompositeReturn,
    ConjugatedMeasure,
    LebesgueMeasure,
    MollifierPair,
    PowerSingularity,
    QuadraticMin,
    RadiusSchedule,
    SimpleBall,
    SublevelObservable,
    effective_radius,
    gamma_estimate,
    hit_test,
    mollify,
    reference_point,
    sublevel_threshold,
)


def test_radius_schedule_values():
    sched = RadiusSchedule(c=1.0, d_eff=1.0, s=1.0)
    assert math.isclose(sched.radius_at(16), 0.022542110013890053, rel_tol=1e-12)
    assert math.isclose(sched.radius_at(16), 0.0625 / math.log(16.0), rel_tol=1e-12)
    plain = RadiusSchedule(c=0.5, d_eff=2.0, s=0.0)
    assert plain.radius_at(100) == pytest.approx(0.05, rel=1e-12)


def test_radius_schedule_validation():
    with pytest.raises(ValueError):
        RadiusSchedule(c=0.0)
    with pytest.raises(ValueError):
        RadiusSchedule(d_eff=-1.0)
    with pytest.raises(ValueError):
        RadiusSchedule(s=-0.5)
    with pytest.raises(ValueError):
        RadiusSchedule().radius_at(2)


def test_poly_lower_bound():
    # 1/(n ln n) >= n^-2 iff n >= ln n, always true on the domain
    sched = RadiusSchedule(c=1.0, d_eff=1.0, s=1.0)
    assert sched.u == 2.0
    assert sched.check_poly_bound(10**6)
    tight = RadiusSchedule(c=1.0, d_eff=1.0, s=1.0, poly_lower_exponent=1.0)
    assert not tight.check_poly_bound(10**6)


@given(
    d=st.floats(min_value=1e-6, max_value=0.5),
    rho=st.floats(min_value=1e-6, max_value=0.4),
    scale=st.floats(min_value=0.1, max_value=10.0),
    offset=st.floats(min_value=-5.0, max_value=5.0),
)
def test_quadratic_sublevel_duality(d, rho, scale, offset):
    # membership in the sublevel set at the ball threshold == membership in the
    # ball; float rounding can flip ties, so stay off the boundary
    assume(abs(d - rho) > 1e-9 * max(d, rho))
    center = make_point([Fraction(1, 3)], bits=64)
    obs = QuadraticMin(center=center, scale=scale, offset=offset)
    thr = sublevel_threshold(obs, rho)
    assert (obs.value_from_distance(d) <= thr) == (d <= rho)


@given(
    d=st.floats(min_value=1e-6, max_value=0.5),
    rho=st.floats(min_value=1e-6, max_value=0.4),
    power=st.floats(min_value=0.5, max_value=4.0),
)
def test_power_sublevel_duality(d, rho, power):
    assume(abs(d - rho) > 1e-9 * max(d, rho))
    center = make_point([Fraction(1, 3)], bits=64)
    obs = PowerSingularity(center=center, coeff=-2.0, power=power, offset=1.0)
    thr = sublevel_threshold(obs, rho)
    assert (obs.value_from_distance(d) <= thr) == (d <= rho)


def test_observable_validation():
    c = make_point([Fraction(0)], bits=64)
    with pytest.raises(ValueError):
        QuadraticMin(center=c, scale=0.0)
    with pytest.raises(ValueError):
        PowerSingularity(center=c, coeff=1.0, power=2.0)
    with pytest.raises(ValueError):
        PowerSingularity(center=c, coeff=-1.0, power=0.0)


def test_power_singularity_at_center():
    c = make_point([Fraction(1, 4)], bits=64)
    obs = PowerSingularity(center=c, coeff=-1.0, power=2.0, offset=0.5)
    assert obs.value(c) == -math.inf
    y = make_point([Fraction(1, 4) + Fraction(1, 10)], bits=64)
    assert obs.value(y) == pytest.approx(-100.0 + 0.5, rel=1e-9)


def test_effective_radius_families():
    ball = SimpleBall(center=make_point([Fraction(1, 3)], bits=64))
    assert effective_radius(ball, 0.01) == 0.01
    plain = CompositeReturn(gamma_weighted=False)
    assert effective_radius(plain, 0.01) == 0.01
    weighted = CompositeReturn(gamma_weighted=True)
    assert effective_radius(weighted, 0.01, gamma_value=4.0, dim=1) == pytest.approx(0.0025)
    assert effective_radius(weighted, 0.01, gamma_value=4.0, dim=2) == pytest.approx(0.005)
    with pytest.raises(ValueError):
        effective_radius(weighted, 0.01)


def test_reference_point_dispatch():
    center = make_point([Fraction(1, 3)], bits=64)
    x0 = make_point([Fraction(1, 7)], bits=64)
    assert reference_point(SimpleBall(center=center), None) is center
    assert reference_point(CompositeReturn(), x0) is x0
    with pytest.raises(ValueError):
        reference_point(CompositeReturn(), None)
    obs = QuadraticMin(center=center)
    assert reference_point(SublevelObservable(obs), None) is center


def test_hit_test_boundary_exact():
    bits = 96
    center = make_point([Fraction(1, 4)], bits=bits)
    ball = SimpleBall(center=center)
    # rho = 2^-5 is exactly representable; distance == rho must count as a hit
    d_scaled = 1 << (bits - 5)
    at = make_point([Fraction(center.coords[0] + d_scaled, 1 << bits)], bits=bits)
    beyond = make_point([Fraction(center.coords[0] + d_scaled + 1, 1 << bits)], bits=bits)
    assert hit_test(ball, 2.0**-5, at)
    assert not hit_test(ball, 2.0**-5, beyond)


def test_lebesgue_ball_mass():
    leb = LebesgueMeasure(dim=1)
    x = make_point([Fraction(1, 2)], bits=64)
    assert leb.ball_mass(x, 0.1) == pytest.approx(0.2)
    assert leb.ball_mass(x, 0.7) == 1.0
    assert leb.ball_mass(x, 0.0) == 0.0
    assert leb.gamma(x) == 2.0
    leb2 = LebesgueMeasure(dim=2)
    x2 = make_point([Fraction(1, 2), Fraction(1, 3)], bits=64)
    assert leb2.ball_mass(x2, 0.1) == pytest.approx(0.04)
    assert leb2.gamma(x2) == 4.0


def test_gamma_estimate_lebesgue_exact():
    est = gamma_estimate(LebesgueMeasure(dim=1), make_point([Fraction(1, 3)], bits=64))
    assert est.value == pytest.approx(2.0, abs=1e-13)
    assert est.error_estimate < 1e-12


def test_gamma_estimate_conjugated_matches_density():
    spec = DiffeoSpec(amplitude=0.8)
    u = 0.3
    z = float(spec.h(np.array([u]))[0])
    gam = 2.0 / float(spec.h_prime(np.array([u]))[0])
    assert gam == pytest.approx(2.656796121774126, rel=1e-12)
    x = make_point([Fraction(z)], bits=64)
    meas = ConjugatedMeasure(spec)
    assert meas.gamma(x) == pytest.approx(gam, rel=1e-9)
    est = gamma_estimate(meas, x)
    assert est.value == pytest.approx(gam, rel=1e-6)
    assert est.error_estimate < 1e-6


def test_mollifier_shape():
    mp = MollifierPair(radius=0.1, width=0.01)
    assert mp.upper(0.1) == 1.0
    assert mp.upper(0.11) == pytest.approx(0.0, abs=1e-12)
    assert mp.upper(0.12) == 0.0
    assert mp.lower(0.1) == pytest.approx(0.0, abs=1e-12)
    assert mp.lower(0.09) == pytest.approx(1.0, rel=1e-12)
    assert mp.lower(0.08) == 1.0
    assert mp.lipschitz == pytest.approx(100.0)
    assert mp.sup_norm == 1.0
    with pytest.raises(ValueError):
        MollifierPair(radius=0.1, width=0.1)


@given(
    a=st.floats(min_value=0.0, max_value=0.5),
    b=st.floats(min_value=0.0, max_value=0.5),
)
def test_mollifier_sandwich_and_lipschitz(a, b):
    mp = MollifierPair(radius=0.1, width=0.02)
    for t in (a, b):
        ind = 1.0 if t <= mp.radius else 0.0
        assert mp.lower(t) <= ind <= mp.upper(t)
    assert abs(mp.upper(a) - mp.upper(b)) <= mp.lipschitz * abs(a - b) + 1e-12
    assert abs(mp.lower(a) - mp.lower(b)) <= mp.lipschitz * abs(a - b) + 1e-12


def test_mollifier_gap_matches_quadrature():
    mp = MollifierPair(radius=0.1, width=0.015)
    # integrate upper-lower over the circle: distance from a fixed center covers
    # [0, 1/2] twice
    t = np.linspace(0.0, 0.5, 200001)
    gap = 2.0 * np.trapezoid(mp.upper(t) - mp.lower(t), t)
    assert gap == pytest.approx(mp.lebesgue_gap(), rel=1e-6)


def test_mollify_width_scaling():
    mp = mollify(0.01, b=3.0)
    assert mp.radius == 0.01
    assert mp.width == pytest.approx((0.01**3) * 0.02)
    sigma = 2.0 * mp.radius
    # gap decays faster than sigma^2, the transfer estimates' requirement
    assert mp.lebesgue_gap() <= sigma**2
    with pytest.raises(ValueError):
        mollify(0.7)
    with pytest.raises(ValueError):
        mollify(0.01, b=0.5)
