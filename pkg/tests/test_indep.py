import csv
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multibc.hitstats import SeparationFns
from multibc.indep import (
    CSV_HEADER,
    IndepReport,
    RecurrenceRow,
    TupleSpec,
    UnderpoweredError,
    em_defect_fourier,
    estimate_EMr,
    estimate_M1,
    estimate_M2,
    estimate_M3,
    exact_joint_hit_probability,
    hit_matrix,
    joint_hit_probability_mc,
    recurrence_overlap_exact,
    slow_recurrence_profile,
    write_reports_csv,
)
from multibc.precision import SeededRng
from multibc.systems import LinearExpanding, golden_rotation
from multibc.targets import LebesgueMeasure, RadiusSchedule

DOUBLING = LinearExpanding(branch_count=2)
LEB = LebesgueMeasure(dim=1)


# --- tuple bookkeeping --------------------------------------------------------


def test_tuple_spec_validation():
    t = TupleSpec(n=100, ks=(5, 30, 80))
    assert t.r == 3
    with pytest.raises(ValueError):
        TupleSpec(n=100, ks=(30, 5))
    with pytest.raises(ValueError):
        TupleSpec(n=100, ks=(5, 101))
    with pytest.raises(ValueError):
        TupleSpec(n=100, ks=())
    with pytest.raises(ValueError):
        TupleSpec(n=100, ks=(0, 5))


def test_tuple_spec_separation():
    fns = SeparationFns(r=2)
    # s(4096) = ln(4096)^2 ~ 69.2; gaps 100 and 2000 both clear it
    assert TupleSpec(n=4096, ks=(100, 2100)).is_separated(fns)
    # adjacent times collapse the separation index
    clustered = TupleSpec(n=4096, ks=(100, 101))
    assert clustered.separation(fns) == 1
    assert not clustered.is_separated(fns)


# --- exact joint probabilities for dyadic balls -------------------------------


def test_exact_joint_single_time():
    # one time: ball of radius 2^-b is exactly two depth-b cylinders
    assert exact_joint_hit_probability([7], 4, Fraction(1, 4)) == Fraction(2, 16)
    assert exact_joint_hit_probability([0], 6, Fraction(5, 64)) == Fraction(2, 64)


def test_exact_joint_separated_times_factorize():
    # windows disjoint when the gap reaches ball_bits: product is exact
    p = exact_joint_hit_probability([3, 3 + 6, 3 + 14], 6, Fraction(9, 64))
    assert p == Fraction(2, 64) ** 3


def test_exact_joint_adjacent_times_generic_center_impossible():
    # at center 1/4 the two allowed windows double to {6,7} or {8,9}: no overlap
    assert exact_joint_hit_probability([5, 6], 4, Fraction(1, 4)) == 0


def test_exact_joint_adjacent_times_fixed_point():
    # center 0: windows {15, 0}; each doubles onto one allowed value with one
    # free bit, so the joint mass is half the single-event mass
    p = exact_joint_hit_probability([5, 6], 4, Fraction(0))
    assert p == Fraction(1, 16)
    assert p / Fraction(2, 16) == Fraction(1, 2)


@given(
    b=st.integers(min_value=2, max_value=8),
    j=st.integers(min_value=0, max_value=255),
    t=st.integers(min_value=0, max_value=12),
)
@settings(max_examples=60)
def test_exact_joint_single_matches_ball_mass(b, j, t):
    j = j % (1 << b)
    assert exact_joint_hit_probability([t], b, Fraction(j, 1 << b)) == Fraction(2, 1 << b)


def test_exact_joint_rejects_bad_input():
    with pytest.raises(ValueError):
        exact_joint_hit_probability([3, 3], 4, Fraction(0))
    with pytest.raises(ValueError):
        exact_joint_hit_probability([1], 4, Fraction(1, 3))
    with pytest.raises(ValueError):
        exact_joint_hit_probability([1, 40], 4, Fraction(0))


# --- Monte Carlo hit matrices -------------------------------------------------


def test_hit_matrix_validation():
    rng = SeededRng(seed=1, stream=0)
    with pytest.raises(ValueError):
        hit_matrix(DOUBLING, rng, [5, 3], Fraction(1, 3), [Fraction(1, 32)] * 2, 100)
    with pytest.raises(ValueError):
        hit_matrix(DOUBLING, rng, [3], Fraction(1, 3), [Fraction(0)], 100)
    with pytest.raises(ValueError):
        hit_matrix(DOUBLING, rng, [3, 5], Fraction(1, 3), [Fraction(1, 32)], 100)


def test_mc_matches_exact_joint_probability():
    rng = SeededRng(seed=77, stream=0)
    times = [4, 9]
    p = exact_joint_hit_probability(times, 4, Fraction(3, 16))
    assert p == Fraction(2, 16) ** 2
    est, se = joint_hit_probability_mc(
        DOUBLING, rng, times, Fraction(3, 16), [Fraction(1, 16)] * 2, 40_000
    )
    assert abs(est - float(p)) <= 4 * se


def test_mc_single_event_calibration_translation():
    # rotation orbits of a uniform point are uniform at every fixed time
    rng = SeededRng(seed=5, stream=0)
    est, se = joint_hit_probability_mc(
        golden_rotation(bits=128), rng, [17], Fraction(1, 3), [Fraction(1, 50)], 20_000
    )
    assert abs(est - 0.04) <= 4 * se


# --- M1 / M2 / M3 -------------------------------------------------------------


def test_m1_separated_doubling_passes():
    # n=32, rho=1/32, sigma=1/16; gap 13 >= s(32) ~ 12.0
    rng = SeededRng(seed=11, stream=0)
    tup = TupleSpec(n=32, ks=(13, 26))
    rep = estimate_M1(
        DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0, d_eff=1.0, s=0.0),
        tup, 20_000, rng,
    )
    assert rep.axiom == "M1"
    assert rep.verdict
    assert 0.7 <= rep.ratio <= 1.3
    assert rep.samples == 20_000
    assert rep.ratio == pytest.approx(rep.estimate / rep.target)


def test_m1_rejects_clustered_tuple():
    rng = SeededRng(seed=11, stream=0)
    with pytest.raises(ValueError, match="not s\\(n\\)-separated"):
        estimate_M1(
            DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0),
            TupleSpec(n=32, ks=(13, 14)), 20_000, rng,
        )


def test_m1_underpowered_raises():
    rng = SeededRng(seed=11, stream=0)
    tup = TupleSpec(n=4096, ks=(100, 2100))
    with pytest.raises(UnderpoweredError):
        estimate_M1(
            DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0, s=1.0),
            tup, 10_000, rng,
        )


def test_m1_sample_floor():
    rng = SeededRng(seed=11, stream=0)
    with pytest.raises(ValueError, match="samples"):
        estimate_M1(
            DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0),
            TupleSpec(n=32, ks=(13, 26)), 500, rng,
        )


def test_m2_adjacent_times_generic_center_zero():
    # B(1/3, 1/32) and its doubling image are disjoint: joint hits impossible
    rng = SeededRng(seed=13, stream=0)
    tup = TupleSpec(n=32, ks=(13, 14))
    rep = estimate_M2(
        DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0),
        tup, 20_000, rng,
    )
    assert rep.axiom == "M2"
    assert rep.estimate == 0.0
    assert rep.verdict
    assert "separation_index=1" in rep.note


def test_m2_fixed_point_fails_collapse():
    # at the fixed point the clustered mass is sigma/2, nowhere near the bound
    rng = SeededRng(seed=13, stream=0)
    tup = TupleSpec(n=32, ks=(13, 14))
    rep = estimate_M2(
        DOUBLING, LEB, Fraction(0), RadiusSchedule(c=1.0),
        tup, 20_000, rng,
    )
    assert not rep.verdict
    assert rep.estimate == pytest.approx(1.0 / 32.0, rel=0.2)


def test_m2_rejects_separated_tuple():
    rng = SeededRng(seed=13, stream=0)
    with pytest.raises(ValueError, match="separated"):
        estimate_M2(
            DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0),
            TupleSpec(n=32, ks=(13, 26)), 20_000, rng,
        )


def test_m3_two_scales_doubling():
    rng = SeededRng(seed=17, stream=0)
    rep = estimate_M3(
        DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0),
        5, 10, (20,), (1500,), 100_000, rng,
    )
    assert rep.axiom == "M3"
    assert rep.target == pytest.approx((1 / 16) * (1 / 512))
    assert rep.verdict
    assert "scales=(5,10)" in rep.note


def test_m3_scale_gap_enforced():
    rng = SeededRng(seed=17, stream=0)
    with pytest.raises(ValueError, match="scale gap"):
        estimate_M3(
            DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0),
            5, 7, (20,), (1500,), 100_000, rng,
        )


def test_m3_cross_gap_enforced():
    rng = SeededRng(seed=17, stream=0)
    with pytest.raises(ValueError, match="cross-scale gap"):
        estimate_M3(
            DOUBLING, LEB, Fraction(1, 3), RadiusSchedule(c=1.0),
            5, 10, (1495,), (1500,), 100_000, rng,
        )


def test_m1_translation_negative_control():
    # golden rotation, times (55, 110): ||55 alpha|| ~ 0.00813 < 2 rho = 0.02,
    # so the two hit sets overlap heavily and the product law fails hard
    rng = SeededRng(seed=19, stream=0)
    sched = RadiusSchedule(c=10.24, d_eff=1.0, s=0.0)
    tup = TupleSpec(n=1024, ks=(55, 110))
    rep = estimate_M1(golden_rotation(bits=128), LEB, Fraction(1, 3), sched, tup, 30_000, rng)
    assert not rep.verdict
    assert rep.ratio > 2.0
    # analytic overlap of the two preimage intervals
    alpha = (math.sqrt(5) - 1) / 2
    delta = abs(55 * alpha - round(55 * alpha))
    expected = (0.02 - delta) / 0.02**2
    assert rep.ratio == pytest.approx(expected, rel=0.25)


# --- EM-r correlation defects -------------------------------------------------


def test_em_defect_fourier_nonresonant_modes_vanish():
    for m in (-5, -2, -1, 1, 2, 5):
        for times in ((0, 3), (1, 7, 20)):
            modes = [m] * len(times)
            assert em_defect_fourier(modes, times) <= 1e-14


def test_em_defect_fourier_resonance():
    # -2 * 2^0 + 1 * 2^1 = 0: joint integral 1 though both marginals vanish
    assert em_defect_fourier((-2, 1), (0, 1)) == 1.0
    assert em_defect_fourier((4, -1), (0, 2)) == 1.0
    assert em_defect_fourier((0, 0), (0, 1)) == 0.0


def test_em_defect_fourier_validation():
    with pytest.raises(ValueError):
        em_defect_fourier((1,), (0, 1))
    with pytest.raises(ValueError):
        em_defect_fourier((1, 1), (3, 3))


def test_emr_lipschitz_ramps_small_defect():
    rng = SeededRng(seed=23, stream=0)

    def ramp(center):
        def f(x):
            d = np.abs(x - center)
            d = np.minimum(d, 1.0 - d)
            return np.clip((0.15 - d) / 0.05, 0.0, 1.0)

        return f

    rep = estimate_EMr(
        DOUBLING,
        [ramp(0.3), ramp(0.6), ramp(0.9)],
        (1, 21, 41),
        300_000,
        rng,
    )
    assert rep.axiom == "EM3"
    assert rep.verdict
    assert abs(rep.estimate - rep.target) <= 2e-3


def test_emr_requires_doubling():
    rng = SeededRng(seed=23, stream=0)
    with pytest.raises(ValueError, match="doubling"):
        estimate_EMr(golden_rotation(), [np.cos], (1,), 10_000, rng)


# --- slow recurrence ----------------------------------------------------------


def _brute_preimage_overlap(branches, x, rho, k):
    """Independent enumeration of mu(B intersect f^-k B) / mu(B), exact."""
    scale = branches**k
    start = (x - rho) % 1
    length = 2 * rho
    if start + length <= 1:
        arcs = [(start, length)]
    else:
        arcs = [(start, 1 - start), (Fraction(0), start + length - 1)]
    total = Fraction(0)
    for j in range(scale):
        for t0, tlen in arcs:
            p0 = Fraction(j + t0, scale)
            p1 = p0 + Fraction(tlen, scale)
            for b0, blen in arcs:
                total += max(Fraction(0), min(p1, b0 + blen) - max(p0, b0))
    return total / length


def test_recurrence_fixed_point_half():
    assert recurrence_overlap_exact(2, Fraction(0), Fraction(1, 100), 1) == Fraction(1, 2)


def test_recurrence_period_two_point_zero():
    assert recurrence_overlap_exact(2, Fraction(1, 3), Fraction(1, 100), 1) == 0


def test_recurrence_large_depth_approaches_ball_mass():
    r = recurrence_overlap_exact(2, Fraction(1, 3), Fraction(1, 100), 40)
    assert abs(float(r) - 0.02) < 1e-9


@given(
    branches=st.integers(min_value=2, max_value=3),
    k=st.integers(min_value=1, max_value=6),
    num=st.integers(min_value=0, max_value=63),
    rnum=st.integers(min_value=1, max_value=20),
)
@settings(max_examples=40)
def test_recurrence_matches_brute_enumeration(branches, k, num, rnum):
    x = Fraction(num, 64)
    rho = Fraction(rnum, 100)
    assert recurrence_overlap_exact(branches, x, rho, k) == _brute_preimage_overlap(
        branches, x, rho, k
    )


def test_recurrence_profile_rows_and_cap():
    rows = slow_recurrence_profile(DOUBLING, Fraction(0), [Fraction(1, 100)], [1, 2, 10])
    assert [r.k for r in rows] == [1, 2, 10]
    assert all(r.exact for r in rows)
    assert rows[0].ratio == 0.5
    with pytest.raises(ValueError, match="mixing-time cap"):
        slow_recurrence_profile(DOUBLING, Fraction(0), [Fraction(1, 100)], [10_000])
    with pytest.raises(ValueError):
        slow_recurrence_profile(DOUBLING, Fraction(0), [Fraction(2, 3)], [1])


# --- reporting ----------------------------------------------------------------


def test_reports_csv_roundtrip(tmp_path):
    rep = IndepReport(
        axiom="M1", system="linear-2", r=2, times=(13, 26),
        estimate=0.004, target=0.0039, ratio=0.004 / 0.0039,
        mc_stderr=0.0005, samples=20_000, verdict=True,
    )
    path = tmp_path / "reports.csv"
    write_reports_csv([rep], path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER
    assert rows[1][0] == "M1"
    assert rows[1][3] == "13 26"
    assert rows[1][-1] == "pass"
    assert float(rows[1][4]) == pytest.approx(0.004)
