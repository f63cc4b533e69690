import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multibc.fastpath import (
    BitOrbitBatch,
    decide_leq_with_fallback,
    u64_of_fraction,
    wrapped_dist_float,
    wrapped_dist_u64,
)
from multibc.precision import SeededRng, make_point, torus_distance_scaled
from multibc.systems import LinearExpanding, orbit_stream


def test_u64_of_fraction():
    assert u64_of_fraction(Fraction(0)) == 0
    assert u64_of_fraction(Fraction(1, 2)) == 1 << 63
    assert u64_of_fraction(Fraction(1, 3)) == ((1 << 64) - 1) // 3
    with pytest.raises(ValueError):
        u64_of_fraction(Fraction(1))


def test_wrapped_dist_u64_wraps():
    a = np.uint64(10)
    b = np.uint64((1 << 64) - 10)
    assert int(wrapped_dist_u64(a, b)) == 20
    assert int(wrapped_dist_u64(b, a)) == 20
    assert int(wrapped_dist_u64(a, a)) == 0


@given(
    x=st.floats(min_value=0.0, max_value=1.0, exclude_max=True),
    y=st.floats(min_value=0.0, max_value=1.0, exclude_max=True),
)
def test_wrapped_dist_float_matches_u64(x, y):
    fx, fy = Fraction(x), Fraction(y)
    ua, ub = u64_of_fraction(fx), u64_of_fraction(fy)
    du = int(wrapped_dist_u64(np.uint64(ua), np.uint64(ub)))
    df = float(wrapped_dist_float(x, y))
    assert abs(du / 2.0**64 - df) <= 2.0**-52


def test_windows_match_exact_fractions():
    rng = SeededRng(seed=99, stream=0)
    batch = BitOrbitBatch.sample(rng, np.arange(3), n_steps=200)
    win = batch.windows(0, 150)
    for row in range(3):
        for k in (0, 1, 7, 8, 9, 63, 64, 100, 150):
            exact = batch.exact_fraction(row, k)
            assert int(win[row, k]) == u64_of_fraction(exact)


def test_window_at_matches_contiguous_windows():
    rng = SeededRng(seed=31, stream=0)
    batch = BitOrbitBatch.sample(rng, np.arange(4), n_steps=300)
    ks = [0, 1, 7, 8, 9, 64, 137, 300]
    sparse = batch.window_at(ks)
    for j, k in enumerate(ks):
        assert np.array_equal(sparse[:, j], batch.windows(k, k)[:, 0])
    with pytest.raises(ValueError):
        batch.window_at([batch.bits])


def test_windows_shift_identity():
    # window at k+1 is the doubling of window at k refreshed with the next bit
    rng = SeededRng(seed=5, stream=0)
    batch = BitOrbitBatch.sample(rng, np.arange(2), n_steps=100)
    win = batch.windows(0, 80)
    for row in range(2):
        for k in range(80):
            doubled = Fraction(2) * batch.exact_fraction(row, k)
            doubled -= doubled.numerator // doubled.denominator
            assert int(win[row, k + 1] if k + 1 <= 80 else 0) == u64_of_fraction(doubled) or k == 80


def test_sample_streams_are_stable():
    rng = SeededRng(seed=123, stream=0)
    full = BitOrbitBatch.sample(rng, np.arange(8), n_steps=64)
    part = BitOrbitBatch.sample(rng, np.array([5, 6]), n_steps=64)
    assert np.array_equal(full.raw[5], part.raw[0])
    assert np.array_equal(full.raw[6], part.raw[1])
    chan = BitOrbitBatch.sample(rng, np.array([5]), n_steps=64, channel=1)
    assert not np.array_equal(chan.raw[0], part.raw[0])


def test_windows_agree_with_exact_orbit():
    # the u64 window truncates the exact doubling-map orbit point
    n = 64
    rng = SeededRng(seed=77, stream=0)
    batch = BitOrbitBatch.sample(rng, np.arange(1), n_steps=n)
    x0 = make_point([batch.exact_fraction(0, 0)], bits=batch.bits)
    win = batch.windows(1, n)
    for j, p in enumerate(orbit_stream(LinearExpanding(2), x0, n)):
        exact = p.as_fractions()[0]
        assert int(win[0, j]) == u64_of_fraction(exact)


def test_decide_leq_plain_and_gray():
    thr = Fraction(1000, 1 << 64)
    calls = []

    def exact(i):
        calls.append(i)
        return [Fraction(993, 1 << 64), Fraction(1001, 1 << 64)][i]

    d = np.array([993, 1001], dtype=np.uint64)
    out = decide_leq_with_fallback(d, thr, exact)
    # both inside the 8-ulp gray margin, so both re-decided exactly
    assert sorted(calls) == [0, 1]
    assert out.tolist() == [True, False]

    far = np.array([10, 10**9], dtype=np.uint64)
    out2 = decide_leq_with_fallback(far, thr, lambda i: pytest.fail("no fallback expected"))
    assert out2.tolist() == [True, False]


def test_decide_gray_zone_beats_u64_rounding():
    # a distance whose u64 truncation equals the threshold's but whose exact
    # value is larger: the fallback must overturn the coarse <=
    thr = Fraction((1000 << 10) + 1, 1 << 74)  # truncates to 1000
    d = np.array([1000], dtype=np.uint64)
    exact_val = Fraction((1000 << 10) + 5, 1 << 74)
    out = decide_leq_with_fallback(d, thr, lambda i: exact_val)
    assert out.tolist() == [False]


def test_fastpath_hits_match_bruteforce():
    # full pipeline: hit set from windows + gray fallback == exact orbit hit set
    n = 2000
    rng = SeededRng(seed=31, stream=0)
    batch = BitOrbitBatch.sample(rng, np.arange(2), n_steps=n)
    center = Fraction(1, 3)
    c64 = np.uint64(u64_of_fraction(center))
    rho = Fraction(1, 97)

    win = batch.windows(1, n)
    d64 = wrapped_dist_u64(win, c64)

    def exact_dist(flat):
        row, j = divmod(flat, n)
        v = batch.exact_fraction(row, j + 1) - center
        v %= 1
        return min(v, 1 - v)

    hits = decide_leq_with_fallback(d64, rho, exact_dist)

    for row in range(2):
        x0 = make_point([batch.exact_fraction(row, 0)], bits=batch.bits)
        for j, p in enumerate(orbit_stream(LinearExpanding(2), x0, n)):
            v = (p.as_fractions()[0] - center) % 1
            exact_hit = min(v, 1 - v) <= rho
            assert bool(hits[row, j]) == exact_hit
