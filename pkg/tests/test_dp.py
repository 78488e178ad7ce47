import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_segment, cost_table
from segiwv.dp import CostMatrix, dp_fixed_k, dp_segment, ssr_of, weighted_mean


def test_weighted_mean():
    assert weighted_mean([1, 2, 3], [1, 1, 1]) == 2.0
    assert weighted_mean([1, 3], [1, 3]) == 2.5
    assert weighted_mean([7.5], [0.3]) == 7.5
    with pytest.raises(ValueError):
        weighted_mean([], [])


def test_cost_matrix_matches_direct_sum(rng):
    z = rng.normal(5, 2, 30)
    w = rng.uniform(0.1, 10, 30)
    cm = CostMatrix(z, w)
    C = cost_table(z, w)
    for i in range(30):
        assert cm.cost(i, i) == 0.0
        for j in range(i + 1, 31):
            assert cm.cost(i, j) == pytest.approx(C[i, j], rel=1e-9, abs=1e-12)


def test_noiseless_step():
    res = dp_segment([0, 0, 0, 5, 5, 5], np.ones(6), 2)
    seg = res[2]
    assert seg.changepoints.tolist() == [3]
    assert seg.means.tolist() == [0.0, 5.0]
    assert res.ssr[1] == 0.0


def test_single_segment(rng):
    z = rng.normal(size=15)
    w = rng.uniform(0.5, 2, 15)
    seg = dp_segment(z, w, 1)[1]
    assert seg.changepoints.size == 0
    assert seg.means[0] == pytest.approx(weighted_mean(z, w))
    assert ssr_of(seg, z, w) == pytest.approx(cost_table(z, w)[0, 15])


def test_ssr_of_examples():
    seg = dp_segment([0.0, 1.0], [1.0, 1.0], 1)[1]
    assert ssr_of(seg, [0.0, 1.0], [1.0, 1.0]) == 0.5
    z = np.full(8, 2.0)
    assert ssr_of(dp_segment(z, np.ones(8), 3)[3], z, np.ones(8)) == 0.0


def test_length_twenty_three_segments(rng):
    z = rng.normal(size=20)
    w = rng.uniform(0.2, 5, 20)
    best, cps = brute_force_segment(z, w, 3)
    seg = dp_fixed_k(z, w, 3)
    assert tuple(seg.changepoints) == cps
    assert ssr_of(seg, z, w) == pytest.approx(best, rel=1e-9)


def test_tie_break_prefers_earliest_breaks():
    z = np.zeros(6)
    res = dp_segment(z, np.ones(6), 4)
    assert res[2].changepoints.tolist() == [1]
    assert res[4].changepoints.tolist() == [1, 2, 3]


def test_tie_break_matches_oracle_on_ties():
    z = np.array([0, 0, 1, 1, 0, 0, 1, 1], float)
    w = np.ones(8)
    for K in range(1, 6):
        _, cps = brute_force_segment(z, w, K)
        assert tuple(dp_fixed_k(z, w, K).changepoints) == cps


def test_min_len(rng):
    z = rng.normal(size=14)
    w = rng.uniform(0.5, 2, 14)
    for K in (2, 3, 4):
        best, cps = brute_force_segment(z, w, K, min_len=3)
        seg = dp_fixed_k(z, w, K, min_len=3)
        assert tuple(seg.changepoints) == cps
        assert seg.segment_lengths.min() >= 3


def test_invalid_arguments():
    with pytest.raises(ValueError):
        dp_segment(np.zeros(3), np.ones(3), 4)
    with pytest.raises(ValueError):
        dp_segment(np.zeros(3), np.array([1.0, 0.0, 1.0]), 2)
    with pytest.raises(ValueError):
        dp_segment(np.zeros(3), np.ones(3), 0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=12),
    st.data(),
)
def test_matches_brute_force(zs, data):
    n = len(zs)
    w = np.array(data.draw(st.lists(st.floats(0.01, 100), min_size=n, max_size=n)))
    z = np.array(zs)
    kmax = data.draw(st.integers(1, min(n, 4)))
    res = dp_segment(z, w, kmax)
    for K in range(1, kmax + 1):
        best, _ = brute_force_segment(z, w, K)
        assert res.ssr[K - 1] == pytest.approx(best, rel=1e-9, abs=1e-9 * (1 + float(np.dot(w, z * z))))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=5, max_size=60), st.integers(1, 5))
def test_ssr_non_increasing(zs, kmax):
    z = np.array(zs)
    res = dp_segment(z, np.ones(z.size), min(kmax, z.size))
    assert np.all(np.diff(res.ssr) <= 1e-9 * (1 + res.ssr[0]))
    for K in range(1, res.K_max + 1):
        assert res[K].K == K


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=40), st.floats(-1e3, 1e3))
def test_shift_invariance(zs, c):
    z = np.array(zs)
    w = np.linspace(0.5, 2, z.size)
    a = dp_segment(z, w, 3)
    b = dp_segment(z + c, w, 3)
    assert np.allclose(a.ssr, b.ssr, rtol=1e-6, atol=1e-6 * (1 + abs(c)) ** 2)
