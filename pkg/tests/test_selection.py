import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segiwv.selection import (
    CRITERIA, dimension_path, lad_line, lavielle_second_differences, mbic_values, normalize_criterion, pen_shape,
    select_all, select_bm, select_bm1, select_bm2, select_lavielle, select_mbic,
)


def test_pen_shape():
    assert pen_shape(1, 400) == pytest.approx(5 + 2 * math.log(400))
    assert pen_shape(np.array([10]), 400)[0] == pytest.approx(10 * (5 + 2 * math.log(40)))


def test_mbic_hand_instance():
    vals = mbic_values([10.0, 2.0], [[10], [4, 6]], 10)
    assert vals[0] == pytest.approx(-5 - math.log(10))
    assert vals[1] == pytest.approx(-1 - 0.5 * (math.log(4) + math.log(6)) - 1.5 * math.log(10))
    assert select_mbic([10.0, 2.0], [[10], [4, 6]], 10).K == 2


def test_mbic_zero_curve_prefers_one_segment():
    lengths = [[20]] + [[20 - k] + [1] * k for k in range(1, 5)]
    assert select_mbic(np.zeros(5), lengths, 20).K == 1


def test_mbic_length_mismatch():
    with pytest.raises(ValueError):
        mbic_values([1.0, 0.5], [[10], [10]], 10)


def test_lavielle_linear_curve():
    ssr = 100 - 3.0 * np.arange(30)
    assert np.allclose(lavielle_second_differences(ssr), 0)
    assert select_lavielle(ssr).K == 1


def test_lavielle_sharp_elbow():
    K = np.arange(1, 31)
    ssr = np.where(K <= 7, 1000 - 150.0 * (K - 1), 100 - 2.0 * (K - 7))
    J = (ssr[-1] - ssr) / (ssr[-1] - ssr[0]) * 29 + 1
    D = J[:-2] - 2 * J[1:-1] + J[2:]
    assert np.allclose(lavielle_second_differences(ssr), D)
    assert D[5] > 0.75 and np.all(np.delete(D, 5) <= 0.75)
    assert select_lavielle(ssr).K == 7


def test_lavielle_zero_curve():
    assert select_lavielle(np.zeros(10)).K == 1


def test_bm2_exactly_linear_curve_selects_one():
    K = np.arange(1, 31)
    ssr = 5000 - 3.0 * pen_shape(K, 400)
    c = select_bm2(ssr, 400)
    assert c.penalty_constant == pytest.approx(3.0)
    assert c.K == 1


def _ideal_curve(s=1.0, n=400):
    K = np.arange(1, 31)
    tail = 1000 - s * pen_shape(K, n)
    head = tail + np.where(K < 7, 400.0 * (7 - K), 0.0)
    return head


def test_bm1_jump_on_ideal_curve():
    ssr = _ideal_curve(1.5)
    c = select_bm1(ssr, 400)
    assert c.penalty_constant == pytest.approx(1.5)
    assert c.K == 7


def test_bm2_on_ideal_curve():
    assert select_bm2(_ideal_curve(1.5), 400).K == 7


def test_noiseless_two_segments():
    ssr = np.r_[50.0, np.zeros(9)]
    assert select_bm1(ssr, 100).K == 2
    assert select_bm2(ssr, 100).K == 2
    assert select_lavielle(ssr).K == 2


def test_select_bm_dispatch():
    ssr = _ideal_curve()
    assert select_bm(ssr, 400, "dimension-jump").K == select_bm1(ssr, 400).K
    assert select_bm(ssr, 400, "data-driven-slope").K == select_bm2(ssr, 400).K
    with pytest.raises(ValueError):
        select_bm(ssr, 400, "grid")


def _k_of_alpha(ssr, pen, a):
    crit = ssr + a * pen
    return int(np.flatnonzero(crit == crit.min())[0]) + 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 50), min_size=3, max_size=25))
def test_dimension_path_matches_pointwise_argmin(decrements):
    ssr = 2000 - np.cumsum(np.r_[0.0, decrements])
    n = 400
    pen = pen_shape(np.arange(1, ssr.size + 1), n)
    path = dimension_path(ssr, n)
    alphas = [0.0] + [p[0] for p in path]
    ks = [p[2] for p in path]
    assert path[-1][2] == 1
    for (a, before, after), nxt in zip(path, alphas[1:] + [alphas[-1] * 2 + 1]):
        if nxt > a:
            assert _k_of_alpha(ssr, pen, 0.5 * (a + nxt)) == after
    assert all(x > y for x, y in zip([path[0][1]] + ks, ks))


def test_lad_line():
    x = np.arange(10.0)
    y = 2 * x + 1
    y[3] += 100
    slope, icpt = lad_line(x, y)
    assert slope == pytest.approx(2.0) and icpt == pytest.approx(1.0)


def test_lad_line_is_optimal(rng):
    from itertools import product

    x = np.arange(8.0)
    y = rng.normal(size=8)
    slope, icpt = lad_line(x, y)
    best = np.abs(y - icpt - slope * x).sum()
    for s, c in product(np.linspace(-1, 1, 81), np.linspace(-2, 2, 81)):
        assert np.abs(y - c - s * x).sum() >= best - 1e-12


def test_select_all_names_and_bounds(rng):
    ssr = np.sort(rng.uniform(10, 100, 12))[::-1]
    lengths = [[100 // K] * (K - 1) + [100 - (100 // K) * (K - 1)] for K in range(1, 13)]
    res = select_all(ssr, lengths, 100, ["bm1", "LAV", "mbic", "Bm2"])
    assert set(res.as_dict()) == set(CRITERIA)
    assert all(1 <= k <= 12 for k in res.as_dict().values())
    assert res["lav"] == res.choices["Lav"].K


def test_unknown_criterion():
    assert normalize_criterion(" bM1 ") == "BM1"
    with pytest.raises(ValueError):
        normalize_criterion("aic")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 100), min_size=2, max_size=30), st.integers(30, 2000))
def test_choices_in_range(decrements, n):
    ssr = 5000 - np.cumsum(np.r_[0.0, decrements])
    K = ssr.size
    lengths = [[1] * (k - 1) + [n - k + 1] for k in range(1, K + 1)]
    for c in select_all(ssr, lengths, n).as_dict().values():
        assert 1 <= c <= K
