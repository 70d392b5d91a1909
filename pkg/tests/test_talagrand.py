import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conclab import talagrand as tg
from conclab.oracles import grid_golden_min


def brute_min(a, b, cr2):
    return grid_golden_min(lambda lam: float(tg.min_basic_objective(lam, a, b, cr2)))[1]


def test_min_basic_examples():
    assert tg.min_basic(tg.MinBasicInput(1.0, 0.0, 1.0, 1.0)) == (-0.25, 0.5)
    v, lam = tg.min_basic(tg.MinBasicInput(2.0, 2.0, 3.0, 0.7))
    assert v == -2.0 and lam == 1.0
    assert tg.min_basic(tg.MinBasicInput(3.0, 0.0, 1.0, 1.0)) == (-2.0, 0.0)
    assert brute_min(1.0, 0.0, 1.0) == pytest.approx(-0.25, abs=1e-12)
    assert brute_min(3.0, 0.0, 1.0) == pytest.approx(-2.0, abs=1e-12)


def test_min_basic_minus_infinity_b():
    v, lam = tg.min_basic(tg.MinBasicInput(1.0, -math.inf, 1.0, 1.0))
    assert (v, lam) == (0.0, 0.0)


@pytest.mark.parametrize("bad", [(0.0, 1.0, 1.0, 1.0), (1.0, 0.0, 0.0, 1.0), (1.0, 0.0, 1.0, -1.0),
                                 (math.nan, 0.0, 1.0, 1.0)])
def test_min_basic_rejects_bad_input(bad):
    with pytest.raises(tg.TalagrandError):
        tg.MinBasicInput(*bad)


@given(x=st.floats(-10, 10), y=st.floats(-10, 10), log_cr2=st.floats(-3, 3))
@settings(max_examples=300, deadline=None)
def test_min_basic_matches_brute_force(x, y, log_cr2):
    a, b = max(x, y), min(x, y)
    cr2 = 10.0**log_cr2
    value, lam = tg._min_basic(a, b, cr2)
    assert 0.0 <= lam <= 1.0
    assert value == pytest.approx(float(tg.min_basic_objective(lam, a, b, cr2)), abs=1e-12)
    assert abs(value - brute_min(a, b, cr2)) <= 1e-9


def test_h_cost_examples():
    assert tg.h_cost(tg.HCostInput(0.0, 1.0, 0.0, 1.0, 1.0)) == pytest.approx(-0.25)
    assert tg.h_cost(tg.HCostInput(0.0, 1.0, 5.0, 1.0, 1.0)) == -5.0
    assert tg.h_cost(tg.HCostInput(0.0, 1.0, 0.0, 3.0, 1.0)) == -2.0
    assert tg.h_cost(tg.HCostInput(2.0, 2.0, 1.0, 4.0, 1.0)) == -4.0


@given(ht=st.floats(-10, 10), hy=st.floats(-10, 10), kappa=st.floats(0.01, 10), dt=st.floats(0.05, 5))
@settings(max_examples=200, deadline=None)
def test_h_cost_equals_lambda_minimization(ht, hy, kappa, dt):
    # H(t, y) = min over lam of -lam h(t) - (1-lam) h(y) + kappa (1-lam)^2 (y-t)^2
    value = tg.h_cost_value(ht, hy, kappa, dt * dt)
    oracle = grid_golden_min(lambda lam: -lam * ht - (1 - lam) * hy + kappa * (1 - lam) ** 2 * dt * dt)[1]
    assert abs(value - oracle) <= 1e-9


def test_h_cost_continuous_at_y_equals_t():
    near = tg.h_cost_value(0.3, 1.1, 2.0, 1e-14)
    assert near == pytest.approx(tg.h_cost_value(0.3, 1.1, 2.0, 0.0), abs=1e-12)


def test_remark_bound_examples():
    inp = tg.HCostInput(0.0, 1.0, 0.0, 1.0, 1.0)
    value = tg.remark_bound(inp, 4.0)
    assert value == pytest.approx(-1 + 4 * math.log(2 - math.exp(-0.25)), rel=1e-14)
    assert value >= tg.h_cost(inp)
    same = tg.HCostInput(1.0, 1.0, 0.7, 0.7, 1.0)
    assert tg.remark_bound(same, 3.0) == pytest.approx(-0.7) == tg.h_cost(same)
    # -h_y + Q log(2 - exp(-g/Q)) = -h_t - g^2/Q + O(g^3/Q^2) with g = h_y - h_t
    assert tg.remark_bound(tg.HCostInput(0.0, 1.0, 0.2, 0.9, 1.0), 1e6) == pytest.approx(-0.2, abs=1e-6)


def test_remark_bound_preconditions():
    with pytest.raises(tg.TalagrandError):
        tg.remark_bound(tg.HCostInput(0.0, 1.0, 2.0, 1.0, 1.0), 10.0)
    with pytest.raises(tg.TalagrandError):
        tg.remark_bound(tg.HCostInput(0.0, 1.0, 0.0, 1.0, 1.0), 3.9)


@given(ht=st.floats(-10, 10), gap=st.floats(0, 10), kappa=st.floats(0.01, 10), dt=st.floats(0, 3),
       excess=st.floats(1, 100))
@settings(max_examples=300)
def test_remark_bound_dominates_h(ht, gap, kappa, dt, excess):
    hy = ht + gap
    Q = 4 * kappa * dt * dt * excess + 1e-12
    h = tg.h_cost_value(ht, hy, kappa, dt * dt)
    assert tg.remark_bound_value(ht, hy, kappa, dt * dt, Q) >= h - 1e-12 * (1 + abs(h))


def test_choice_of_l_examples():
    assert tg.choice_of_L(100, 0.5, 1.0) ** 2 == pytest.approx(512 * math.log(2 + 100 / math.log(4)), rel=1e-14)
    assert tg.choice_of_L(100, 0.5, 1.0) ** 2 == pytest.approx(2204.6, abs=0.1)
    assert tg.choice_of_L(100, 0.5, 1.0) == pytest.approx(46.95, abs=0.01)
    assert tg.choice_of_L(100, 0.5, 2.0) == pytest.approx(2 * tg.choice_of_L(100, 0.5, 1.0), rel=1e-15)
    assert tg.choice_of_L(1, 0.5, 1.0) ** 2 == pytest.approx(512 * math.log(2 + 1 / math.log(4)), rel=1e-14)
    with pytest.raises(tg.TalagrandError):
        tg.choice_of_L(10, 0.7, 1.0)


@given(n1=st.integers(1, 10**6), n2=st.integers(1, 10**6), d1=st.floats(1e-6, 0.5), d2=st.floats(1e-6, 0.5))
def test_choice_of_l_monotone(n1, n2, d1, d2):
    if n1 < n2:
        assert tg.choice_of_L(n1, 0.3, 1.0) < tg.choice_of_L(n2, 0.3, 1.0)
    # log(2 + 1/delta) sits in the denominator, so L shrinks as 1/delta grows
    if d1 < d2:
        assert tg.choice_of_L(50, d1, 1.0) <= tg.choice_of_L(50, d2, 1.0)


def test_exp_moment_examples():
    A = [[0.0, 0.0], [1.0, 1.0]]
    inside = tg.exp_moment_statistic([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]], A, 3.0)
    assert inside.mean == 1.0
    one = tg.exp_moment_statistic([[3.0, 4.0]], [[0.0, 0.0]], 5.0)
    assert one.mean == pytest.approx(math.e, rel=1e-15)
    two = tg.exp_moment_from_distances(np.array([0.0, 5.0]), 5.0)
    assert two.mean == pytest.approx((1 + math.e) / 2, rel=1e-15)
    assert two.upper > two.mean


def test_exp_moment_overflow_is_flagged():
    stat = tg.exp_moment_from_distances(np.array([0.0, 1e3]), 1.0)
    assert stat.overflow and math.isinf(stat.upper)
