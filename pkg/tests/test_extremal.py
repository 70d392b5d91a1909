import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conclab import extremal as ex
from conclab.measures import TwoPoint, psi_p_norm


def oracle_norm_tail(n, theta, alpha, med, t, side):
    """Sum of Bin(n, theta) masses over the counts k whose norm alpha sqrt(k) lies in the tail."""
    th = Fraction(theta)
    total = Fraction(0)
    for k in range(n + 1):
        norm = alpha * math.sqrt(k)
        hit = norm >= med + t - 1e-12 if side == "upper" else norm <= med - t + 1e-12
        if hit:
            total += math.comb(n, k) * th**k * (1 - th) ** (n - k)
    return float(total)


def test_theta_formula_examples():
    t = 10.0
    n = 3 * math.e * t * t
    assert ex.theta_formula(n, t, 1.0, 2.0) == pytest.approx(1 / math.e, rel=1e-14)
    z = 816 / 300
    assert ex.theta_of_t(816, 10.0, 1.0, 2.0, c_b=None) == pytest.approx(1 / (z * math.log(z)), rel=1e-14)
    assert ex.theta_of_t(816, 10.0, 1.0, 2.0, c_b=None) == pytest.approx(0.3674, abs=2e-4)


def test_theta_increases_across_window():
    lo, hi = ex.case1_window(10**4, 1.0, 2.0)
    ts = np.linspace(lo, hi, 50)
    th = [ex.theta_of_t(10**4, t, 1.0, 2.0) for t in ts]
    assert all(a < b for a, b in zip(th, th[1:]))


def test_theta_below_window_uses_left_end_and_above_window_errors():
    lo, hi = ex.case1_window(10**4, 1.0, 2.0)
    assert ex.theta_of_t(10**4, lo / 2, 1.0, 2.0) == ex.theta_of_t(10**4, lo, 1.0, 2.0)
    with pytest.raises(ex.ExtremalError):
        ex.theta_of_t(10**4, hi * 1.01, 1.0, 2.0)
    with pytest.raises(ex.ExtremalError):
        ex.theta_of_t(1000, 5.0, 1.0, 2.0, c_b=0.05)  # empty window


def test_small_instance_examples():
    inst = ex.instance_from_law(4, TwoPoint(0.5, 1.0))
    assert inst.median_norm == pytest.approx(math.sqrt(2))
    t = math.sqrt(3) - math.sqrt(2)
    assert ex.norm_tail_exact(inst, t, "upper") == pytest.approx(5 / 16, rel=1e-14)
    assert ex.norm_tail_exact(inst, 0.0, "upper") >= 0.5
    low = ex.instance_from_law(10, TwoPoint(0.1, 1.0))
    assert ex.norm_tail_exact(low, low.median_norm / 2, "lower") == pytest.approx(0.9**10, rel=1e-14)


def test_coordinate_tail_examples():
    assert ex.coordinate_tail(0.0, 1.0, 1.0) == 0.5
    assert ex.coordinate_tail(1.0, 1.0, 1.0) == pytest.approx(0.5 / math.e, rel=1e-15)
    assert ex.coordinate_tail(2.0, 2.0, 2.0) == pytest.approx(0.5 / math.e, rel=1e-15)


@given(n=st.integers(2, 60), theta=st.floats(0.02, 0.98), alpha=st.floats(0.1, 5), frac=st.floats(0, 1.5),
       side=st.sampled_from(["upper", "lower"]))
@settings(max_examples=200, deadline=None)
def test_norm_tails_match_enumeration(n, theta, alpha, frac, side):
    inst = ex.instance_from_law(n, TwoPoint(theta, alpha))
    t = frac * inst.median_norm + 1e-3
    expected = oracle_norm_tail(n, theta, alpha, inst.median_norm, t, side)
    assert ex.norm_tail_exact(inst, t, side) == pytest.approx(expected, rel=1e-11, abs=1e-300)


@given(n=st.integers(1, 3000), theta=st.floats(1e-3, 0.999))
@settings(max_examples=100, deadline=None)
def test_median_norm_sandwich(n, theta):
    inst = ex.instance_from_law(n, TwoPoint(theta, 1.7))
    assert 1.7 * math.sqrt(math.floor(theta * n)) <= inst.median_norm <= 1.7 * math.sqrt(math.ceil(theta * n))


@pytest.mark.parametrize("n", [10**3, 10**4, 10**5])
def test_sweep_structure(n):
    rep = ex.optimality_sweep(n, 1.0, 2.0, ex.window_grid(n, 1.0, 2.0, 25), seed=3)
    assert list(rep.columns) == list(ex.SWEEP_COLUMNS)
    C = rep.meta["C"]
    assert 1.0 <= C <= 50
    for row in rep.rows:
        assert row["envelope_lower"] <= row["tail_upper_exact"] * (1 + 1e-12)
        assert row["envelope_lower"] <= row["tail_lower_exact"] * (1 + 1e-12)
        assert row["median_norm"] >= row["t"]
        assert psi_p_norm(TwoPoint(row["theta"], row["alpha"]), 2.0).norm <= 1.0 + 1e-9
        assert row["seed"] == 3


def test_sweep_constant_is_stable_in_n():
    Cs = [ex.optimality_sweep(n, 1.0, 2.0, ex.window_grid(n, 1.0, 2.0, 25)).meta["C"] for n in (10**3, 10**5)]
    assert max(Cs) <= 2 * min(Cs)


def test_sweep_gate():
    with pytest.raises(ex.ExtremalError):
        ex.optimality_sweep(500, 1.0, 2.0, [1.0])


def test_local_slope_recovers_power():
    ts = np.geomspace(1, 100, 20)
    assert ex.local_slope(ts, 3.0 * ts**1.7) == pytest.approx(1.7)
