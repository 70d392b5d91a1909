import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conclab import harness as hs
from conclab.measures import TwoPoint, make_exp_power, point_mass, rademacher


def test_seed_derivation_is_deterministic_and_label_sensitive():
    assert hs.derive_seed(7, "tail", 3) == hs.derive_seed(7, "tail", 3)
    assert hs.derive_seed(7, "tail") != hs.derive_seed(7, "median")
    assert hs.derive_seed(7, 1, 2) != hs.derive_seed(7, 2, 1)
    assert hs.derive_seed(7) == 7
    # reference value of the splitmix64 step for state 0
    assert hs.splitmix64(0) == 0xE220A8397B1DCDAF


def test_median_examples():
    lin = hs.linear(np.eye(3)[0])
    assert hs.estimate_median(lin, hs.ProductLaw.iid(rademacher(), 3), 1000, 0).value == -1.0
    assert hs.estimate_median(hs.euclidean_norm(), hs.ProductLaw.iid(point_mass(0.0), 4), 1000, 0).value == 0.0
    med = hs.estimate_median(hs.euclidean_norm(), hs.ProductLaw.iid(TwoPoint(0.5, 1.0), 4), 1000, 0)
    assert med.method == "exact" and med.value == pytest.approx(math.sqrt(2))


def test_mc_median_is_order_statistic():
    law = hs.ProductLaw.iid(make_exp_power(2.0, 1.0), 3)
    med = hs.estimate_median(hs.euclidean_norm(), law, 2001, 4)
    vals = hs.function_values(hs.euclidean_norm(), law, 2001, 4)
    assert med.method == "mc" and med.value == np.sort(vals)[1000]


def test_tail_examples():
    lin = hs.linear(np.eye(3)[0])
    law = hs.ProductLaw.iid(rademacher(), 3)
    est = hs.estimate_tail(lin, law, 2.0, "upper", 20000, 1)
    assert est.ci_low <= 0.5 <= est.ci_high
    far = hs.estimate_tail(hs.euclidean_norm(), hs.ProductLaw.iid(make_exp_power(2.0, 1.0), 3), 1e6, "upper", 5000, 1)
    assert far.estimate == 0.0 and far.ci_low == 0.0
    tp = hs.ProductLaw.iid(TwoPoint(0.5, 1.0), 4)
    t = math.sqrt(3) - math.sqrt(2)
    assert hs.estimate_tail(hs.euclidean_norm(), tp, t, "upper", 1000, 0, method="exact").estimate == pytest.approx(5 / 16)
    mc = hs.estimate_tail(hs.euclidean_norm(), tp, t, "upper", 40000, 2)
    assert mc.ci_low <= 5 / 16 <= mc.ci_high


def test_sample_size_floor():
    with pytest.raises(hs.HarnessError):
        hs.estimate_median(hs.euclidean_norm(), hs.ProductLaw.iid(rademacher(), 2), 999, 0)
    with pytest.raises(hs.HarnessError):
        hs.estimate_tail(hs.euclidean_norm(), hs.ProductLaw.iid(rademacher(), 2), 1.0, "upper", 10, 0)
    with pytest.raises(hs.HarnessError):
        hs.tail_from_values(np.zeros(3), 0.0, 1.0, "middle")


@given(m=st.integers(1, 400), data=st.data())
@settings(max_examples=200)
def test_clopper_pearson_matches_beta_quantiles(m, data):
    k = data.draw(st.integers(0, m))
    lo, hi = hs.clopper_pearson(k, m)
    assert 0.0 <= lo <= k / m <= hi <= 1.0
    # the endpoints are where the binomial tails hit 0.005
    if k > 0:
        assert stats.binom.sf(k - 1, m, lo) == pytest.approx(0.005, rel=1e-6)
    if k < m:
        assert stats.binom.cdf(k, m, hi) == pytest.approx(0.005, rel=1e-6)


def test_clopper_pearson_coverage():
    rng = np.random.default_rng(11)
    p, m, reps = 0.3, 200, 2000
    ks = rng.binomial(m, p, size=reps)
    covered = sum(lo <= p <= hi for lo, hi in (hs.clopper_pearson(int(k), m) for k in ks))
    assert covered / reps >= 0.985


def test_mc_intervals_cover_exact_tails():
    law = hs.ProductLaw.iid(TwoPoint(0.3, 1.0), 6)
    f = hs.euclidean_norm()
    cases = [(t, side) for t in (0.1, 0.4, 0.8) for side in ("upper", "lower")]
    exact = {c: hs.estimate_tail(f, law, c[0], c[1], 1000, 0, method="exact").estimate for c in cases}
    reps, hits = 50, 0
    for r in range(reps):
        for t, side in cases:
            est = hs.estimate_tail(f, law, t, side, 2000, 100 + r)
            hits += est.ci_low <= exact[(t, side)] <= est.ci_high
    assert hits / (reps * len(cases)) >= 0.95


def test_exact_law_of_linear_rademacher_sum():
    law = hs.ProductLaw.iid(rademacher(), 4)
    vals, probs = hs.exact_law(hs.linear(np.ones(4)), law)
    assert vals == pytest.approx([-2, -1, 0, 1, 2])
    assert probs == [Fraction(math.comb(4, k), 16) for k in range(5)]
    assert hs.exact_law(hs.euclidean_norm(), hs.ProductLaw.iid(make_exp_power(1.0, 1.0), 2)) is None


def test_max_coordinate_exact_law():
    law = hs.ProductLaw.iid(TwoPoint(0.25, 2.0), 3)
    vals, probs = hs.exact_law(hs.max_coordinate(), law)
    assert vals == [0.0, 2.0]
    assert probs == [Fraction(27, 64), Fraction(37, 64)]


def test_streams_are_reproducible_and_chunk_invariant():
    law = hs.ProductLaw.iid(make_exp_power(1.5, 1.0), 3)
    a = law.sample(500, 9)
    b = np.concatenate(list(law.chunks(500, 9)))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, law.sample(500, 10))


@pytest.mark.parametrize("f", [hs.euclidean_norm(), hs.linear(np.arange(1.0, 6.0)), hs.max_coordinate(),
                               hs.dist_to_convex(np.random.default_rng(0).normal(size=(6, 5)))])
def test_functions_pass_audit(f):
    assert f.audit(5, seed=1) == []


def test_audit_flags_non_lipschitz():
    f = hs.TestFunction("euclidean_norm", lipschitz=0.5)
    assert any("Lipschitz" in s for s in f.audit(3))


def test_function_validation_and_parsing(tmp_path):
    with pytest.raises(hs.HarnessError):
        hs.TestFunction("sine")
    with pytest.raises(hs.HarnessError):
        hs.TestFunction("linear", a=np.array([1.0, 1.0]))
    assert np.allclose(hs.parse_function("linear", 3).a, [1, 0, 0])
    assert np.allclose(hs.parse_function("linear:uniform", 4).a, 0.5)
    with pytest.raises(hs.HarnessError):
        hs.parse_function("linear:1,2", 3)
    pts = tmp_path / "s.txt"
    pts.write_text("0 0\n1 0\n0 1\n")
    f = hs.parse_function(f"dist_to_convex:{pts}", 2)
    assert f(np.array([[2.0, 2.0]]))[0] == pytest.approx(1.5 * math.sqrt(2))


def test_scaled_law_and_fit_bound_homogeneity():
    law = TwoPoint(0.2, 1.0)
    assert hs.scaled_law(law, 3.0) == TwoPoint(0.2, 3.0)
    # the largest admissible c for a tail value is invariant under (K, t) -> (sK, st)
    for s in (0.5, 2.0, 7.0):
        assert hs.subgaussian_fit_bound(s * 1.3, 100, s * 2.5, 1e-3) == pytest.approx(
            hs.subgaussian_fit_bound(1.3, 100, 2.5, 1e-3), rel=1e-12)
    assert hs.subgaussian_fit_bound(1.0, 100, 1.0, 1.0) == 0.0


def test_small_envelope_audit():
    cfg = hs.default_audit_config(samples=20000, seed=3)
    cfg.cases = cfg.cases[:2]
    cfg.t_multipliers = (0.5, 1.0, 2.0)
    rep = hs.verify_upper_envelopes(cfg)
    assert list(rep.columns) == list(hs.AUDIT_COLUMNS)
    assert rep.meta["violations"] == 0
    assert all(c > 0 for c in rep.meta["fits"].values())
    assert len(rep.rows) == 2 * 3 * 3 * 2
