import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from conclab import envelopes as env
from conclab.envelopes import EnvelopeParams


def sub(K=1.0, n=100.0, c=1.0):
    return EnvelopeParams(K, 2.0, n, {"c": c})


def test_subgaussian_examples():
    t = 10.0
    assert math.log(env.subgaussian_envelope(sub(n=t * t), t)) == pytest.approx(-t * t / math.log(3), rel=1e-14)
    assert math.log(env.subgaussian_envelope(sub(n=t * t), t)) == pytest.approx(-91.024, abs=1e-3)
    # exp(-100 / (4 log 6))
    assert math.log(env.subgaussian_envelope(sub(K=2.0, n=100.0), 10.0)) == pytest.approx(-100 / (4 * math.log(6)),
                                                                                       rel=1e-14)
    assert env.subgaussian_envelope(sub(), 1e-9) == pytest.approx(1.0)
    assert env.subgaussian_envelope(sub(), 0.0) == 1.0


def test_subgaussian_requires_p2_and_constant():
    with pytest.raises(env.EnvelopeError):
        env.subgaussian_envelope(EnvelopeParams(1.0, 1.5, 10.0, {"c": 1.0}), 1.0)
    with pytest.raises(env.EnvelopeError):
        env.subgaussian_envelope(EnvelopeParams(1.0, 2.0, 10.0), 1.0)
    with pytest.raises(env.EnvelopeError):
        env.subgaussian_envelope(sub(), -1.0)


def test_psip_examples():
    p = EnvelopeParams(1.0, 1.0, 3.0, {"c_p": 1.0})
    value, _ = env.psip_envelope(p, 1.0)
    raw = 2 * math.exp(-1) + 2 * math.exp(-1 / math.log(3) ** 2)
    assert raw == pytest.approx(1.609, abs=1e-3)
    assert value == 1.0
    assert env.psip_envelope(EnvelopeParams(1.0, 1.0, 1000.0, {"c_p": 1.0}), 1e4)[1] == env.PSI_TERM
    big = EnvelopeParams.from_log_n(1.0, 1.0, 100.0, {"c_p": 1.0})
    assert env.psip_envelope(big, 50.0)[1] == env.SUBGAUSSIAN_TERM


def test_lower_envelope_examples():
    t = 7.0
    p = EnvelopeParams(1.0, 2.0, t * t, {"c_tilde": 1.0, "C_tilde": 1.0})
    assert env.lower_envelope(p, t, "subgaussian") == pytest.approx(math.exp(-t * t / math.log(3)), rel=1e-14)
    assert env.lower_envelope(p, t, "subgaussian") == pytest.approx(
        env.subgaussian_envelope(EnvelopeParams(1.0, 2.0, t * t, {"c": 1.0}), t), rel=1e-14)
    q = EnvelopeParams(1.0, 1.0, 3.0, {"c_tilde": 1.0, "C_tilde": 1.0})
    expected = max(math.exp(-1 / math.log(3) ** 2), math.exp(-1))
    assert env.lower_envelope(q, 1.0, "psip") == pytest.approx(expected, rel=1e-14)
    assert env.lower_envelope(q, 1.0, "psip") == pytest.approx(0.43669, abs=1e-5)
    q2 = EnvelopeParams(1.0, 1.0, 3.0, {"c_tilde": 0.3, "C_tilde": 2.0})
    assert env.lower_envelope(q2, 0.0, "psip") == 0.3
    with pytest.raises(env.EnvelopeError):
        env.lower_envelope(q2, 1.0, "other")


def test_crossover_examples():
    c = env.regime_crossover(EnvelopeParams.from_log_n(1.0, 1.0, 10.0))
    assert c.t_no_conc == pytest.approx(10.0, rel=1e-14)
    assert c.t_switch == pytest.approx(100.0, rel=1e-12)
    near_two = env.regime_crossover(EnvelopeParams.from_log_n(1.0, 1.999, 10.0))
    assert near_two.overflow and math.isinf(near_two.t_switch)
    with pytest.raises(env.EnvelopeError):
        env.regime_crossover(EnvelopeParams.from_log_n(1.0, 2.0, 10.0))
    c3 = env.regime_crossover(EnvelopeParams.from_log_n(3.0, 1.3, 10.0))
    c1 = env.regime_crossover(EnvelopeParams.from_log_n(1.0, 1.3, 10.0))
    assert c3.t_no_conc == pytest.approx(3 * c1.t_no_conc) and c3.t_switch == pytest.approx(3 * c1.t_switch)


def test_truncation_schedule_examples():
    s = env.truncation_schedule(EnvelopeParams.from_log_n(1.0, 2.0, 1.0), 16.0)
    assert s.m == 1
    assert s.c_tilde is None
    s5 = env.truncation_schedule(EnvelopeParams.from_log_n(1.0, 1.0, 1.0), 300.0)
    assert s5.m == 5
    assert abs(math.fsum(s5.u) + s5.tail_remainder - 0.5) <= 1e-10
    assert abs(math.fsum(s5.u) - 0.5) <= 1e-10
    s3 = env.truncation_schedule(EnvelopeParams.from_log_n(1.0, 1.0, 1.0), 100.0)
    assert s3.m == 3
    assert max(s3.u) == s3.u[2] == s3.c_tilde
    for k in range(1, len(s3.u) + 1):
        for j in range(1, len(s3.u) + 1):
            if abs(3 - k) < abs(3 - j):
                assert s3.u[k - 1] > s3.u[j - 1]


def test_truncation_schedule_rejects_small_t():
    with pytest.raises(env.EnvelopeError):
        env.truncation_schedule(EnvelopeParams.from_log_n(1.0, 1.0, 1.0), 15.0)


def _all_envelopes(K, n, t, p):
    consts = {"c": 0.7, "c_p": 0.7, "c_tilde": 0.4, "C_tilde": 1.3}
    out = [env.lower_envelope(EnvelopeParams(K, p, n, consts), t, "psip")]
    out.append(env.lower_envelope(EnvelopeParams(K, p, n, consts), t, "subgaussian"))
    if p < 2:
        out.append(env.psip_envelope(EnvelopeParams(K, p, n, consts), t)[0])
    else:
        out.append(env.subgaussian_envelope(EnvelopeParams(K, p, n, consts), t))
    return out


pos = st.floats(1e-3, 1e3, allow_nan=False)


@given(K=st.floats(0.1, 10), n=st.floats(2, 1e8), t=st.floats(0, 100), s=st.floats(0.01, 100),
       p=st.sampled_from([1.0, 1.3, 1.7, 2.0]))
def test_homogeneity(K, n, t, s, p):
    a = _all_envelopes(K, n, t, p)
    b = _all_envelopes(s * K, n, s * t, p)
    for x, y in zip(a, b):
        assert y == pytest.approx(x, rel=1e-9, abs=1e-300)


@given(K=st.floats(0.1, 10), n=st.floats(2, 1e8), t1=st.floats(0, 200), t2=st.floats(0, 200),
       p=st.sampled_from([1.0, 1.5, 2.0]))
def test_envelopes_in_unit_interval_and_nonincreasing(K, n, t1, t2, p):
    lo, hi = min(t1, t2), max(t1, t2)
    for a, b in zip(_all_envelopes(K, n, lo, p), _all_envelopes(K, n, hi, p)):
        assert 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0
        assert b <= a * (1 + 1e-12)


@given(K=st.floats(0.1, 10), n1=st.floats(1, 1e9), n2=st.floats(1, 1e9), t=st.floats(1e-3, 100))
def test_subgaussian_nondecreasing_in_n(K, n1, n2, t):
    lo, hi = min(n1, n2), max(n1, n2)
    assert env.subgaussian_envelope(sub(K, lo), t) <= env.subgaussian_envelope(sub(K, hi), t) * (1 + 1e-12)


@given(n=st.floats(3, 1e12), p=st.floats(1.0, 1.9), K=st.floats(0.5, 2))
@settings(max_examples=60)
def test_psip_tag_flips_once(n, p, K):
    params = EnvelopeParams(K, p, n, {"c_p": 1.0})
    cross = env.regime_crossover(params)
    assume(not cross.overflow)
    ts = [cross.t_switch * 2.0 ** (k / 4) for k in range(-40, 41)]
    tags = [env.psip_envelope(params, t)[1] for t in ts]
    flips = sum(a != b for a, b in zip(tags, tags[1:]))
    assert flips == 1
    assert tags[0] == env.SUBGAUSSIAN_TERM and tags[-1] == env.PSI_TERM


def test_params_validation():
    for bad in [dict(K=0.0, p=2.0, n=10.0), dict(K=1.0, p=0.5, n=10.0), dict(K=1.0, p=2.0, n=0.5)]:
        with pytest.raises(env.EnvelopeError):
            EnvelopeParams(**bad)
    with pytest.raises(env.EnvelopeError):
        EnvelopeParams(1.0, 2.0, 10.0, {"c": -1.0})
    assert env.PRESET_SUBGAUSSIAN_C == 1 / 2048
