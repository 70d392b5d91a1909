"""Upper and lower tail envelopes, regime crossovers and the truncation schedule.

Every envelope is clamped to [0, 1]. All formulas depend on (t, K) only
through t/K, so rescaling both leaves values unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

# Explicit constant traced through the subgaussian proof (c~ = 1/512 from the
# choice of L, then a further factor 1/4).
PRESET_SUBGAUSSIAN_C = 1.0 / 2048.0

# Smallest t / (K (log n)^{1/p}) for which the truncation index m >= 1 exists.
DEFAULT_SCHEDULE_THRESHOLD = 16.0

CONSTANT_NAMES = ("c", "c_p", "c_tilde", "C_tilde")

PSI_TERM = "psi_p term"
SUBGAUSSIAN_TERM = "subgaussian term"


class EnvelopeError(ValueError):
    pass


@dataclass(frozen=True)
class EnvelopeParams:
    """Scale K, exponent p, dimension n and a map of named constants.

    ``n`` may be any real >= 1 so that ``log n`` can be set directly
    (``EnvelopeParams.from_log_n``).
    """

    K: float
    p: float
    n: float
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.K > 0 and math.isfinite(self.K)):
            raise EnvelopeError(f"K must be positive, got {self.K}")
        if not (1.0 <= self.p <= 2.0):
            raise EnvelopeError(f"p must lie in [1, 2], got {self.p}")
        if not (self.n >= 1):
            raise EnvelopeError(f"n must be at least 1, got {self.n}")
        for name, value in self.constants.items():
            if not (value > 0 and math.isfinite(value)):
                raise EnvelopeError(f"constant {name} must be positive and finite, got {value}")
        object.__setattr__(self, "constants", dict(self.constants))

    @classmethod
    def from_log_n(cls, K, p, log_n, constants=None):
        return cls(K, p, math.exp(log_n), constants or {})

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    def const(self, name: str) -> float:
        try:
            return self.constants[name]
        except KeyError:
            raise EnvelopeError(f"constant {name!r} missing (have {sorted(self.constants)})") from None

    def with_constants(self, **values) -> "EnvelopeParams":
        merged = dict(self.constants)
        merged.update(values)
        return EnvelopeParams(self.K, self.p, self.n, merged)


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def _check_t(t):
    if not (t >= 0 and math.isfinite(t)):
        raise EnvelopeError(f"t must be a nonnegative finite real, got {t}")


def subgaussian_exponent(params: EnvelopeParams, t: float) -> float:
    """t^2 / (K^2 log(2 + K^2 n / t^2)); zero at t = 0."""
    _check_t(t)
    if t == 0:
        return 0.0
    s2 = (t / params.K) ** 2
    if s2 == 0.0:  # t so small that t^2 underflows
        return 0.0
    return s2 / math.log(2.0 + params.n / s2)


def subgaussian_envelope(params: EnvelopeParams, t: float) -> float:
    """min(1, exp(-c t^2 / (K^2 log(2 + K^2 n / t^2)))), the same for both tails."""
    if params.p != 2.0:
        raise EnvelopeError("the subgaussian envelope needs p = 2")
    return _clamp(math.exp(-params.const("c") * subgaussian_exponent(params, t)))


def _psip_exponents(params: EnvelopeParams, t: float) -> tuple[float, float]:
    _check_t(t)
    s = t / params.K
    return s**params.p, s * s / params.log_n ** (2.0 / params.p)


def psip_envelope(params: EnvelopeParams, t: float) -> tuple[float, str]:
    """min(1, 2 exp(-c_p (t/K)^p) + 2 exp(-c_p t^2 / (K^2 (log n)^{2/p}))) and the larger term's tag."""
    if not (1.0 <= params.p < 2.0):
        raise EnvelopeError("the two-level envelope needs p in [1, 2)")
    if params.n < 2:
        raise EnvelopeError("the two-level envelope needs n >= 2")
    c_p = params.const("c_p")
    e_psi, e_sub = _psip_exponents(params, t)
    first = 2.0 * math.exp(-c_p * e_psi)
    second = 2.0 * math.exp(-c_p * e_sub)
    # ties go to the subgaussian term so the tag flips strictly after t_switch
    tag = PSI_TERM if e_psi < e_sub else SUBGAUSSIAN_TERM
    return _clamp(first + second), tag


def lower_envelope(params: EnvelopeParams, t: float, which: str) -> float:
    """Matching lower envelopes, with c~ in front and C~ in the exponents.

    ``which="psip"``: c~ max(exp(-C~ t^2/(K^2 (log n)^{2/p})), exp(-C~ (t/K)^p)).
    ``which="subgaussian"``: c~ exp(-C~ t^2/(K^2 log(2 + K^2 n/t^2))).
    """
    c_lo = params.const("c_tilde")
    C_hi = params.const("C_tilde")
    if which == "psip":
        e_psi, e_sub = _psip_exponents(params, t)
        return _clamp(c_lo * math.exp(-C_hi * min(e_psi, e_sub)))
    if which == "subgaussian":
        return _clamp(c_lo * math.exp(-C_hi * subgaussian_exponent(params, t)))
    raise EnvelopeError(f"unknown lower envelope {which!r}; expected 'psip' or 'subgaussian'")


@dataclass(frozen=True)
class Crossover:
    t_no_conc: float
    t_switch: float
    overflow: bool


def regime_crossover(params: EnvelopeParams) -> Crossover:
    """K (log n)^{1/p} and K (log n)^{2/(p(2-p))}.

    ``overflow`` is set (and ``t_switch`` is inf) when the second value is
    not representable, which happens as p approaches 2.
    """
    p = params.p
    if p >= 2.0:
        raise EnvelopeError("regime crossover is undefined at p = 2 (the exponent 2/(p(2-p)) is singular)")
    L = params.log_n
    t_no = params.K * L ** (1.0 / p)
    if L <= 0:
        return Crossover(t_no, 0.0, False)
    log_switch = math.log(params.K) + 2.0 / (p * (2.0 - p)) * math.log(L)
    if log_switch > 709.0:
        return Crossover(t_no, math.inf, True)
    return Crossover(t_no, math.exp(log_switch), False)


@dataclass(frozen=True)
class TruncationSchedule:
    """Index m, weights u_1, u_2, ... and truncation levels 2 * 2^k K (log n)^{1/p}.

    At p = 2 the weights are constant in k and cannot be normalized; ``u``
    is then empty and ``c_tilde`` is None.
    """

    m: int
    ratio: float
    c_tilde: float | None
    u: tuple[float, ...]
    levels: tuple[float, ...]

    @property
    def tail_remainder(self) -> float:
        """Mass of the weights beyond the stored ones."""
        if self.c_tilde is None:
            return math.inf
        j = len(self.u) + 1 - self.m
        return self.c_tilde * self.ratio**j / (1.0 - self.ratio)


def truncation_index(params: EnvelopeParams, t: float) -> int:
    """Largest integer m with t^2 / (2^{2m+6} K^2 (log n)^{2/p}) >= 1."""
    L = params.log_n
    if L <= 0:
        raise EnvelopeError("truncation schedule needs n > 1")
    x = (t / params.K) ** 2 / L ** (2.0 / params.p)
    if x <= 0:
        raise EnvelopeError("t must be positive")
    m = math.floor((math.log2(x) - 6.0) / 2.0)
    # guard the floor against log2 roundoff at exact powers of two
    while x < 2.0 ** (2 * m + 6):
        m -= 1
    while x >= 2.0 ** (2 * m + 8):
        m += 1
    return m


def truncation_schedule(params: EnvelopeParams, t: float, threshold: float = DEFAULT_SCHEDULE_THRESHOLD,
                        remainder_tol: float = 1e-13) -> TruncationSchedule:
    """Weights u_k = c~ r^{|m-k|}, r = 2^{-(2-p)/4}, normalized so that sum_k u_k = 1/2."""
    L = params.log_n
    if L <= 0:
        raise EnvelopeError("truncation schedule needs n > 1")
    if t < threshold * params.K * L ** (1.0 / params.p):
        raise EnvelopeError(
            f"no valid m: t={t} is below {threshold} K (log n)^(1/p) = {threshold * params.K * L ** (1.0 / params.p)}"
        )
    m = truncation_index(params, t)
    if m < 1:
        raise EnvelopeError(f"no valid m: largest admissible index is {m}")
    ratio = 2.0 ** (-(2.0 - params.p) / 4.0)
    base = 2.0 * params.K * L ** (1.0 / params.p)
    if ratio >= 1.0:
        levels = tuple(base * 2.0**k for k in range(1, m + 1))
        return TruncationSchedule(m, ratio, None, (), levels)
    series = (1.0 - ratio**m) / (1.0 - ratio) + ratio / (1.0 - ratio)
    c_tilde = 1.0 / (2.0 * series)
    # stop once the geometric remainder c~ r^{j}/(1-r) past k = m + j - 1 is negligible
    extra = max(0, math.ceil(math.log(remainder_tol * (1.0 - ratio) / c_tilde) / math.log(ratio)))
    count = m + extra
    u = tuple(c_tilde * ratio ** abs(m - k) for k in range(1, count + 1))
    levels = tuple(base * 2.0**k for k in range(1, count + 1))
    return TruncationSchedule(m, ratio, c_tilde, u, levels)
