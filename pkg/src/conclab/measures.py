"""One-dimensional laws: exact tails, psi_p norms, truncation and sampling."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate


class LawError(ValueError):
    """Invalid law parameters."""


class UnboundedMomentError(ArithmeticError):
    """E exp(|X|^p / lam^p) is infinite for every lam > 0."""


def _check_p(p):
    if not (1.0 <= p <= 2.0):
        raise LawError(f"exponent p must lie in [1, 2], got {p}")


class ScalarLaw:
    """Base class. Subclasses are frozen dataclasses."""

    def tail(self, t: float) -> float:
        """P{X >= t}."""
        raise NotImplementedError

    def cdf(self, t: float) -> float:
        """P{X <= t}."""
        raise NotImplementedError

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Generalized inverse CDF, inf{x : F(x) >= u}, for u in (0, 1)."""
        raise NotImplementedError

    def psi_moment(self, lam: float, q: float) -> float:
        """E exp(|X|^q / lam^q); may return inf."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @property
    def is_discrete(self) -> bool:
        return False


@dataclass(frozen=True)
class TwoPoint(ScalarLaw):
    """Mass ``theta`` at ``alpha`` and ``1 - theta`` at 0."""

    theta: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise LawError(f"theta must lie in (0, 1), got {self.theta}")
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise LawError(f"alpha must be finite and nonnegative, got {self.alpha}")

    @property
    def is_discrete(self):
        return True

    def atoms(self):
        return ((0.0, 1.0 - self.theta), (self.alpha, self.theta))

    def tail(self, t):
        if t <= 0.0:
            return 1.0
        return self.theta if t <= self.alpha else 0.0

    def cdf(self, t):
        if t < 0.0:
            return 0.0
        return 1.0 if t >= self.alpha else 1.0 - self.theta

    def ppf(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.where(u <= 1.0 - self.theta, 0.0, self.alpha)

    def psi_moment(self, lam, q):
        if self.alpha == 0.0:
            return 1.0
        if lam <= 0.0:
            return math.inf
        z = (self.alpha / lam) ** q
        if z > 700.0:
            return math.inf
        return (1.0 - self.theta) + self.theta * math.exp(z)

    def to_dict(self):
        return {"variant": "two_point", "theta": self.theta, "alpha": self.alpha}


@dataclass(frozen=True)
class SymmetricExpPower(ScalarLaw):
    """Symmetric law with P{X >= t} = P{X <= -t} = exp(-(t/scale)^p) / 2."""

    p: float
    scale: float

    def __post_init__(self):
        _check_p(self.p)
        if not self.scale > 0.0:
            raise LawError(f"scale must be positive, got {self.scale}")

    def abs_tail(self, s):
        """P{|X| >= s} for s >= 0."""
        return math.exp(-((s / self.scale) ** self.p)) if s > 0.0 else 1.0

    def tail(self, t):
        if t >= 0.0:
            return 0.5 * math.exp(-((t / self.scale) ** self.p))
        return 1.0 - 0.5 * math.exp(-((-t / self.scale) ** self.p))

    def cdf(self, t):
        return 1.0 - self.tail(t)

    def ppf(self, u):
        u = np.asarray(u, dtype=np.float64)
        lo = u < 0.5
        w = np.where(lo, 2.0 * u, 2.0 * (1.0 - u))
        mag = self.scale * (-np.log(w)) ** (1.0 / self.p)
        return np.where(lo, -mag, mag)

    def psi_moment(self, lam, q):
        return _continuous_psi_moment(self, lam, q, math.inf)

    def to_dict(self):
        return {"variant": "exp_power", "p": self.p, "scale": self.scale}


@dataclass(frozen=True)
class FiniteDiscrete(ScalarLaw):
    """Finitely many atoms with exact rational probabilities."""

    atoms: tuple

    def __post_init__(self):
        merged = {}
        for value, prob in self.atoms:
            value = float(value)
            prob = Fraction(prob)
            if not math.isfinite(value):
                raise LawError("atoms must be finite")
            if prob < 0:
                raise LawError("probabilities must be nonnegative")
            if prob > 0:
                merged[value] = merged.get(value, Fraction(0)) + prob
        if not merged:
            raise LawError("law needs at least one atom of positive mass")
        if sum(merged.values()) != 1:
            raise LawError(f"probabilities sum to {sum(merged.values())}, not 1")
        object.__setattr__(self, "atoms", tuple(sorted(merged.items())))

    @property
    def is_discrete(self):
        return True

    def tail_exact(self, t) -> Fraction:
        return sum((p for v, p in self.atoms if v >= t), Fraction(0))

    def cdf_exact(self, t) -> Fraction:
        return sum((p for v, p in self.atoms if v <= t), Fraction(0))

    def tail(self, t):
        return float(self.tail_exact(t))

    def cdf(self, t):
        return float(self.cdf_exact(t))

    def ppf(self, u):
        values = np.array([v for v, _ in self.atoms])
        cum = np.cumsum([float(p) for _, p in self.atoms])
        cum[-1] = 1.0
        idx = np.searchsorted(cum, np.asarray(u, dtype=np.float64), side="left")
        return values[np.minimum(idx, len(values) - 1)]

    def psi_moment(self, lam, q):
        big = max(abs(v) for v, _ in self.atoms)
        if big == 0.0:
            return 1.0
        if lam <= 0.0:
            return math.inf
        logs = [math.log(float(p)) + (abs(v) / lam) ** q for v, p in self.atoms]
        top = max(logs)
        if top > 700.0:
            return math.inf
        return math.fsum(math.exp(x) for x in logs)

    def to_dict(self):
        return {
            "variant": "discrete",
            "atoms": [[v, f"{p.numerator}/{p.denominator}"] for v, p in self.atoms],
        }


@dataclass(frozen=True)
class Truncated(ScalarLaw):
    """Law of X * 1{|X| <= level} for a continuous symmetric base law."""

    base: SymmetricExpPower
    level: float

    def __post_init__(self):
        if not isinstance(self.base, SymmetricExpPower):
            raise LawError("Truncated wraps continuous laws only; use truncate() for discrete laws")
        if not self.level > 0.0:
            raise LawError(f"truncation level must be positive, got {self.level}")

    @property
    def atom_at_zero(self) -> float:
        """P{Y = 0} = P{|X| > level}."""
        return self.base.abs_tail(self.level)

    def cdf(self, t):
        L = self.level
        if t < -L:
            return 0.0
        if t < 0.0:
            return self.base.cdf(t) - self.base.cdf(-L)
        if t >= L:
            return 1.0
        return 1.0 - (self.base.cdf(L) - self.base.cdf(t))

    def tail(self, t):
        L = self.level
        if t > L:
            return 0.0
        if t > 0.0:
            return self.base.tail(t) - self.base.tail(L)
        if t <= -L:
            return 1.0
        # P{Y >= t} = 1 - P{-L <= X < t} for -L < t <= 0
        return 1.0 - (self.base.cdf(t) - self.base.cdf(-L))

    def ppf(self, u):
        x = self.base.ppf(u)
        return np.where(np.abs(x) <= self.level, x, 0.0)

    def psi_moment(self, lam, q):
        return _continuous_psi_moment(self.base, lam, q, self.level)

    def to_dict(self):
        return {"variant": "truncated", "base": self.base.to_dict(), "level": self.level}


def _continuous_psi_moment(base, lam, q, level):
    """E exp(|Y|^q/lam^q) for Y = X 1{|X| <= level}, X symmetric exp-power.

    Integration by parts against the tail of |X|:
        E = 1 + int_0^level g'(s) P{|X| > s} ds   (atom at 0 contributes P{|X| > level}),
    with g(s) = exp((s/lam)^q).
    """
    if lam <= 0.0:
        return math.inf
    K, p = base.scale, base.p
    finite_level = math.isfinite(level)
    if not finite_level:
        if q > p:
            raise UnboundedMomentError(f"psi_{q} moment is infinite for a tail of order exp(-t^{p})")
        if q == p:
            r = (K / lam) ** p
            return 1.0 / (1.0 - r) if r < 1.0 else math.inf
    # largest exponent reached on the integration range
    if q < p:
        s_star = (q * K**p / (p * lam**q)) ** (1.0 / (p - q))
        if finite_level:
            s_star = min(s_star, level)
        peak = (s_star / lam) ** q - (s_star / K) ** p
    else:
        peak = max((level / lam) ** q - (level / K) ** p, 0.0)
    if peak > 700.0:
        return math.inf

    def integrand(s):
        if s <= 0.0:
            return 0.0 if q > 1.0 else 1.0 / lam
        return q * s ** (q - 1.0) / lam**q * math.exp((s / lam) ** q - (s / K) ** p)

    upper = level if finite_level else math.inf
    val, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=400)
    return 1.0 + val


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def make_two_point(theta: float, K: float, p: float) -> TwoPoint:
    """Two-point law with atom K (log 1/theta)^(1/p) carrying mass theta."""
    _check_p(p)
    if not (0.0 < theta < 1.0):
        raise LawError(f"theta must lie in (0, 1), got {theta}")
    if not K > 0.0:
        raise LawError(f"K must be positive, got {K}")
    return TwoPoint(theta, K * math.log(1.0 / theta) ** (1.0 / p))


def make_exp_power(p: float, scale: float) -> SymmetricExpPower:
    return SymmetricExpPower(p, scale)


def point_mass(value: float) -> FiniteDiscrete:
    return FiniteDiscrete(((value, 1),))


def rademacher() -> FiniteDiscrete:
    return FiniteDiscrete(((-1.0, Fraction(1, 2)), (1.0, Fraction(1, 2))))


def truncate(law: ScalarLaw, level: float) -> ScalarLaw:
    """Law of X * 1{|X| <= level}; mass beyond the level moves to the atom at 0."""
    if not level > 0.0:
        raise LawError(f"truncation level must be positive, got {level}")
    if isinstance(law, TwoPoint):
        if law.alpha <= level:
            return law
        return point_mass(0.0)
    if isinstance(law, FiniteDiscrete):
        return FiniteDiscrete(tuple((v if abs(v) <= level else 0.0, p) for v, p in law.atoms))
    if isinstance(law, Truncated):
        return Truncated(law.base, min(law.level, level))
    if isinstance(law, SymmetricExpPower):
        return Truncated(law, level)
    raise LawError(f"cannot truncate {type(law).__name__}")


# ---------------------------------------------------------------------------
# psi_p norm
# ---------------------------------------------------------------------------


def _is_zero_law(law):
    if isinstance(law, TwoPoint):
        return law.alpha == 0.0
    if isinstance(law, FiniteDiscrete):
        return all(v == 0.0 for v, _ in law.atoms)
    return False


@dataclass(frozen=True)
class PsiPCertificate:
    p: float
    norm: float
    moment_at_norm: float


def psi_p_norm(law: ScalarLaw, p: float, rtol: float = 1e-10) -> PsiPCertificate:
    """inf{lam > 0 : E exp(|X|^p / lam^p) <= 2} by bisection on lam.

    The moment is nonincreasing in lam, so the bracket [lo, hi] keeps
    moment(lo) > 2 >= moment(hi) throughout; ``norm`` is the final ``hi``.
    """
    _check_p(p)
    if _is_zero_law(law):
        return PsiPCertificate(p, 0.0, 1.0)

    hi = 1.0
    while law.psi_moment(hi, p) > 2.0:
        hi *= 2.0
    lo = hi / 2.0
    while law.psi_moment(lo, p) <= 2.0:
        hi = lo
        lo /= 2.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if law.psi_moment(mid, p) > 2.0:
            lo = mid
        else:
            hi = mid
    return PsiPCertificate(p, hi, law.psi_moment(hi, p))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def uniform_open(rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    k = rng.integers(0, 2**53, size=count, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) * 2.0**-53


def sample(law: ScalarLaw, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. draws by inverse CDF from a PCG64 stream."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(np.uint64(seed % 2**64))
    return law.ppf(uniform_open(rng, count))


# ---------------------------------------------------------------------------
# text form
# ---------------------------------------------------------------------------


def law_from_dict(d: dict) -> ScalarLaw:
    d = dict(d)
    variant = d.pop("variant", None)
    try:
        if variant == "two_point":
            if "alpha" in d:
                law = TwoPoint(float(d.pop("theta")), float(d.pop("alpha")))
            else:
                law = make_two_point(float(d.pop("theta")), float(d.pop("K")), float(d.pop("p")))
        elif variant == "exp_power":
            law = SymmetricExpPower(float(d.pop("p")), float(d.pop("scale")))
        elif variant == "discrete":
            law = FiniteDiscrete(tuple((float(v), Fraction(str(pr))) for v, pr in d.pop("atoms")))
        elif variant == "truncated":
            law = truncate(law_from_dict(d.pop("base")), float(d.pop("level")))
        elif variant == "rademacher":
            law = rademacher()
        elif variant == "point_mass":
            law = point_mass(float(d.pop("value")))
        else:
            raise LawError(f"unknown law variant {variant!r}")
    except KeyError as exc:
        raise LawError(f"law {variant!r} is missing field {exc}") from None
    if d:
        raise LawError(f"unknown fields for {variant!r}: {sorted(d)}")
    return law


def law_to_json(law: ScalarLaw) -> str:
    return json.dumps(law.to_dict(), sort_keys=True)


def parse_law(spec: str) -> ScalarLaw:
    """Parse a law literal.

    Accepts JSON (``{"variant": "two_point", "theta": 0.2, "alpha": 1}``) or
    the short form ``name:key=value,key=value``, e.g. ``rademacher``,
    ``two_point:theta=0.2,K=1,p=2`` or ``exp_power:p=1,scale=2``.
    """
    spec = spec.strip()
    if spec.startswith("{"):
        try:
            return law_from_dict(json.loads(spec))
        except json.JSONDecodeError as exc:
            raise LawError(f"bad law JSON: {exc}") from None
    name, _, rest = spec.partition(":")
    fields: dict = {"variant": name.strip()}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise LawError(f"expected key=value, got {item!r}")
        fields[key.strip()] = value.strip()
    return law_from_dict(fields)


def lower_median_discrete(values: Sequence[float], probs: Sequence[float]) -> float:
    """Smallest m with P{X <= m} >= 1/2 for a finite law given as parallel arrays."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, dtype=np.float64)[order]
    cum = np.cumsum(np.asarray(probs, dtype=np.float64)[order])
    # relative slack absorbs roundoff in the cumulative sum at exact ties
    i = int(np.searchsorted(cum, 0.5 - 1e-12, side="left"))
    return float(v[min(i, len(v) - 1)])
