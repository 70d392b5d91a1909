"""Extremal two-point vectors whose norm deviations match the lower envelopes.

X(theta) has i.i.d. coordinates equal to alpha = K log(1/theta)^{1/p} with
probability theta and 0 otherwise, so ||X||_2 = alpha sqrt(Bin(n, theta)) and
both deviation tails of the norm are exact binomial quantities. The
parameter theta is tied to the deviation level t through
theta(t) = 1 / (z (log z)^{2/p}), z = K^2 n / (3 t^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .binomial import FitError, binom_median, fit_constant
from .envelopes import PRESET_SUBGAUSSIAN_C, EnvelopeParams, psip_envelope, subgaussian_envelope
from .measures import TwoPoint, make_two_point
from .report import ExperimentReport

DEFAULT_C_B = 0.1
DEFAULT_MIN_N = 1000

SWEEP_COLUMNS = (
    "n", "p", "K", "t", "theta", "alpha", "median_norm", "tail_upper_exact", "tail_lower_exact",
    "envelope_lower", "envelope_upper", "fitted_C", "fitted_c", "seed",
)


class ExtremalError(ValueError):
    pass


def theta_formula(n: int, t: float, K: float, p: float) -> float:
    """1 / (z (log z)^{2/p}) with z = K^2 n / (3 t^2), no range checks beyond z > 1."""
    z = K * K * n / (3.0 * t * t)
    if z <= 1.0:
        raise ExtremalError(f"K^2 n / (3 t^2) = {z} must exceed 1")
    return 1.0 / (z * math.log(z) ** (2.0 / p))


def case1_window(n: int, K: float, p: float, c_b: float = DEFAULT_C_B) -> tuple[float, float]:
    """[sqrt(K^2 (log n)^{2/p} / (3 c_b)), sqrt(c_b K^2 n / 3)]."""
    lo = math.sqrt(K * K * math.log(n) ** (2.0 / p) / (3.0 * c_b))
    hi = math.sqrt(c_b * K * K * n / 3.0)
    return lo, hi


def theta_of_t(n: int, t: float, K: float, p: float, c_b: float | None = DEFAULT_C_B) -> float:
    """theta(t) on the window; below it the value at the window's left end is reused.

    ``c_b=None`` skips the window logic and evaluates the formula directly.
    """
    if not (1.0 <= p <= 2.0):
        raise ExtremalError(f"p must lie in [1, 2], got {p}")
    if not (t > 0 and K > 0):
        raise ExtremalError("t and K must be positive")
    if c_b is None:
        return theta_formula(n, t, K, p)
    lo, hi = case1_window(n, K, p, c_b)
    if lo > hi:
        raise ExtremalError(f"empty window for n={n}, c_b={c_b}: [{lo}, {hi}]; increase c_b or n")
    if t > hi * (1.0 + 1e-12):
        raise ExtremalError(
            f"t={t} lies above the window end {hi}; use the single-coordinate example (coordinate_tail)"
        )
    return theta_formula(n, max(t, lo), K, p)


@dataclass(frozen=True)
class ExtremalInstance:
    n: int
    law: TwoPoint
    median_count: int

    @property
    def theta(self) -> float:
        return self.law.theta

    @property
    def alpha(self) -> float:
        return self.law.alpha

    @property
    def median_norm(self) -> float:
        """alpha sqrt(lower median of Bin(n, theta))."""
        return self.alpha * math.sqrt(self.median_count)


def make_instance(n: int, theta: float, K: float, p: float) -> ExtremalInstance:
    law = make_two_point(theta, K, p)
    return ExtremalInstance(int(n), law, binom_median(n, theta))


def instance_from_law(n: int, law: TwoPoint) -> ExtremalInstance:
    return ExtremalInstance(int(n), law, binom_median(n, law.theta))


def _guarded_ceil(x: float) -> int:
    near = round(x)
    if abs(x - near) <= 1e-9 * max(1.0, abs(x)):
        return int(near)
    return int(math.ceil(x))


def _guarded_floor(x: float) -> int:
    near = round(x)
    if abs(x - near) <= 1e-9 * max(1.0, abs(x)):
        return int(near)
    return int(math.floor(x))


def upper_threshold(inst: ExtremalInstance, t: float) -> int:
    """Smallest count k with alpha sqrt(k) >= median_norm + t."""
    return _guarded_ceil(((inst.median_norm + t) / inst.alpha) ** 2)


def lower_threshold(inst: ExtremalInstance, t: float) -> int | None:
    """Largest count m with alpha sqrt(m) <= median_norm - t, or None if there is none."""
    level = inst.median_norm - t
    if level < 0:
        return None
    return _guarded_floor((level / inst.alpha) ** 2)


def log_norm_tail_exact(inst: ExtremalInstance, t: float, side: str) -> float:
    n, theta = inst.n, inst.theta
    if side == "upper":
        k = upper_threshold(inst, t)
        if k > n:
            return -math.inf
        return float(_kernels.log_sf_batch([max(k, 0)], [n], [theta])[0])
    if side == "lower":
        m = lower_threshold(inst, t)
        if m is None:
            return -math.inf
        if m >= n:
            return 0.0
        # P{Bin(n, theta) <= m} = P{Bin(n, 1 - theta) >= n - m}
        return float(_kernels.log_sf_batch([n - m], [n], [1.0 - theta])[0])
    raise ExtremalError(f"side must be 'upper' or 'lower', got {side!r}")


def norm_tail_exact(inst: ExtremalInstance, t: float, side: str) -> float:
    """P{||X|| >= Med + t} (upper) or P{||X|| <= Med - t} (lower), from binomial tails."""
    return math.exp(log_norm_tail_exact(inst, t, side))


def coordinate_tail(t: float, K: float, p: float) -> float:
    """1/2 exp(-(t/K)^p): either tail of f(X) = X_1 with symmetric exp-power coordinates."""
    if t < 0:
        raise ExtremalError("t must be nonnegative")
    return 0.5 * math.exp(-((t / K) ** p))


def log_coordinate_tail(t: float, K: float, p: float) -> float:
    return math.log(0.5) - (t / K) ** p


def envelope_exponent(n: int, t: float, K: float, p: float) -> float:
    """t^2 / (K^2 (log(2 + K^2 n / t^2))^{2/p}); zero at t = 0."""
    if t == 0:
        return 0.0
    s = t / K
    return s * s / math.log(2.0 + n / (s * s)) ** (2.0 / p)


def fit_envelope_constant(exponents, log_tails, name: str = "C", cap: float = 1e4) -> float:
    """Smallest C >= 1 with -log C - C E_i <= log tail_i at every i (c~ tied to 1/C)."""
    E = np.asarray(exponents, dtype=np.float64)
    lt = np.asarray(log_tails, dtype=np.float64)

    def holds(C):
        return -np.log(C) - C * E <= lt

    return fit_constant(name, holds, list(range(len(E))), cap=cap, vectorized=True).fitted_value


def optimality_sweep(n: int, K: float, p: float, t_grid, c_b: float = DEFAULT_C_B, min_n: int = DEFAULT_MIN_N,
                     upper_c: float = PRESET_SUBGAUSSIAN_C, seed: int = 0) -> ExperimentReport:
    """Exact two-sided tails of the extremal norm along a t grid and the fitted lower-envelope constant.

    For each t the instance X(theta(t)) is built, both tails are evaluated
    exactly and c~ exp(-C~ t^2 / (K^2 (log(2 + K^2 n/t^2))^{2/p})) with
    c~ = 1/C~ is fitted per side. ``fitted_C`` is the larger of the two.
    ``envelope_upper`` is the matching upper envelope at constant
    ``upper_c``.
    """
    if n < min_n:
        raise ExtremalError(f"n={n} is below the large-n gate {min_n}")
    ts = [float(t) for t in t_grid]
    if not ts:
        raise ExtremalError("empty t grid")
    log_up, log_lo, exps, insts = [], [], [], []
    for t in ts:
        inst = make_instance(n, theta_of_t(n, t, K, p, c_b), K, p)
        insts.append(inst)
        log_up.append(log_norm_tail_exact(inst, t, "upper"))
        log_lo.append(log_norm_tail_exact(inst, t, "lower"))
        exps.append(envelope_exponent(n, t, K, p))
    try:
        C_up = fit_envelope_constant(exps, log_up, "C_upper")
        C_lo = fit_envelope_constant(exps, log_lo, "C_lower")
    except FitError as exc:
        raise ExtremalError(str(exc)) from None
    C = max(C_up, C_lo)
    report = ExperimentReport(
        "extremal",
        SWEEP_COLUMNS,
        meta={"C_upper": C_up, "C_lower": C_lo, "C": C, "c_b": c_b, "window": case1_window(n, K, p, c_b)},
    )
    params = EnvelopeParams(K, p, n, {"c": upper_c, "c_p": upper_c})
    for t, inst, lu, ll, e in zip(ts, insts, log_up, log_lo, exps):
        if p == 2.0:
            upper_env = subgaussian_envelope(params, t)
        else:
            upper_env = psip_envelope(params, t)[0]
        report.add(
            n=n, p=p, K=K, t=t, theta=inst.theta, alpha=inst.alpha, median_norm=inst.median_norm,
            tail_upper_exact=math.exp(lu), tail_lower_exact=math.exp(ll),
            envelope_lower=math.exp(-math.log(C) - C * e), envelope_upper=upper_env,
            fitted_C=C, fitted_c=1.0 / C, seed=seed,
        )
    report.meta["log_tail_upper"] = log_up
    report.meta["log_tail_lower"] = log_lo
    report.meta["exponent"] = exps
    return report


def window_grid(n: int, K: float, p: float, steps: int, c_b: float = DEFAULT_C_B) -> np.ndarray:
    lo, hi = case1_window(n, K, p, c_b)
    return np.geomspace(lo, hi, steps)


def local_slope(ts, neg_log_tails) -> float:
    """Least-squares slope of log(-log tail) against log t."""
    x = np.log(np.asarray(ts, dtype=np.float64))
    y = np.log(np.asarray(neg_log_tails, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])
