"""Closed-form pieces of the convex-distance exponential-moment argument.

* ``min_basic``: minimize -lam b - (1-lam) a + c0 R^2 (1-lam)^2 over lam in [0, 1].
* ``h_cost``: the two-point cost H(t, y), which is ``min_basic`` with
  a = h(y), b = h(t), c0 R^2 = kappa (y-t)^2.
* ``remark_bound``: the upper estimate -h(y) + Q log(2 - exp((h(t)-h(y))/Q)).
* ``choice_of_L`` and ``exp_moment_statistic`` for the exponential-moment
  inequality E exp(dist^c(X, A)^2 / L^2) <= 4 / (P{X in A} delta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .distance import PointSet, dist_c_many

LOG_OVERFLOW = 700.0


class TalagrandError(ValueError):
    pass


@dataclass(frozen=True)
class MinBasicInput:
    a: float
    b: float
    c0: float
    R: float

    def __post_init__(self):
        if not (self.c0 > 0 and self.R > 0):
            raise TalagrandError("c0 and R must be positive")
        if self.b > self.a:
            raise TalagrandError(f"need b <= a, got a={self.a}, b={self.b}")
        if math.isnan(self.a) or math.isnan(self.b) or self.a == -math.inf:
            raise TalagrandError("a must be a finite real and b a real or -inf")


def min_basic_objective(lam, a, b, cr2):
    """-lam b - (1-lam) a + c0 R^2 (1-lam)^2 with cr2 = c0 R^2; lam = 0 is safe for b = -inf."""
    lam = np.asarray(lam, dtype=np.float64)
    lb = np.where(lam == 0.0, 0.0, lam * b) if b == -math.inf else lam * b
    return -lb - (1.0 - lam) * a + cr2 * (1.0 - lam) ** 2


def _min_basic(a: float, b: float, cr2: float) -> tuple[float, float]:
    a, b, cr2 = float(a), float(b), float(cr2)
    gap = a - b  # +inf when b = -inf, which lands in the first branch
    if gap >= 2.0 * cr2:
        return -a + cr2, 0.0
    return -b - gap * gap / (4.0 * cr2), 1.0 - gap / (2.0 * cr2)


def min_basic(inp: MinBasicInput) -> tuple[float, float]:
    """(min value, minimizing lam).

    The minimizer is lam* = max(0, 1 - (a-b)/(2 c0 R^2)); the value is
    -a + c0 R^2 when a - b >= 2 c0 R^2 and -b - (a-b)^2/(4 c0 R^2) otherwise.
    """
    return _min_basic(inp.a, inp.b, inp.c0 * inp.R * inp.R)


@dataclass(frozen=True)
class HCostInput:
    t: float
    y: float
    h_t: float
    h_y: float
    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise TalagrandError(f"kappa must be positive, got {self.kappa}")

    @property
    def dt2(self) -> float:
        return (self.y - self.t) ** 2


def h_cost_value(h_t: float, h_y: float, kappa: float, dt2: float) -> float:
    if not kappa > 0:
        raise TalagrandError(f"kappa must be positive, got {kappa}")
    if dt2 < 0:
        raise TalagrandError("squared displacement must be nonnegative")
    if dt2 == 0.0:
        # limit of the lam-minimization as (y-t)^2 -> 0
        return -max(h_t, h_y)
    if h_y <= h_t:
        return -h_t
    return _min_basic(h_y, h_t, kappa * dt2)[0]


def h_cost(inp: HCostInput) -> float:
    """Two-point cost H(t, y); continuous in all arguments, -max(h_t, h_y) at y = t."""
    return h_cost_value(inp.h_t, inp.h_y, inp.kappa, inp.dt2)


def remark_bound_value(h_t: float, h_y: float, kappa: float, dt2: float, Q: float) -> float:
    if not Q > 0:
        raise TalagrandError(f"Q must be positive, got {Q}")
    if h_y < h_t:
        raise TalagrandError(f"bound requires h_y >= h_t, got h_t={h_t}, h_y={h_y}")
    if Q < 4.0 * kappa * dt2:
        raise TalagrandError(f"bound requires Q >= 4 kappa (y-t)^2 = {4.0 * kappa * dt2}, got Q={Q}")
    return -h_y + Q * math.log(2.0 - math.exp((h_t - h_y) / Q))


def remark_bound(inp: HCostInput, Q: float) -> float:
    """-h(y) + Q log(2 - exp((h(t) - h(y))/Q)); dominates ``h_cost`` when h_y >= h_t and Q >= 4 kappa (y-t)^2."""
    return remark_bound_value(inp.h_t, inp.h_y, inp.kappa, inp.dt2, Q)


def choice_of_L(n: int, delta: float, K: float) -> float:
    """L with L^2 = 512 K^2 log(2 + n / log(2 + 1/delta))."""
    if not (0.0 < delta <= 0.5):
        raise TalagrandError(f"delta must lie in (0, 1/2], got {delta}")
    if n < 1:
        raise TalagrandError(f"n must be positive, got {n}")
    if not K > 0:
        raise TalagrandError(f"K must be positive, got {K}")
    return K * math.sqrt(512.0 * math.log(2.0 + n / math.log(2.0 + 1.0 / delta)))


@dataclass(frozen=True)
class ExpMomentStat:
    mean: float
    half_width: float
    upper: float
    count: int
    max_log_term: float
    overflow: bool
    level: float

    @property
    def log_mean(self) -> float:
        return math.log(self.mean) if self.mean > 0 else -math.inf


def exp_moment_from_distances(dist: np.ndarray, L: float, level: float = 0.99) -> ExpMomentStat:
    """Empirical mean of exp(d^2 / L^2), normal half-width and one-sided upper bound at ``level``."""
    if not L > 0:
        raise TalagrandError(f"L must be positive, got {L}")
    logs = (np.asarray(dist, dtype=np.float64) / L) ** 2
    count = logs.shape[0]
    if count == 0:
        raise TalagrandError("no samples")
    top = float(np.max(logs))
    log_mean = float(logsumexp(logs)) - math.log(count)
    overflow = top > LOG_OVERFLOW
    if overflow:
        return ExpMomentStat(math.exp(min(log_mean, 709.0)) if log_mean < 709.0 else math.inf, math.inf,
                             math.inf, count, top, True, level)
    terms = np.exp(logs)
    mean = float(np.sum(terms)) / count
    sd = float(np.std(terms, ddof=1)) if count > 1 else 0.0
    se = sd / math.sqrt(count)
    half = float(norm.ppf(0.5 + level / 2.0)) * se
    upper = mean + float(norm.ppf(level)) * se
    return ExpMomentStat(mean, half, upper, count, top, False, level)


def exp_moment_statistic(samples, A, L: float, level: float = 0.99) -> ExpMomentStat:
    """Empirical E exp(dist^c(X, A)^2 / L^2) over the rows of ``samples``.

    Repeated sample rows are solved once.
    """
    S = A if isinstance(A, PointSet) else PointSet(A)
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    uniq, inverse = np.unique(X, axis=0, return_inverse=True)
    d_uniq, _ = dist_c_many(uniq, S)
    return exp_moment_from_distances(d_uniq[inverse.ravel()], L, level)
