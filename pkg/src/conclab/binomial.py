"""Binomial tails, medians, Chernoff bounds and the two-regime lower envelope.

Exact rational arithmetic backs every floating-point path for small n; the
log-space kernels live in ``_kernels``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import _kernels

EXACT_N_MAX = 30


class BinomialError(ValueError):
    pass


class FitError(RuntimeError):
    """No constant up to the cap satisfies the predicate."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class BinomQuery:
    n: int
    theta: float
    k: int

    def __post_init__(self):
        if self.n < 1:
            raise BinomialError(f"n must be positive, got {self.n}")
        if not (0.0 < self.theta < 1.0):
            raise BinomialError(f"theta must lie in (0, 1), got {self.theta}")
        if not (0 <= self.k <= self.n):
            raise BinomialError(f"threshold k={self.k} outside [0, {self.n}]")


# ---------------------------------------------------------------------------
# exact paths
# ---------------------------------------------------------------------------


def binom_pmf_exact(n: int, theta, j: int) -> Fraction:
    th = Fraction(theta)
    return math.comb(n, j) * th**j * (1 - th) ** (n - j)


def binom_tail_exact(n: int, theta, k: int) -> Fraction:
    """P{Bin(n, theta) >= k} as an exact fraction of the binary value of theta."""
    th = Fraction(theta)
    return sum((math.comb(n, j) * th**j * (1 - th) ** (n - j) for j in range(max(k, 0), n + 1)), Fraction(0))


def binom_cdf_exact(n: int, theta, m: int) -> Fraction:
    if m < 0:
        return Fraction(0)
    return 1 - binom_tail_exact(n, theta, m + 1)


# ---------------------------------------------------------------------------
# floating paths
# ---------------------------------------------------------------------------


def log_binom_pmf(n: int, theta: float, j) -> np.ndarray:
    """log P{Bin(n, theta) = j}, accurate to a few ulps of the log even for large n."""
    if not (0.0 < theta < 1.0):
        raise BinomialError(f"theta must lie in (0, 1), got {theta}")
    j = np.asarray(j)
    if np.any((j < 0) | (j > n)):
        raise BinomialError("pmf index outside [0, n]")
    return _kernels.log_pmf_batch(j, n, theta)


def log_binom_tail(n: int, theta: float, k: int) -> float:
    """log P{Bin(n, theta) >= k}; finite far into the tail."""
    if not (0.0 < theta < 1.0):
        raise BinomialError(f"theta must lie in (0, 1), got {theta}")
    return float(_kernels.log_sf_batch([k], [n], [theta])[0])


def binom_tail(q: BinomQuery, method: str = "auto") -> float:
    """P{Bin(n, theta) >= k}.

    ``method="auto"`` uses the exact rational path for n <= 30 and the
    log-space summation otherwise; ``"log"`` and ``"exact"`` force one path.
    """
    if method == "exact" or (method == "auto" and q.n <= EXACT_N_MAX):
        return float(binom_tail_exact(q.n, q.theta, q.k))
    if method not in ("auto", "log"):
        raise ValueError(f"unknown method {method!r}")
    return math.exp(log_binom_tail(q.n, q.theta, q.k))


def binom_median(n: int, theta: float) -> int:
    """Lower median: smallest m with P{Bin(n, theta) <= m} >= 1/2."""
    return int(binom_median_many([n], [theta])[0])


def binom_median_many(ns, thetas, tie_margin: float = 1e-9) -> np.ndarray:
    """Vectorized lower medians.

    Decisions where the floating CDF sits within ``tie_margin`` of 1/2 are
    redone in exact arithmetic.
    """
    ns = np.asarray(ns, dtype=np.int64)
    thetas = np.asarray(thetas, dtype=np.float64)
    if np.any(ns < 1):
        raise BinomialError("n must be positive")
    if np.any((thetas <= 0.0) | (thetas >= 1.0)):
        raise BinomialError("theta must lie in (0, 1)")
    med, margin = _kernels.median_batch(ns, thetas)
    ns_b, th_b = np.broadcast_arrays(ns, thetas)
    for pos in zip(*np.nonzero(margin < tie_margin)):
        med[pos] = _median_exact(int(ns_b[pos]), float(th_b[pos]), int(med[pos]))
    return med


def _median_exact(n, theta, guess):
    if theta == 0.5 and n % 2 == 1:
        # symmetry: P{Bin <= (n-1)/2} = 1/2 exactly, and P{Bin <= (n-3)/2} < 1/2
        return (n - 1) // 2

    def at_least_half(m):
        return binom_cdf_exact(n, theta, m) >= Fraction(1, 2)

    m = guess
    while m > 0 and at_least_half(m - 1):
        m -= 1
    while not at_least_half(m):
        m += 1
    return m


def kl_bernoulli(a: float, b: float) -> float:
    """KL(Bernoulli(a) || Bernoulli(b))."""
    out = 0.0
    if a > 0.0:
        out += a * math.log(a / b)
    if a < 1.0:
        out += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return out


def log_chernoff_upper(q: BinomQuery) -> float:
    if q.k <= q.theta * q.n:
        return 0.0
    return -q.n * kl_bernoulli(q.k / q.n, q.theta)


def chernoff_upper(q: BinomQuery) -> float:
    """exp(-n KL(k/n || theta)) in the upper-tail regime, 1 otherwise."""
    if q.k == q.n and q.k > q.theta * q.n:
        return q.theta**q.n
    return math.exp(log_chernoff_upper(q))


# ---------------------------------------------------------------------------
# lower envelope  P{Bin >= theta n + r} >= exp(-C log(2 + (theta n + r)/(theta n)) r^2/(theta n + r)) / C
# ---------------------------------------------------------------------------


def check_lower_envelope_range(n, theta, r, c_b):
    if not (1.0 / (c_b * n) <= theta <= c_b):
        raise BinomialError(f"theta={theta} outside [1/(c_b n), c_b] = [{1.0 / (c_b * n)}, {c_b}]")
    if not (0.0 <= r <= n - theta * n):
        raise BinomialError(f"r={r} outside [0, n - theta n]")


def log_paper_lower_envelope(n: int, theta: float, r: float, C_b: float, c_b: float | None = None) -> float:
    if c_b is not None:
        check_lower_envelope_range(n, theta, r, c_b)
    mean = theta * n
    return -math.log(C_b) - C_b * math.log(2.0 + (mean + r) / mean) * r * r / (mean + r)


def paper_lower_envelope(n: int, theta: float, r: float, C_b: float, c_b: float | None = None) -> float:
    """(1/C_b) exp(-C_b log(2 + (theta n + r)/(theta n)) r^2 / (theta n + r))."""
    return math.exp(log_paper_lower_envelope(n, theta, r, C_b, c_b))


def envelope_threshold(n: int, theta: float, r: float) -> int:
    """Integer threshold ceil(theta n + r), guarded against roundoff."""
    x = theta * n + r
    near = round(x)
    if abs(x - near) <= 1e-9 * max(1.0, abs(x)):
        return int(near)
    return int(math.ceil(x))


# ---------------------------------------------------------------------------
# constant fitting
# ---------------------------------------------------------------------------


@dataclass
class ConstantFit:
    constant_name: str
    fitted_value: float
    grid: str
    worst_point: Any
    per_point: np.ndarray | None = field(default=None, repr=False)


def fit_constant(
    name: str,
    predicate: Callable,
    grid: Sequence[Any],
    grid_description: str = "",
    lower: float = 1.0,
    cap: float = 1e4,
    rtol: float = 1e-3,
    vectorized: bool = False,
    monotonicity_samples: int = 4,
) -> ConstantFit:
    """Smallest C in [lower, cap] with the predicate true at every grid point.

    ``predicate(C, point) -> bool`` must be monotone in C (true at C implies
    true above C). With ``vectorized=True`` it is called as
    ``predicate(C_array) -> bool_array`` with one C per grid point, and all
    points are bisected in lockstep.

    Each point is bisected in log C to relative precision ``rtol``; the
    reported value is the largest per-point threshold, always taken on the
    satisfied side, and ``worst_point`` is the point that attains it.
    """
    points = list(grid)
    if not points:
        raise ValueError("empty grid")
    if vectorized:
        def evaluate(cs):
            return np.asarray(predicate(cs), dtype=bool)
    else:
        def evaluate(cs):
            return np.array([bool(predicate(float(c), pt)) for c, pt in zip(cs, points)])

    size = len(points)
    at_cap = evaluate(np.full(size, cap))
    if not at_cap.all():
        bad = points[int(np.argmin(at_cap))]
        raise FitError(f"{name}: predicate false at cap={cap} for grid point {bad}", bad)
    lo = np.full(size, float(lower))
    hi = np.full(size, float(cap))
    done = evaluate(lo)
    hi[done] = lo[done]
    while True:
        active = hi > lo * (1.0 + rtol)
        if not active.any():
            break
        mid = np.where(active, np.sqrt(lo * hi), hi)
        ok = evaluate(mid)
        hi = np.where(active & ok, mid, hi)
        lo = np.where(active & ~ok, mid, lo)
    # spot-check monotonicity above the thresholds
    picks = np.unique(np.linspace(0, size - 1, min(monotonicity_samples, size)).astype(int))
    for factor in (1.5, 4.0):
        probe = np.minimum(hi * factor, cap)
        ok = evaluate(probe)
        for i in picks:
            if not ok[i]:
                raise FitError(f"{name}: predicate not monotone at {points[i]} (fails at C={probe[i]})", points[i])
    worst = int(np.argmax(hi))
    return ConstantFit(name, float(hi[worst]), grid_description, points[worst], hi)


# ---------------------------------------------------------------------------
# grids for the lower-envelope lemma
# ---------------------------------------------------------------------------


def r_values(n: int, theta: float, refine: int = 1) -> list[float]:
    """Deviation grid covering both regimes r < theta n/10 and r >= theta n/10, plus r = n - theta n."""
    mean = theta * n
    small = np.linspace(0.0, 0.09, 4 * refine)
    big = np.geomspace(0.1, (n - mean) / mean, 8 * refine)
    rs = sorted(set([float(f * mean) for f in small] + [float(f * mean) for f in big] + [float(n - mean)]))
    return [r for r in rs if 0.0 <= r <= n - mean]


def theta_range(n: int, theta_max: float = 0.05, min_mean: float = 10.0, theta_floor: float = 1e-4):
    return max(min_mean / n, theta_floor), theta_max


def binomial_lemma_grid(ns: Iterable[int], theta_count: int = 6, refine: int = 1, theta_max: float = 0.05,
                        min_mean: float = 10.0) -> list[tuple[int, float, float]]:
    """Pointwise (n, theta, r) triples, theta log-spaced in [max(min_mean/n, 1e-4), theta_max]."""
    out = []
    for n in ns:
        lo, hi = theta_range(n, theta_max, min_mean)
        if lo > hi:
            continue
        for theta in np.geomspace(lo, hi, theta_count * refine):
            for r in r_values(n, float(theta), refine):
                out.append((int(n), float(theta), r))
    return out


@dataclass(frozen=True)
class EnvelopeCell:
    """theta in [theta_lo, theta_hi], r in [r_lo, r_hi] (r also capped by n - theta n)."""

    n: int
    theta_lo: float
    theta_hi: float
    r_lo: float
    r_hi: float


def _mean_grid(lo: float, hi: float, step: float, ratio: float) -> np.ndarray:
    """Points from lo to hi, spaced by min(step * sqrt(m), (ratio - 1) m) around m."""
    pts = [lo]
    while pts[-1] < hi:
        m = pts[-1]
        pts.append(min(hi, m + min(step * math.sqrt(max(m, 1.0)), (ratio - 1.0) * m)))
    return np.array(pts)


def _deviation_grid(lo: float, hi: float, width: float, ratio: float) -> np.ndarray:
    """Points from lo to hi, spaced by max(width, (ratio - 1) r) around r."""
    pts = [lo]
    while pts[-1] < hi:
        r = pts[-1]
        pts.append(min(hi, r + max(width, (ratio - 1.0) * r)))
    return np.array(pts)


def binomial_lemma_cells(ns: Iterable[int], step: float = 0.1, ratio: float = 1.05,
                         theta_max: float = 0.05, min_mean: float = 10.0) -> list[EnvelopeCell]:
    """Cover {(n, theta, r)} by closed cells.

    Cell widths are ``step`` standard deviations of Bin(n, theta) in both
    theta n and r, except where a relative width of ``ratio - 1`` is finer.
    """
    cells = []
    for n in ns:
        lo, hi = theta_range(n, theta_max, min_mean)
        if lo > hi:
            continue
        means = _mean_grid(lo * n, hi * n, step, ratio)
        for ma, mb in zip(means[:-1], means[1:]):
            top = n - ma
            sd = math.sqrt(ma)
            small = np.arange(0.0, 0.1 * ma, step * sd)
            rs = np.concatenate([small, _deviation_grid(0.1 * ma, top, step * sd, ratio)])
            for ra, rb in zip(rs[:-1], rs[1:]):
                cells.append(EnvelopeCell(int(n), float(ma / n), float(mb / n), float(ra), float(rb)))
    return cells


def _thresholds(x: np.ndarray) -> np.ndarray:
    near = np.round(x)
    return np.where(np.abs(x - near) <= 1e-9 * np.maximum(1.0, np.abs(x)), near, np.ceil(x)).astype(np.int64)


def _envelope_exponent(n, theta, r):
    """log(2 + (theta n + r)/(theta n)) r^2 / (theta n + r), vectorized."""
    mean = theta * n
    return np.log(2.0 + (mean + r) / mean) * r * r / (mean + r)


class LowerEnvelopeProblem:
    """Vectorized predicate envelope(C) <= tail for ``fit_constant``.

    Pointwise grid entries are (n, theta, r) triples. Cell entries bound the
    worst case inside the cell: the tail is increasing in theta and
    decreasing in the threshold, the envelope increasing in theta and
    decreasing in r, so
        tail >= P{Bin(n, theta_lo) >= min(n, ceil(theta_hi n + r_hi))}
        envelope <= envelope(theta_hi, r_lo).
    """

    def __init__(self, grid):
        self.grid = list(grid)
        if self.grid and isinstance(self.grid[0], EnvelopeCell):
            n = np.array([c.n for c in self.grid], dtype=np.int64)
            t_tail = np.array([c.theta_lo for c in self.grid])
            t_env = np.array([c.theta_hi for c in self.grid])
            r_env = np.array([c.r_lo for c in self.grid])
            k = np.minimum(n, _thresholds(t_env * n + np.array([c.r_hi for c in self.grid])))
        else:
            n = np.array([g[0] for g in self.grid], dtype=np.int64)
            t_tail = t_env = np.array([g[1] for g in self.grid])
            r_env = np.array([g[2] for g in self.grid])
            k = _thresholds(t_env * n + r_env)
        self.log_tail = _kernels.log_sf_batch(k, n, t_tail)
        self.exponent = _envelope_exponent(n, t_env, r_env)
        self.k = k

    def log_envelope(self, C):
        return -np.log(C) - C * self.exponent

    def __call__(self, C):
        return self.log_envelope(np.asarray(C, dtype=np.float64)) <= self.log_tail


def lower_envelope_holds(C_b: float, point) -> bool:
    """Pointwise predicate for a single (n, theta, r)."""
    n, theta, r = point
    return log_paper_lower_envelope(n, theta, r, C_b) <= log_binom_tail(n, theta, envelope_threshold(n, theta, r))


def fit_binomial_lower(grid, cap: float = 1e4, rtol: float = 1e-3) -> ConstantFit:
    problem = LowerEnvelopeProblem(grid)
    kind = "cells" if problem.grid and isinstance(problem.grid[0], EnvelopeCell) else "(n, theta, r) points"
    return fit_constant("C_b", problem, problem.grid, f"{len(problem.grid)} {kind}", cap=cap, rtol=rtol,
                        vectorized=True)


def lower_envelope_violations(grid, C_b: float) -> list:
    problem = LowerEnvelopeProblem(grid)
    ok = problem(np.full(len(problem.grid), C_b))
    return [g for g, good in zip(problem.grid, ok) if not good]


def lower_envelope_rows(grid, C_b: float) -> list[dict]:
    """CSV rows: n, theta, r, exact_tail, chernoff, envelope, ratio (plus logs for underflowing tails)."""
    problem = LowerEnvelopeProblem(grid)
    log_env = problem.log_envelope(np.full(len(problem.grid), C_b))
    rows = []
    for (n, theta, r), k, lt, le in zip(problem.grid, problem.k, problem.log_tail, log_env):
        lc = log_chernoff_upper(BinomQuery(n, theta, int(k)))
        rows.append(
            {
                "n": n,
                "theta": theta,
                "r": r,
                "exact_tail": math.exp(lt),
                "chernoff": math.exp(lc),
                "envelope": math.exp(le),
                "ratio": math.exp(le - lt),
                "log_exact_tail": float(lt),
                "log_envelope": float(le),
            }
        )
    return rows
