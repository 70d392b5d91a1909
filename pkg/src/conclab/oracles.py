"""Brute-force reference computations used to cross-check closed forms."""
from __future__ import annotations

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(fun, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> tuple[float, float]:
    """Minimize a unimodal function on [lo, hi]; returns (argmin, min)."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fun(d)
    cands = [(fun(x), x) for x in (a, b, 0.5 * (a + b))]
    val, x = min(cands)
    return x, val


def grid_golden_min(fun, lo: float = 0.0, hi: float = 1.0, points: int = 401, tol: float = 1e-12) -> tuple[float, float]:
    """Grid search, then golden-section refinement on the bracketing cell pair."""
    grid = np.linspace(lo, hi, points)
    vals = np.array([fun(float(x)) for x in grid])
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, points - 1)]
    x, v = golden_section(fun, float(a), float(b), tol)
    if vals[i] < v:
        return float(grid[i]), float(vals[i])
    return x, v
