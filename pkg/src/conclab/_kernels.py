"""Hot loops: binomial log-tails, binomial medians and the min-norm-point solver.

Every kernel has a numba version (``_nb_*``) and a numpy version (``_np_*``).
The public wrappers at the bottom dispatch on ``_accel.USE_NUMBA``; both
paths implement the same algorithm and are cross-checked in the test suite.
"""
import math

import numpy as np

from . import _accel
from ._accel import njit

# Terms below this fraction of the running sum are dropped.
_TERM_RTOL = 1e-17
# Corral weights at or below this value are treated as zero.
_WEIGHT_EPS = 1e-14
_RCOND = 1e-13


# ---------------------------------------------------------------------------
# binomial tails
# ---------------------------------------------------------------------------


def _stirlerr_table(size=16):
    # stirlerr(k) = log k! - (k + 1/2) log k + k - log sqrt(2 pi); absolute error ~1e-15 for small k
    out = np.zeros(size)
    for k in range(1, size):
        out[k] = math.lgamma(k + 1.0) - (k + 0.5) * math.log(k) + k - 0.5 * math.log(2.0 * math.pi)
    return out


_STIRLERR = _stirlerr_table()
_LOG_2PI = math.log(2.0 * math.pi)


@njit
def _stirlerr(x):
    """Error of Stirling's formula for log x!, integer-valued x >= 0."""
    if x <= 15.0:
        return _STIRLERR[int(x)]
    xx = x * x
    s0, s1, s2, s3, s4 = 1.0 / 12, 1.0 / 360, 1.0 / 1260, 1.0 / 1680, 1.0 / 1188
    if x > 500.0:
        return (s0 - s1 / xx) / x
    if x > 80.0:
        return (s0 - (s1 - s2 / xx) / xx) / x
    if x > 35.0:
        return (s0 - (s1 - (s2 - s3 / xx) / xx) / xx) / x
    return (s0 - (s1 - (s2 - (s3 - s4 / xx) / xx) / xx) / xx) / x


@njit
def _bd0(x, mu):
    """x log(x/mu) + mu - x without cancellation near x = mu."""
    d = x - mu
    if abs(d) < 0.1 * (x + mu):
        v = d / (x + mu)
        s = d * v
        ej = 2.0 * x * v
        v2 = v * v
        j = 1
        while j < 1000:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
        return s
    return x * math.log(x / mu) + mu - x


@njit
def _nb_log_pmf(j, n, theta):
    """log P{Bin(n, theta) = j} by Loader's saddle-point expansion (no large-lgamma cancellation)."""
    if j == 0:
        return n * math.log1p(-theta)
    if j == n:
        return n * math.log(theta)
    x = float(j)
    nf = float(n)
    lc = (_stirlerr(nf) - _stirlerr(x) - _stirlerr(nf - x)
          - _bd0(x, nf * theta) - _bd0(nf - x, nf * (1.0 - theta)))
    return lc + 0.5 * (math.log(nf) - _LOG_2PI - math.log(x) - math.log(nf - x))


@njit
def _nb_upper_ratio_sum(k, n, theta):
    # sum_{j >= k} pmf(j) / pmf(k), Kahan-compensated
    odds = theta / (1.0 - theta)
    s = 1.0
    comp = 0.0
    term = 1.0
    j = k
    while j < n:
        term *= (n - j) / (j + 1.0) * odds
        y = term - comp
        t = s + y
        comp = (t - s) - y
        s = t
        if term < _TERM_RTOL * s:
            break
        j += 1
    return s


@njit
def _nb_lower_ratio_sum(m, n, theta):
    # sum_{j <= m} pmf(j) / pmf(m), Kahan-compensated
    odds = (1.0 - theta) / theta
    s = 1.0
    comp = 0.0
    term = 1.0
    j = m
    while j > 0:
        term *= j / (n - j + 1.0) * odds
        y = term - comp
        t = s + y
        comp = (t - s) - y
        s = t
        if term < _TERM_RTOL * s:
            break
        j -= 1
    return s


@njit
def _nb_log_sf(k, n, theta):
    """log P{Bin(n, theta) >= k}."""
    if k <= 0:
        return 0.0
    if k > n:
        return -np.inf
    mode = math.floor((n + 1) * theta)
    if k > mode:
        return _nb_log_pmf(k, n, theta) + math.log(_nb_upper_ratio_sum(k, n, theta))
    m = k - 1
    log_lower = _nb_log_pmf(m, n, theta) + math.log(_nb_lower_ratio_sum(m, n, theta))
    return math.log1p(-math.exp(log_lower))


@njit
def _nb_cdf(m, n, theta):
    """P{Bin(n, theta) <= m} as a plain float."""
    if m < 0:
        return 0.0
    if m >= n:
        return 1.0
    mode = math.floor((n + 1) * theta)
    if m < mode:
        return math.exp(_nb_log_pmf(m, n, theta)) * _nb_lower_ratio_sum(m, n, theta)
    return -math.expm1(_nb_log_sf(m + 1, n, theta))


@njit
def _nb_log_pmf_batch(js, n, theta, out):
    for i in range(js.shape[0]):
        out[i] = _nb_log_pmf(js[i], n, theta)


@njit
def _nb_log_sf_batch(ks, ns, thetas, out):
    for i in range(ks.shape[0]):
        out[i] = _nb_log_sf(ks[i], ns[i], thetas[i])


@njit
def _nb_median_batch(ns, thetas, out_m, out_margin):
    for i in range(ns.shape[0]):
        n = ns[i]
        th = thetas[i]
        m = int(math.floor(n * th))
        while m > 0 and _nb_cdf(m - 1, n, th) >= 0.5:
            m -= 1
        f = _nb_cdf(m, n, th)
        while f < 0.5:
            m += 1
            f = _nb_cdf(m, n, th)
        margin = abs(f - 0.5)
        if m > 0:
            margin = min(margin, abs(_nb_cdf(m - 1, n, th) - 0.5))
        out_m[i] = m
        out_margin[i] = margin


def _py(fn):
    """The plain-Python body of a jitted helper (the function itself when numba is absent)."""
    return getattr(fn, "py_func", fn)


def _np_log_pmf(j, n, theta):
    if j == 0:
        return n * math.log1p(-theta)
    if j == n:
        return n * math.log(theta)
    stirlerr, bd0 = _py(_stirlerr), _py(_bd0)
    x, nf = float(j), float(n)
    lc = stirlerr(nf) - stirlerr(x) - stirlerr(nf - x) - bd0(x, nf * theta) - bd0(nf - x, nf * (1.0 - theta))
    return lc + 0.5 * (math.log(nf) - _LOG_2PI - math.log(x) - math.log(nf - x))


def _np_ratio_sum(anchor, stop, n, theta):
    """sum of pmf(j)/pmf(anchor) for j from anchor towards stop (inclusive), as products of pmf ratios."""
    if stop >= anchor:
        js = np.arange(anchor, stop, dtype=np.float64)
        ratios = (n - js) / (js + 1.0) * (theta / (1.0 - theta))
    else:
        js = np.arange(anchor, stop, -1, dtype=np.float64)
        ratios = js / (n - js + 1.0) * ((1.0 - theta) / theta)
    return math.fsum(np.concatenate(([1.0], np.cumprod(ratios))))


def _np_log_sf(k, n, theta):
    if k <= 0:
        return 0.0
    if k > n:
        return -np.inf
    mode = math.floor((n + 1) * theta)
    if k > mode:
        return _np_log_pmf(k, n, theta) + math.log(_np_ratio_sum(k, n, n, theta))
    m = k - 1
    log_lower = _np_log_pmf(m, n, theta) + math.log(_np_ratio_sum(m, 0, n, theta))
    return math.log1p(-math.exp(log_lower))


def _np_cdf(m, n, theta):
    if m < 0:
        return 0.0
    if m >= n:
        return 1.0
    return -math.expm1(_np_log_sf(m + 1, n, theta))


def _np_median_batch(ns, thetas, out_m, out_margin):
    for i in range(ns.shape[0]):
        n = int(ns[i])
        th = float(thetas[i])
        m = int(math.floor(n * th))
        while m > 0 and _np_cdf(m - 1, n, th) >= 0.5:
            m -= 1
        f = _np_cdf(m, n, th)
        while f < 0.5:
            m += 1
            f = _np_cdf(m, n, th)
        margin = abs(f - 0.5)
        if m > 0:
            margin = min(margin, abs(_np_cdf(m - 1, n, th) - 0.5))
        out_m[i] = m
        out_margin[i] = margin


# ---------------------------------------------------------------------------
# min-norm point (Wolfe's algorithm)
# ---------------------------------------------------------------------------


@njit
def _nb_affine_min(P, idx, sz, alpha, M):
    """Affine minimizer of the corral; alpha sums to 1. False if the corral is degenerate.

    Solved as least squares in q_0 + D beta with D = [q_s - q_0] by Householder
    QR, which keeps nearly degenerate corrals well posed (a bordered Gram
    system squares the conditioning). ``M`` is scratch of shape >= (d, sz).
    """
    if sz == 1:
        alpha[0] = 1.0
        return True
    d = P.shape[1]
    m = sz - 1
    for c in range(d):
        M[c, m] = -P[idx[0], c]
        for s in range(1, sz):
            M[c, s - 1] = P[idx[s], c] - P[idx[0], c]
    rmax = 0.0
    for k in range(m):
        nrm = 0.0
        for c in range(k, d):
            nrm += M[c, k] * M[c, k]
        nrm = math.sqrt(nrm)
        if nrm == 0.0:
            return False
        r = -nrm if M[k, k] > 0.0 else nrm
        M[k, k] -= r
        vv = 0.0
        for c in range(k, d):
            vv += M[c, k] * M[c, k]
        # reflect the remaining columns and the right-hand side (column m)
        for j in range(k + 1, m + 1):
            t = 0.0
            for c in range(k, d):
                t += M[c, k] * M[c, j]
            t *= 2.0 / vv
            for c in range(k, d):
                M[c, j] -= t * M[c, k]
        M[k, k] = r
        rmax = max(rmax, abs(r))
    for k in range(m):
        if abs(M[k, k]) <= _RCOND * rmax:
            return False
    tot = 0.0
    for k in range(m - 1, -1, -1):
        t = M[k, m]
        for j in range(k + 1, m):
            t -= M[k, j] * alpha[j + 1]
        alpha[k + 1] = t / M[k, k]
        tot += alpha[k + 1]
    alpha[0] = 1.0 - tot
    for s in range(sz):
        if not math.isfinite(alpha[s]):
            return False
    return True


@njit
def _nb_combine(P, idx, lam, sz, x):
    for c in range(P.shape[1]):
        x[c] = 0.0
    for s in range(sz):
        for c in range(P.shape[1]):
            x[c] += lam[s] * P[idx[s], c]


@njit
def _nb_mnp(P, tol, max_iter, lam_out, x):
    """Min-norm point of conv(rows of P). Returns (gap, iterations)."""
    N, d = P.shape
    best = 0
    best_nn = np.inf
    for i in range(N):
        nn = 0.0
        for c in range(d):
            nn += P[i, c] * P[i, c]
        if nn < best_nn:
            best_nn = nn
            best = i
    cap = d + 2
    idx = np.empty(cap, dtype=np.int64)
    lam = np.zeros(cap)
    alpha = np.zeros(cap)
    M = np.zeros((cap, cap))
    idx[0] = best
    lam[0] = 1.0
    sz = 1
    _nb_combine(P, idx, lam, sz, x)
    xx_prev = np.inf
    it = 0
    while it < max_iter:
        it += 1
        xx = 0.0
        for c in range(d):
            xx += x[c] * x[c]
        j = -1
        mn = np.inf
        for i in range(N):
            v = 0.0
            for c in range(d):
                v += P[i, c] * x[c]
            if v < mn:
                mn = v
                j = i
        if xx - mn <= tol * (1.0 + xx) or xx >= xx_prev:
            break
        xx_prev = xx
        present = False
        for s in range(sz):
            if idx[s] == j:
                present = True
        if present or sz >= d + 1:
            break
        idx[sz] = j
        lam[sz] = 0.0
        sz += 1
        # minor cycles
        while True:
            if not _nb_affine_min(P, idx, sz, alpha, M):
                # degenerate corral: drop the newest vertex and stop
                sz -= 1
                tot = 0.0
                for s in range(sz):
                    tot += lam[s]
                for s in range(sz):
                    lam[s] /= tot
                it = max_iter
                break
            worst = -1
            th = 1.0
            for s in range(sz):
                if alpha[s] <= _WEIGHT_EPS:
                    r = lam[s] / (lam[s] - alpha[s])
                    if worst < 0 or r < th:
                        th = r
                        worst = s
            if worst < 0:
                for s in range(sz):
                    lam[s] = alpha[s]
                break
            for s in range(sz):
                lam[s] = th * alpha[s] + (1.0 - th) * lam[s]
            lam[worst] = 0.0
            k = 0
            for s in range(sz):
                if lam[s] > _WEIGHT_EPS:
                    idx[k] = idx[s]
                    lam[k] = lam[s]
                    k += 1
            sz = k
            tot = 0.0
            for s in range(sz):
                tot += lam[s]
            for s in range(sz):
                lam[s] /= tot
        _nb_combine(P, idx, lam, sz, x)
    _nb_combine(P, idx, lam, sz, x)
    xx = 0.0
    for c in range(d):
        xx += x[c] * x[c]
    mn = np.inf
    for i in range(N):
        v = 0.0
        for c in range(d):
            v += P[i, c] * x[c]
        if v < mn:
            mn = v
    for i in range(N):
        lam_out[i] = 0.0
    for s in range(sz):
        lam_out[idx[s]] += lam[s]
    return max(xx - mn, 0.0), it


@njit
def _nb_distc_batch(X, A, tol, max_iter, dist, gap):
    N, d = A.shape
    U = np.empty((N, d))
    lam = np.empty(N)
    x = np.empty(d)
    for b in range(X.shape[0]):
        for i in range(N):
            for c in range(d):
                U[i, c] = abs(X[b, c] - A[i, c])
        g, _ = _nb_mnp(U, tol, max_iter, lam, x)
        s = 0.0
        for c in range(d):
            s += x[c] * x[c]
        dist[b] = math.sqrt(s)
        gap[b] = g


@njit
def _nb_hull_batch(X, S, tol, max_iter, dist, gap):
    N, d = S.shape
    U = np.empty((N, d))
    lam = np.empty(N)
    x = np.empty(d)
    for b in range(X.shape[0]):
        for i in range(N):
            for c in range(d):
                U[i, c] = S[i, c] - X[b, c]
        g, _ = _nb_mnp(U, tol, max_iter, lam, x)
        s = 0.0
        for c in range(d):
            s += x[c] * x[c]
        dist[b] = math.sqrt(s)
        gap[b] = g


def _np_affine_min(Q):
    if len(Q) == 1:
        return np.ones(1)
    q, r = np.linalg.qr((Q[1:] - Q[0]).T)
    diag = np.abs(np.diag(r))
    if diag.min() <= _RCOND * diag.max():
        return None
    beta = np.linalg.solve(r, q.T @ -Q[0])
    alpha = np.concatenate([[1.0 - beta.sum()], beta])
    return alpha if np.all(np.isfinite(alpha)) else None


def _np_mnp(P, tol, max_iter):
    N, d = P.shape
    corral = [int(np.argmin(np.einsum("ij,ij->i", P, P)))]
    lam = np.array([1.0])
    x = P[corral[0]].copy()
    xx_prev = np.inf
    it = 0
    while it < max_iter:
        it += 1
        xx = float(x @ x)
        proj = P @ x
        j = int(np.argmin(proj))
        if xx - proj[j] <= tol * (1.0 + xx) or xx >= xx_prev:
            break
        xx_prev = xx
        if j in corral or len(corral) >= d + 1:
            break
        corral.append(j)
        lam = np.append(lam, 0.0)
        stalled = False
        while True:
            alpha = _np_affine_min(P[corral])
            if alpha is None:
                corral.pop()
                lam = lam[:-1] / lam[:-1].sum()
                stalled = True
                break
            bad = alpha <= _WEIGHT_EPS
            if not bad.any():
                lam = alpha
                break
            ratios = np.where(bad, lam / np.where(bad, lam - alpha, 1.0), np.inf)
            worst = int(np.argmin(ratios))
            th = ratios[worst]
            lam = th * alpha + (1.0 - th) * lam
            lam[worst] = 0.0
            keep = lam > _WEIGHT_EPS
            corral = [c for c, k in zip(corral, keep) if k]
            lam = lam[keep] / lam[keep].sum()
        x = lam @ P[corral]
        if stalled:
            break
    weights = np.zeros(N)
    np.add.at(weights, corral, lam)
    x = lam @ P[corral]
    gap = max(float(x @ x - np.min(P @ x)), 0.0)
    return weights, x, gap, it


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def log_sf_batch(ks, ns, thetas, use_numba=None):
    """Vectorized log P{Bin(n, theta) >= k}."""
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    ks, ns, thetas = np.broadcast_arrays(
        np.asarray(ks, dtype=np.int64), np.asarray(ns, dtype=np.int64), np.asarray(thetas, dtype=np.float64)
    )
    shape = ks.shape
    ks, ns, thetas = (np.ascontiguousarray(a.ravel()) for a in (ks, ns, thetas))
    out = np.empty(ks.shape[0])
    if use_numba:
        _nb_log_sf_batch(ks, ns, thetas, out)
    else:
        for i in range(ks.shape[0]):
            out[i] = _np_log_sf(int(ks[i]), int(ns[i]), float(thetas[i]))
    return out.reshape(shape)


def log_pmf_batch(js, n, theta, use_numba=None):
    """log P{Bin(n, theta) = j} for each j in ``js`` (0 <= j <= n)."""
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    js = np.ascontiguousarray(np.asarray(js, dtype=np.int64))
    shape = js.shape
    js = js.ravel()
    out = np.empty(js.shape[0])
    if use_numba:
        _nb_log_pmf_batch(js, int(n), float(theta), out)
    else:
        for i in range(js.shape[0]):
            out[i] = _np_log_pmf(int(js[i]), int(n), float(theta))
    return out.reshape(shape)


def median_batch(ns, thetas, use_numba=None):
    """Lower medians of Bin(n, theta) plus the CDF distance to 1/2 at the decision."""
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    ns, thetas = np.broadcast_arrays(np.asarray(ns, dtype=np.int64), np.asarray(thetas, dtype=np.float64))
    shape = ns.shape
    ns, thetas = np.ascontiguousarray(ns.ravel()), np.ascontiguousarray(thetas.ravel())
    out_m = np.empty(ns.shape[0], dtype=np.int64)
    out_margin = np.empty(ns.shape[0])
    if use_numba:
        _nb_median_batch(ns, thetas, out_m, out_margin)
    else:
        _np_median_batch(ns, thetas, out_m, out_margin)
    return out_m.reshape(shape), out_margin.reshape(shape)


def min_norm_point(P, tol, max_iter, use_numba=None):
    """Return (weights, witness, gap, iterations) for conv(rows of P)."""
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    P = np.ascontiguousarray(P, dtype=np.float64)
    if use_numba:
        lam = np.empty(P.shape[0])
        x = np.empty(P.shape[1])
        gap, it = _nb_mnp(P, tol, max_iter, lam, x)
        return lam, x, gap, it
    return _np_mnp(P, tol, max_iter)


def _zero_exact_hits(X, A, dist, gap):
    """x equal to a point of A has distance exactly 0; tolerance-based stopping might not see it."""
    hit = (X[:, None, :] == A[None, :, :]).all(axis=2).any(axis=1)
    dist[hit] = 0.0
    gap[hit] = 0.0


def distc_batch(X, A, tol, max_iter, use_numba=None):
    """Modified convex distances from each row of X to the finite set A."""
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    X = np.ascontiguousarray(X, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    dist = np.empty(X.shape[0])
    gap = np.empty(X.shape[0])
    if use_numba:
        _nb_distc_batch(X, A, tol, max_iter, dist, gap)
    else:
        for b in range(X.shape[0]):
            _, x, g, _ = _np_mnp(np.abs(X[b] - A), tol, max_iter)
            dist[b] = math.sqrt(float(x @ x))
            gap[b] = g
    _zero_exact_hits(X, A, dist, gap)
    return dist, gap


def hull_batch(X, S, tol, max_iter, use_numba=None):
    """Euclidean distances from each row of X to conv(S)."""
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    X = np.ascontiguousarray(X, dtype=np.float64)
    S = np.ascontiguousarray(S, dtype=np.float64)
    dist = np.empty(X.shape[0])
    gap = np.empty(X.shape[0])
    if use_numba:
        _nb_hull_batch(X, S, tol, max_iter, dist, gap)
    else:
        for b in range(X.shape[0]):
            _, x, g, _ = _np_mnp(S - X[b], tol, max_iter)
            dist[b] = math.sqrt(float(x @ x))
            gap[b] = g
    _zero_exact_hits(X, S, dist, gap)
    return dist, gap
