"""Modified convex distance and Euclidean distance to convex hulls.

Both reduce to a min-norm point problem over a finite point cloud:
dist^c(x, A) is the norm of the shortest vector in conv{|x - y| : y in A}
(componentwise absolute value), and the distance from x to conv(S) is the
norm of the shortest vector in conv{s - x : s in S}. The solver is Wolfe's
corral method; each answer carries its convex weights and the duality gap
max_q (|v|^2 - <v, q>).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels

DEFAULT_TOL = 1e-10
MAX_ITER = 10_000


class DistanceError(ValueError):
    pass


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise DistanceError("a point set needs at least one point of positive dimension")
        if not np.all(np.isfinite(pts)):
            raise DistanceError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class DistanceCert:
    distance: float
    weights: np.ndarray
    witness: np.ndarray
    gap: float
    nearest: np.ndarray | None = None

    def violations(self, points, tol: float = DEFAULT_TOL) -> list[str]:
        """Invariant failures of this certificate against the cloud it was computed on."""
        P = np.asarray(points, dtype=np.float64)
        out = []
        w = self.weights
        if np.any(w < -1e-15):
            out.append(f"negative weight {w.min()}")
        if abs(w.sum() - 1.0) > 1e-12:
            out.append(f"weights sum to {w.sum()}")
        if abs(_norm(self.witness) - self.distance) > 1e-10:
            out.append("witness norm differs from distance")
        if np.max(np.abs(w @ P - self.witness)) > 1e-9 * (1.0 + np.max(np.abs(P))):
            out.append("witness is not the weighted combination")
        vv = float(self.witness @ self.witness)
        if self.gap > tol * (1.0 + vv):
            out.append(f"duality gap {self.gap} above tolerance")
        slack = float(np.min(P @ self.witness)) - (vv - self.gap)
        if slack < -1e-12 * (1.0 + vv):
            out.append(f"supporting inequality fails by {-slack}")
        return out


def _as_point(x, dim):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != dim:
        raise DistanceError(f"dimension mismatch: point has {x.shape[0]} coordinates, set has {dim}")
    if not np.all(np.isfinite(x)):
        raise DistanceError("point coordinates must be finite")
    return x


def _as_set(A) -> PointSet:
    return A if isinstance(A, PointSet) else PointSet(A)


def min_norm_point(points, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> DistanceCert:
    """Shortest vector in the convex hull of the given points."""
    P = _as_set(points).points
    zero = np.flatnonzero(~P.any(axis=1))
    if zero.size:
        # the origin is one of the points; tolerance-based stopping could settle on a tiny nonzero vertex
        weights = np.zeros(P.shape[0])
        weights[zero[0]] = 1.0
        return DistanceCert(0.0, weights, np.zeros(P.shape[1]), 0.0)
    # the optimal weights are scale-free; blowing tiny clouds up to unit size keeps squared norms from
    # underflowing, while larger clouds already get a relative stopping rule
    scale = min(float(np.max(np.abs(P))), 1.0)
    weights, witness, gap, _ = _kernels.min_norm_point(P / scale, tol, max_iter)
    # recompute the witness from the weights so the certificate is self-consistent
    witness = weights @ P
    w = witness / scale
    rel = max(float(w @ w - np.min((P / scale) @ w)), 0.0)
    gap = rel * scale * scale
    return DistanceCert(_norm(witness), weights, witness, gap)


def _norm(v) -> float:
    """Euclidean norm that does not underflow for tiny vectors."""
    top = float(np.max(np.abs(v))) if v.size else 0.0
    if top == 0.0:
        return 0.0
    return top * float(np.linalg.norm(v / top))


def dist_c(x, A, tol: float = DEFAULT_TOL) -> DistanceCert:
    """Modified convex distance: max over unit a of min over y in A of sum_i a_i |x_i - y_i|."""
    S = _as_set(A)
    x = _as_point(x, S.dim)
    return min_norm_point(np.abs(S.points - x), tol)


def dist_to_hull(x, S, tol: float = DEFAULT_TOL) -> DistanceCert:
    """Euclidean distance from x to conv(S), with the nearest point in ``nearest``."""
    S = _as_set(S)
    x = _as_point(x, S.dim)
    cert = min_norm_point(S.points - x, tol)
    return DistanceCert(cert.distance, cert.weights, cert.witness, cert.gap, nearest=x + cert.witness)


def dist_c_many(X, A, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Distances and duality gaps for each row of X."""
    S = _as_set(A)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != S.dim:
        raise DistanceError(f"dimension mismatch: points have {X.shape[1]} coordinates, set has {S.dim}")
    return _kernels.distc_batch(X, S.points, tol, MAX_ITER)


def dist_to_hull_many(X, S, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    S = _as_set(S)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != S.dim:
        raise DistanceError(f"dimension mismatch: points have {X.shape[1]} coordinates, set has {S.dim}")
    return _kernels.hull_batch(X, S.points, tol, MAX_ITER)


def direction_lower_bound(x, A, directions) -> float:
    """max over the given unit directions a of min over y in A of sum_i a_i |x_i - y_i|.

    Any such value is a lower bound on dist_c(x, A).
    """
    S = _as_set(A)
    x = _as_point(x, S.dim)
    D = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    U = np.abs(S.points - x)
    return float(np.max(np.min(D @ U.T, axis=1)))


def parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError as exc:
        raise DistanceError(f"cannot parse point {text!r}: {exc}") from None


def read_points(path) -> PointSet:
    """One whitespace-separated vector per line; blank lines and '#' comments are skipped."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError:
            raise DistanceError(f"{path}:{lineno}: not a numeric vector") from None
    if not rows:
        raise DistanceError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise DistanceError(f"{path}: points have differing dimensions")
    return PointSet(np.array(rows))


def hull_sample(S, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points of conv(S): the vertices first, then points of random sub-simplices.

    Each extra point picks between 2 and min(len(S), dim + 1) distinct
    vertices and a Dirichlet(1, ..., 1) weight vector over them, so faces of
    every dimension are hit. Prefixes of the output are nested samples.
    """
    S = _as_set(S)
    k, d = S.points.shape
    head = S.points[: min(k, count)]
    extra = count - head.shape[0]
    out = np.empty((extra, d))
    top = min(k, d + 1)
    for i in range(extra):
        m = int(rng.integers(2, top + 1)) if top >= 2 else 1
        idx = rng.choice(k, size=m, replace=False)
        out[i] = rng.dirichlet(np.ones(m)) @ S.points[idx]
    return np.concatenate([head, out])


def random_hull_instance(rng: np.random.Generator, max_vertices: int = 10, max_dim: int = 6, spread: float = 3.0):
    """Vertices N(0, I_d), query point N(0, spread^2 I_d), d and vertex count uniform."""
    d = int(rng.integers(1, max_dim + 1))
    k = int(rng.integers(1, max_vertices + 1))
    return PointSet(rng.normal(size=(k, d))), rng.normal(size=d) * spread


def euclid_to_set(x, A) -> float:
    S = _as_set(A)
    return float(math.sqrt(np.min(np.sum((S.points - _as_point(x, S.dim)) ** 2, axis=1))))
