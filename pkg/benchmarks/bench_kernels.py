"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both paths are called through the same dispatch functions with
``use_numba`` forced, after one warm-up call (which absorbs JIT
compilation). Results are checked for agreement before timing is reported.
"""
import argparse
import time

import numpy as np

from conclab import _accel, _kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    ns = rng.integers(10, 100_000, size=2_000)
    thetas = rng.uniform(0.001, 0.5, size=ns.size)
    ks = np.minimum(ns, np.ceil(thetas * ns + 3 * np.sqrt(thetas * ns)).astype(np.int64))
    yield "log_sf_batch (2k tails)", lambda nb: _kernels.log_sf_batch(ks, ns, thetas, use_numba=nb)

    mn = rng.integers(1, 5_000, size=5_000)
    mt = rng.uniform(0.01, 0.99, size=mn.size)
    yield "median_batch (5k medians)", lambda nb: _kernels.median_batch(mn, mt, use_numba=nb)[0]

    A = rng.choice([-1.0, 1.0], size=(40, 6))
    X = rng.choice([-1.0, 1.0], size=(2_000, 6))
    yield "distc_batch (2k points, |A|=40, d=6)", lambda nb: _kernels.distc_batch(X, A, 1e-10, 10_000, use_numba=nb)[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(12345)
    print(f"{'kernel':42s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, run in cases(rng):
        a, b = run(True), run(False)
        if not np.allclose(a, b, rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{name}: numba and numpy results disagree")
        t_nb = best_of(lambda: run(True), args.repeat)
        t_np = best_of(lambda: run(False), args.repeat)
        print(f"{name:42s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
