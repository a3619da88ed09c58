"""Compare the numba kernels against their pure-numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``.  Each kernel is called on
identical inputs through both paths; outputs are checked for agreement and
the median wall time of several calls is reported.
"""

import argparse
import time

import numpy as np

from safeblend import _kernels
from safeblend._accel import HAVE_NUMBA


def _median_time(fn, repeats):
    fn()  # warm-up (JIT compile on the numba path)
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def cases(rng):
    d = 40
    Q = rng.normal(size=(d, d))
    S = Q @ Q.T + d * np.eye(d)
    yield "jacobi (40x40)", "jacobi", (S, 1e-15, 100)
    yield "cholesky (120x120)", "cholesky", (np.eye(120) * 120 + (lambda M: M @ M.T)(rng.normal(size=(120, 120))), 1e-12)

    n, meq, mi = 30, 8, 60
    G = rng.normal(size=(meq, n))
    Gbar = np.linalg.solve(G @ G.T, G).T
    g = rng.normal(size=meq)
    H = rng.normal(size=(mi, n))
    y_feas = Gbar @ g
    h = H @ y_feas + rng.uniform(0.0, 1.0, size=mi)
    y0 = 3.0 * rng.normal(size=n)
    yield "APM (n=30, 60 rows)", "apm", (y0, G, Gbar, g, H, h, 1e-6, 300, 1.0, 1.0)
    y0p = y0 - Gbar @ (G @ y0 - g)
    yield "DC3-style (n=30, 60 rows)", "dc3", (y0p, G, Gbar, g, H, h, 1e-3, 0.5, 1e-6, 300, 1.0, 1.0)

    s_tn = rng.normal(size=(4096, 50))
    s_sn = rng.uniform(0.1, 1.0, size=(4096, 50))
    yield "alpha (4096 x 50)", "alpha", (s_tn, s_sn)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
        return
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<28}{'numba ms':>12}{'numpy ms':>12}{'speed-up':>10}  agree")
    for label, name, inputs in cases(rng):
        fast = getattr(_kernels, f"{name}_numba")
        slow = getattr(_kernels, f"{name}_numpy")
        a = fast(*[np.copy(v) if isinstance(v, np.ndarray) else v for v in inputs])
        b = slow(*[np.copy(v) if isinstance(v, np.ndarray) else v for v in inputs])
        agree = all(np.allclose(x, y, rtol=1e-7, atol=1e-9, equal_nan=True)
                    for x, y in zip(a, b) if isinstance(x, np.ndarray) and x.shape == np.shape(y))
        tf = _median_time(lambda: fast(*inputs), args.repeats)
        ts = _median_time(lambda: slow(*inputs), args.repeats)
        print(f"{label:<28}{tf * 1e3:>12.3f}{ts * 1e3:>12.3f}{ts / tf:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
