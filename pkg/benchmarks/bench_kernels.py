"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py            # default sizes
    python benchmarks/bench_kernels.py --quick    # small sizes, a few seconds

Prints one row per kernel with the best-of-N wall time for each backend and
the speed-up. Problem sizes roughly match one call in a full study run.
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from pdvoice import _pykernels, kernels
from pdvoice.svr import rbf_matrix

try:
    from pdvoice import _ckernels
except ImportError:
    _ckernels = None


def relief_case(n, d=21, k=10, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.uniform(size=(n, d))
    codes = rng.integers(0, 3, n).astype(np.int64)
    priors = np.bincount(codes, minlength=3) / n
    samples = np.arange(n, dtype=np.int64)
    return lambda impl: impl.relief_weights(Z, codes, samples, k, priors)


def smo_case(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 10))
    y = X @ rng.normal(size=10) + np.sin(3 * X[:, 0])
    K = np.ascontiguousarray(rbf_matrix(X, X, 2.0))
    q1, q3 = np.percentile(y, [25, 75])
    C, eps = (q3 - q1) / 1.349, (q3 - q1) / 13.49
    return lambda impl: impl.smo_solve(K, y, C, eps, 1e-3, 10_000_000, 10 * n, False)


def lstm_backward_case(batch=32, hidden=150, steps=4, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(batch, 4 * hidden))
    c_prev = rng.normal(size=(batch, hidden))
    gates = np.empty((batch, 5 * hidden))
    c, h = np.empty((batch, hidden)), np.empty((batch, hidden))
    kernels.lstm_cell_forward(A, c_prev, gates, c, h)
    dh = rng.normal(size=(batch, hidden))
    dA = np.empty((batch, 4 * hidden))

    def run(impl):
        dc = np.zeros((batch, hidden))
        for _ in range(steps):
            impl.lstm_cell_backward(dh, dc, gates, c_prev, dA)

    return run


def adam_case(hidden=150, steps=10, seed=0):
    size = 4 * hidden * (hidden + 2) + hidden + 1
    rng = np.random.default_rng(seed)
    theta, grad = rng.normal(size=size), rng.normal(size=size)
    m, v = np.zeros(size), np.zeros(size)

    def run(impl):
        for t in range(1, steps + 1):
            impl.adam_inplace(theta, grad, m, v, t, 1e-3, 0.9, 0.999, 1e-8)

    return run


def best_time(fn, impl, repeat):
    return min(timeit.repeat(lambda: fn(impl), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--quick", action="store_true", help="small problem sizes")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    n_relief, n_smo = (400, 300) if args.quick else (4000, 2000)
    cases = [
        (f"relief_weights n={n_relief}", relief_case(n_relief)),
        (f"smo_solve n={n_smo}", smo_case(n_smo)),
        ("lstm_cell_backward B=32 H=150 x4", lstm_backward_case()),
        ("adam_inplace H=150 x10", adam_case()),
    ]
    rows = []
    for name, fn in cases:
        py = best_time(fn, _pykernels, args.repeat)
        cy = best_time(fn, _ckernels, args.repeat)
        rows.append({"kernel": name, "python_s": py, "cython_s": cy, "speedup": py / cy})
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'kernel':36s} {'python (s)':>11s} {'cython (s)':>11s} {'speed-up':>9s}")
    for r in rows:
        print(f"{r['kernel']:36s} {r['python_s']:11.4f} {r['cython_s']:11.4f} {r['speedup']:8.1f}x")


if __name__ == "__main__":
    main()
