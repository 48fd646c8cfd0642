"""Time the numba and numpy flavours of the per-replication grid kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Both flavours are imported from the same module, so the comparison does not
depend on PRIORLENS_DISABLE_NUMBA. The first numba call (compilation) is
excluded from the timings.
"""
import argparse
import time

import numpy as np

from priorlens import _kernels
from priorlens._accel import HAVE_NUMBA
from priorlens.criteria import gauss_hermite_truth


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def normal_case():
    rng = np.random.default_rng(0)
    x = rng.normal(1, 1, 25)
    G = 102
    lam = np.full(G, 0.01)
    eps = np.full(G, 0.01)
    mu = np.linspace(-2.5, 2.5, G)
    truth = gauss_hermite_truth(1.0, 1.0)
    return {
        "normal_grid_terms": (
            lambda: _kernels.normal_grid_terms_loops(x, lam, mu, eps),
            lambda: _kernels.normal_grid_terms_numpy(x, lam, mu, eps),
        ),
        "normal_log_predictive": (
            lambda: _kernels.normal_log_predictive_loops(truth.nodes, x, lam, mu, eps),
            lambda: _kernels.normal_log_predictive_numpy(truth.nodes, x, lam, mu, eps),
        ),
    }


def ridge_case():
    rng = np.random.default_rng(0)
    n, d = 100, 5
    X = 1 + rng.standard_normal((n, d))
    y = X.sum(axis=1) + 0.1 * rng.standard_normal(n)
    ev, Q = np.linalg.eigh(X.T @ X)
    px = np.ascontiguousarray(X @ Q)
    pb = Q.T @ (X.T @ y)
    lam = np.linspace(0.0, 10.0, 101)
    design = 1 + rng.standard_normal((2000, d))
    pnodes = np.ascontiguousarray(design @ Q)
    mean = design.sum(axis=1)
    return {
        "ridge_grid_terms": (
            lambda: _kernels.ridge_grid_terms_loops(ev, px, pb, y, float(y @ y), 0.1, lam),
            lambda: _kernels.ridge_grid_terms_numpy(ev, px, pb, y, float(y @ y), 0.1, lam),
        ),
        "ridge_generalization_loss": (
            lambda: _kernels.ridge_generalization_loss_loops(ev, pnodes, mean, pb, 0.1, lam),
            lambda: _kernels.ridge_generalization_loss_numpy(ev, pnodes, mean, pb, 0.1, lam),
        ),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=50)
    args = parser.parse_args()
    print(f"numba available: {HAVE_NUMBA}")
    print(f"{'kernel':28s} {'loops (ms)':>12s} {'numpy (ms)':>12s} {'ratio':>8s} {'max diff':>10s}")
    for name, (loops, vec) in {**normal_case(), **ridge_case()}.items():
        a = loops()  # compile
        b = vec()
        diff = float(np.nanmax(np.abs(np.asarray(a) - np.asarray(b))))
        t_loops = best_of(loops, args.repeat)
        t_vec = best_of(vec, args.repeat)
        print(f"{name:28s} {1e3 * t_loops:12.3f} {1e3 * t_vec:12.3f} {t_vec / t_loops:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
