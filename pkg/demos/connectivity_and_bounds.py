"""How good is the connectivity estimator, and how tight are the upper bounds?

First the estimator: on random sparse graphs of growing size we compare
the stochastic estimate of natural connectivity with the dense
eigendecomposition, timing both. The plain Hutchinson + Lanczos estimator
is shown next to the default variance-reduced one.

Then the bounds: we add a random path of k new edges to a planar graph and
compare the true connectivity after the addition with three upper bounds
that need nothing but the current graph.

Run with ``python demos/connectivity_and_bounds.py``.
"""

import time

import numpy as np

from ctbus.spectral import (
    ConnectivityEstimator, SpectralParams, _add_edges, estrada_upper_bound, general_upper_bound,
    natural_connectivity, natural_connectivity_exact, path_upper_bound, top_eigenvalues,
)
from ctbus.synthetic import random_new_path, random_planar_graph


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def estimator_table() -> None:
    print(f"{'n':>6} {'exact':>9} {'default':>9} {'plain':>9} {'t_est':>8} {'t_exact':>8}")
    plain = SpectralParams(taylor_degree=None, deflate=0)
    for n in (100, 500, 1000, 2000):
        A = random_planar_graph(n, 4.0, seed=n)
        natural_connectivity(A)  # first call builds the probe vectors
        ex, t_ex = timed(natural_connectivity_exact, A)
        est, t_est = timed(natural_connectivity, A)
        print(f"{n:6d} {ex:9.5f} {est:9.5f} {natural_connectivity(A, plain):9.5f} "
              f"{t_est * 1e3:6.1f}ms {t_ex * 1e3:6.0f}ms")


def increments() -> None:
    # shared probes make single-edge gains far more precise than two separate estimates
    A = random_planar_graph(300, 4.0, seed=1)
    est, exact = ConnectivityEstimator(A), ConnectivityEstimator(A, exact=True)
    rng = np.random.default_rng(0)
    print("single-edge gains, estimated vs exact:")
    for pair in random_new_path(A, 4, rng):
        print(f"  {pair}: {est.increment([pair]):.6f} vs {exact.increment([pair]):.6f}")


def bounds() -> None:
    rng = np.random.default_rng(7)
    A = random_planar_graph(80, 3.0, seed=7)
    lam = natural_connectivity_exact(A)
    m = A.nnz // 2
    print(f"\nplanar graph, n=80, m={m}, lambda={lam:.4f}")
    print(f"{'k':>2} {'exact':>8} {'path':>8} {'general':>8} {'Estrada':>8}")
    for k in range(1, 6):
        path = random_new_path(A, k, rng)
        after = natural_connectivity_exact(_add_edges(A, path))
        top = top_eigenvalues(A, 2 * k)
        print(f"{k:2d} {after:8.4f} {path_upper_bound(lam, top[:(k + 1) // 2], k, 80):8.4f} "
              f"{general_upper_bound(lam, top, k, 80):8.4f} {estrada_upper_bound(m, 80, k):8.4f}")
    print("the path bound uses that a k-edge path has known eigenvalues, so it is the tightest")


if __name__ == "__main__":
    estimator_table()
    increments()
    bounds()
