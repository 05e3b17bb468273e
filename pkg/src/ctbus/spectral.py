"""Natural connectivity of transit graphs and spectral upper bounds.

The estimator combines Hutchinson's trace estimator (Gaussian probes) with a
short Lanczos recurrence per probe to evaluate ``v^T exp(A) v``. By default a
Taylor polynomial of ``A`` whose trace is computed exactly is used as a
control variate: the probes only estimate the trace of the remainder
``exp(A) - p(A)``, which is orders of magnitude smaller on sparse graphs.
What is left is dominated by the largest eigenvalues, so the top
``deflate`` eigenvectors of the base graph are split off: their quadratic
forms are evaluated directly and the random probes are projected onto the
orthogonal complement. Set ``taylor_degree=None, deflate=0`` for the plain
estimator.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.special import logsumexp

from .errors import ConfigurationError, ConvergenceError, EmptyGraphError, IntegrityError, SizeLimitError

EXACT_SIZE_LIMIT = 5000


@dataclass(frozen=True)
class SpectralParams:
    """Estimator configuration.

    s probes, t Lanczos steps per probe. ``epsilon``/``delta`` document the
    accuracy target and failure budget; they do not change the computation.
    """

    s: int = 50
    t: int = 10
    seed: int = 0
    epsilon: float = 0.01
    delta: float = 0.05
    taylor_degree: int | None = 8
    deflate: int = 1

    def __post_init__(self):
        if self.s < 1 or self.t < 1:
            raise ConfigurationError("s and t must be >= 1")
        if self.deflate < 0:
            raise ConfigurationError("deflate must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ConfigurationError("epsilon must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.taylor_degree is not None and not 0 <= self.taylor_degree <= 2 * self.t - 1:
            raise ConfigurationError("taylor_degree must lie in [0, 2t-1]")


def _as_csr(A) -> sp.csr_array:
    if sp.issparse(A):
        return sp.csr_array(A, dtype=np.float64)
    return sp.csr_array(np.asarray(A, dtype=np.float64))


# -- Lanczos ---------------------------------------------------------------


def _lanczos_block(A, V: np.ndarray, t: int):
    """Run independent Lanczos recurrences on every column of ``V``.

    Full reorthogonalisation against all previous basis vectors. Returns
    ``(alpha, beta, steps, norms)`` where column ``c`` produced a tridiagonal
    matrix of size ``steps[c]`` (smaller than ``t`` after breakdown).
    """
    n, s = V.shape
    norms = np.sqrt(np.einsum("ns,ns->s", V, V))
    Q = np.empty((t + 1, n, s))
    safe = np.where(norms > 0, norms, 1.0)
    np.divide(V, safe, out=Q[0])
    alpha = np.zeros((t, s))
    beta = np.zeros((t, s))
    steps = np.full(s, t, dtype=np.int64)
    alive = norms > 0
    steps[~alive] = 0
    Q[0][:, ~alive] = 0.0
    scale = 1.0
    for j in range(t):
        w = A @ Q[j]
        alpha[j] = np.einsum("ns,ns->s", w, Q[j])
        w -= alpha[j] * Q[j]
        if j > 0:
            w -= beta[j - 1] * Q[j - 1]
        c = np.einsum("jns,ns->js", Q[: j + 1], w)
        w -= np.einsum("jns,js->ns", Q[: j + 1], c)
        b = np.sqrt(np.einsum("ns,ns->s", w, w))
        scale = max(scale, float(np.max(np.abs(alpha[j]), initial=0.0)), float(np.max(b, initial=0.0)))
        broke = alive & (b <= 1e-10 * scale)
        if broke.any():
            steps[broke] = j + 1
            alive &= ~broke
        if not alive.any():
            break
        if alive.all():
            beta[j] = b
            np.divide(w, b, out=Q[j + 1])
        else:
            b = np.where(alive, b, 0.0)
            beta[j] = b
            np.divide(w, np.where(alive, b, 1.0), out=Q[j + 1])
            Q[j + 1][:, ~alive] = 0.0
    return alpha, beta, steps, norms


def _tridiag_quadforms(alpha, beta, steps, norms, fn) -> np.ndarray:
    """``||v||^2 * e1^T fn(T) e1`` for every column's tridiagonal ``T``."""
    s = alpha.shape[1]
    out = np.zeros(s)
    for m in np.unique(steps):
        if m == 0:
            continue
        cols = np.flatnonzero(steps == m)
        T = np.zeros((len(cols), m, m))
        idx = np.arange(m)
        T[:, idx, idx] = alpha[:m, cols].T
        if m > 1:
            off = beta[: m - 1, cols].T
            T[:, idx[:-1], idx[1:]] = off
            T[:, idx[1:], idx[:-1]] = off
        theta, U = np.linalg.eigh(T)
        out[cols] = norms[cols] ** 2 * np.einsum("cm,cm->c", U[:, 0, :] ** 2, fn(theta))
    return out


def lanczos_quadform_exp(A, v, t: int) -> float:
    """Approximate ``v^T exp(A) v`` with ``t`` Lanczos steps started at ``v``.

    Exact (to rounding) once ``t`` reaches the dimension of the Krylov space.
    """
    if t < 1:
        raise ConfigurationError("t must be >= 1")
    v = np.asarray(v, dtype=np.float64).reshape(-1, 1)
    A = _as_csr(A)
    a, b, steps, norms = _lanczos_block(A, v, t)
    return float(_tridiag_quadforms(a, b, steps, norms, np.exp)[0])


# -- Hutchinson --------------------------------------------------------------


@lru_cache(maxsize=32)
def _probes(n: int, s: int, seed: int) -> np.ndarray:
    # Column i comes from its own stream seeded by (seed, i): order independent.
    V = np.empty((n, s))
    for i in range(s):
        V[:, i] = np.random.default_rng([seed, i]).standard_normal(n)
    V.setflags(write=False)
    return V


def _taylor_fn(degree: int | None):
    if degree is None:
        return np.exp
    coef = [1.0 / math.factorial(j) for j in range(degree + 1)]

    def remainder(theta):
        poly = np.zeros_like(theta)
        for c in reversed(coef):
            poly = poly * theta + c
        return np.exp(theta) - poly

    return remainder


def power_traces(A, degree: int) -> list[float]:
    """Exact ``tr(A^j)`` for ``j = 0..degree`` from sparse matrix powers."""
    A = _as_csr(A)
    n = A.shape[0]
    traces = [float(n)]
    if degree >= 1:
        traces.append(float(A.diagonal().sum()))
    pows = [sp.identity(n, format="csr"), A]
    for j in range(2, degree + 1):
        a = j // 2
        b = j - a
        while len(pows) <= b:
            pows.append(pows[-1] @ A)
        if a == b:  # tr(A^2a) = ||A^a||_F^2 for symmetric A
            traces.append(float(np.dot(pows[a].data, pows[a].data)))
        else:
            traces.append(float(pows[a].multiply(pows[b]).sum()))
    return traces


def taylor_trace(A, degree: int) -> float:
    """Exact ``tr(sum_j A^j / j!)`` for ``j <= degree``."""
    return math.fsum(tr / math.factorial(j) for j, tr in enumerate(power_traces(A, degree)))


def deflation_basis(A, m: int) -> np.ndarray:
    """Orthonormal ``(n, m')`` basis of approximate top eigenvectors of ``A``.

    Any orthonormal basis keeps the trace estimate unbiased; eigenvectors
    just make it accurate. ``m' < m`` when ``A`` is too small or ARPACK fails.
    """
    A = _as_csr(A)
    n = A.shape[0]
    m = min(m, n)
    if m == 0:
        return np.zeros((n, 0))
    if n <= 200:
        U = np.linalg.eigh(A.toarray())[1][:, ::-1][:, :m]
    else:
        try:
            U = eigsh(A, k=m, which="LA", v0=np.ones(n), tol=1e-6, maxiter=20 * n,
                      ncv=min(n, max(2 * m + 1, 20)))[1]
        except ArpackNoConvergence:
            return np.zeros((n, 0))
    return np.linalg.qr(U)[0]


def estimate_trace_exp(A, params: SpectralParams | None = None, *, base_trace: float | None = None,
                       basis: np.ndarray | None = None) -> float:
    """Stochastic estimate of ``tr(exp(A))``.

    ``base_trace`` lets callers pass a precomputed :func:`taylor_trace`
    for the control variate and ``basis`` a precomputed
    :func:`deflation_basis`.
    """
    params = params or SpectralParams()
    A = _as_csr(A)
    n = A.shape[0]
    if n == 0:
        return 0.0
    U = deflation_basis(A, params.deflate) if basis is None else basis
    V = np.array(_probes(n, params.s, params.seed))
    if U.shape[1]:
        V -= U @ (U.T @ V)
    a, b, steps, norms = _lanczos_block(A, np.hstack([V, U]), params.t)
    q = _tridiag_quadforms(a, b, steps, norms, _taylor_fn(params.taylor_degree))
    est = math.fsum(q[: params.s]) / params.s + math.fsum(q[params.s:])
    if params.taylor_degree is not None:
        est += taylor_trace(A, params.taylor_degree) if base_trace is None else base_trace
    return est


def natural_connectivity(A, params: SpectralParams | None = None) -> float:
    """Estimated natural connectivity ``ln(tr(exp(A)) / n)``."""
    A = _as_csr(A)
    n = A.shape[0]
    if n == 0:
        raise EmptyGraphError("natural connectivity is undefined for an empty vertex set")
    return math.log(estimate_trace_exp(A, params) / n)


def natural_connectivity_exact(A) -> float:
    """Natural connectivity from a dense symmetric eigendecomposition."""
    A = _as_csr(A)
    n = A.shape[0]
    if n == 0:
        raise EmptyGraphError("natural connectivity is undefined for an empty vertex set")
    if n > EXACT_SIZE_LIMIT:
        raise SizeLimitError(f"dense eigendecomposition refused for n={n} > {EXACT_SIZE_LIMIT}")
    lam = np.linalg.eigvalsh(A.toarray())
    return float(logsumexp(lam) - math.log(n))


# -- incremental evaluation ----------------------------------------------------


def _add_edges(A: sp.csr_array, pairs: Sequence[tuple[int, int]]) -> sp.csr_array:
    if not pairs:
        return A
    ij = np.asarray(pairs, dtype=np.int64)
    n = A.shape[0]
    rows = np.concatenate([ij[:, 0], ij[:, 1]])
    cols = np.concatenate([ij[:, 1], ij[:, 0]])
    E = sp.csr_array((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return (A + E).tocsr()


def _ball(A: sp.csr_array, seeds: Iterable[int], radius: int) -> np.ndarray:
    indptr, indices = A.indptr, A.indices
    depth = {s: 0 for s in seeds}
    queue = deque(depth)
    while queue:
        x = queue.popleft()
        if depth[x] == radius:
            continue
        for y in indices[indptr[x]:indptr[x + 1]]:
            y = int(y)
            if y not in depth:
                depth[y] = depth[x] + 1
                queue.append(y)
    return np.array(sorted(depth), dtype=np.int64)


class ConnectivityEstimator:
    """Natural connectivity of ``A`` and of ``A`` plus a few extra edges.

    Probe vectors are shared between the base graph and every augmented
    graph, so increments are computed with common random numbers. With the
    control variate on, the exact polynomial trace of an augmented graph is
    obtained from the base value plus a correction computed on the small
    neighbourhood that closed walks through the new edges can reach.
    """

    def __init__(self, A, params: SpectralParams | None = None, exact: bool = False):
        self.A = _as_csr(A)
        self.n = self.A.shape[0]
        if self.n == 0:
            raise EmptyGraphError("natural connectivity is undefined for an empty vertex set")
        self.params = params or SpectralParams()
        self.exact = exact
        deg = self.params.taylor_degree
        self._base_trace = taylor_trace(self.A, deg) if (deg is not None and not exact) else None
        self._basis = None if exact else deflation_basis(self.A, self.params.deflate)
        self.base = self._value(self.A, self._base_trace)

    def _value(self, M, base_trace):
        if self.exact:
            return natural_connectivity_exact(M)
        est = estimate_trace_exp(M, self.params, base_trace=base_trace, basis=self._basis)
        return math.log(est / self.n)

    def _check_new(self, pairs):
        seen = set()
        for i, j in pairs:
            if i == j:
                raise IntegrityError(f"self loop on vertex {i}")
            key = (min(i, j), max(i, j))
            if key in seen or self.A[i, j] != 0:
                raise IntegrityError(f"edge {key} is already present")
            seen.add(key)

    def connectivity(self, pairs: Sequence[tuple[int, int]] = ()) -> float:
        """Natural connectivity after adding the index pairs in ``pairs``."""
        pairs = [tuple(map(int, p)) for p in pairs]
        if not pairs:
            return self.base
        self._check_new(pairs)
        M = _add_edges(self.A, pairs)
        base_trace = None
        deg = self.params.taylor_degree
        if self._base_trace is not None:
            base_trace = self._base_trace + self._local_trace_change(pairs, deg)
        return self._value(M, base_trace)

    def increment(self, pairs: Sequence[tuple[int, int]]) -> float:
        """``lambda(A + pairs) - lambda(A)``."""
        return self.connectivity(pairs) - self.base

    def _local_trace_change(self, pairs, degree):
        # Closed walks of length <= degree through a new edge stay within
        # degree // 2 hops of its endpoints.
        if degree < 2:
            return 0.0
        M = _add_edges(self.A, pairs)
        nodes = _ball(M, {v for p in pairs for v in p}, degree // 2)
        sub_old = self.A[nodes][:, nodes]
        sub_new = M[nodes][:, nodes]
        return taylor_trace(sub_new, degree) - taylor_trace(sub_old, degree)


# -- eigenvalues and bounds ------------------------------------------------------


def top_eigenvalues(A, m: int, maxiter: int | None = None) -> np.ndarray:
    """The ``m`` algebraically largest eigenvalues of ``A``, non-ascending."""
    A = _as_csr(A)
    n = A.shape[0]
    if not 1 <= m <= n:
        raise ConfigurationError(f"need 1 <= m <= n, got m={m}, n={n}")
    if n <= 200 or m >= n - 1:
        return np.linalg.eigvalsh(A.toarray())[::-1][:m].copy()
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        vals = eigsh(A, k=m, which="LA", v0=v0, tol=0, maxiter=maxiter or 100 * n,
                     ncv=min(n, max(2 * m + 1, 40)), return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"eigsh did not converge for m={m}") from exc
    return np.sort(vals)[::-1]


def path_graph_eigenvalues(k: int) -> np.ndarray:
    """Adjacency spectrum ``2 cos(i pi / (k + 2))``, ``i = 1..k+1``, of a k-edge path."""
    if k < 1:
        raise ConfigurationError("a path needs at least one edge")
    i = np.arange(1, k + 2)
    return 2.0 * np.cos(i * np.pi / (k + 2))


def estrada_upper_bound(m_edges: int, n: int, k: int) -> float:
    """Natural connectivity bound from the Estrada-index bound, any ``k`` added edges."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    return math.log1p(math.expm1(math.sqrt(2 * (m_edges + k))) / n)


def general_upper_bound(lambda_G: float, top2k: Sequence[float], k: int, n: int) -> float:
    """Bound on connectivity after adding any ``k`` edges.

    ``top2k`` holds the ``min(2k, n)`` largest adjacency eigenvalues.
    """
    top = np.asarray(top2k, dtype=np.float64)
    if len(top) != min(2 * k, n):
        raise IntegrityError(f"expected {min(2 * k, n)} eigenvalues, got {len(top)}")
    if k == 0:
        return float(lambda_G)
    head = max(math.exp(lambda_G) - math.fsum(np.exp(top)) / n, 0.0)
    tail = math.exp(top[0]) / n * (math.exp(math.sqrt(2 * k)) + 2 * k - 1)
    return math.log(head + tail)


def path_upper_bound(lambda_G: float, top: Sequence[float], k: int, n: int) -> float:
    """Bound on connectivity after adding a simple path of ``k`` new edges.

    ``top`` holds the ``floor((k + 1) / 2)`` largest adjacency eigenvalues.
    """
    top = np.asarray(top, dtype=np.float64)
    if k == 0:
        if len(top):
            raise IntegrityError("k = 0 takes no eigenvalues")
        return float(lambda_G)
    m = (k + 1) // 2
    if len(top) != m:
        raise IntegrityError(f"expected {m} eigenvalues, got {len(top)}")
    sigma = path_graph_eigenvalues(k)[:m]
    gain = math.fsum(np.expm1(sigma) * np.exp(top)) / n
    return math.log(math.exp(lambda_G) + gain)
