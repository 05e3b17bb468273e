"""Transfer-convenience metrics and the connectivity analysis experiments."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .candidates import CandidateEdge
from .errors import ConfigurationError
from .graph import RoutePath, TransitNetwork, adjacency_matrix, edge_key, straight_line_distance
from .spectral import (
    ConnectivityEstimator, SpectralParams, _add_edges, estrada_upper_bound, general_upper_bound,
    natural_connectivity, natural_connectivity_exact, path_upper_bound, top_eigenvalues,
)
from .synthetic import random_graph, random_new_edges, random_new_path, random_planar_graph

log = logging.getLogger(__name__)


# -- transfer metrics -------------------------------------------------------------


@dataclass
class TransferMetrics:
    """``transfers_avoided`` averages over unordered stop pairs of the route;
    ``distance_ratio`` averages old/new shortest distances over ordered pairs."""

    transfers_avoided: float
    distance_ratio: float
    crossed_routes: int
    pairs: int
    skipped_pairs: int

    def to_dict(self) -> dict:
        return asdict(self)


def _weighted(transit: TransitNetwork, lengths: Mapping[tuple[str, str], float]) -> sp.csr_array:
    idx = transit.index
    rows, cols, vals = [], [], []
    for a, b in transit.edges:
        d = lengths.get((a, b))
        if d is None:
            d = straight_line_distance(transit.stops[a].point, transit.stops[b].point)
        d = max(float(d), 1e-9)  # csgraph drops explicit zeros
        rows += [idx[a], idx[b]]
        cols += [idx[b], idx[a]]
        vals += [d, d]
    return sp.csr_array((vals, (rows, cols)), shape=(transit.n, transit.n))


def min_transfers(owner_sets: Sequence[frozenset]) -> int:
    """Fewest route changes needed to ride a sequence of edges.

    ``owner_sets[i]`` lists the routes serving edge ``i``; a change is
    counted whenever consecutive edges are ridden on different routes.
    """
    if not owner_sets:
        return 0
    cost = {r: 0 for r in owner_sets[0]}
    for owners in owner_sets[1:]:
        best = min(cost.values())
        cost = {r: min(cost.get(r, math.inf), best + 1) for r in owners}
    return int(min(cost.values()))


def _walk(pred_row, src: int, dst: int) -> list[int]:
    path = [dst]
    while path[-1] != src:
        path.append(int(pred_row[path[-1]]))
    return path[::-1]


def transfer_metrics(mu: RoutePath, old: TransitNetwork, new: TransitNetwork,
                     lengths: Mapping[tuple[str, str], float] | None = None,
                     diagnostics: Counter | None = None) -> TransferMetrics:
    """Transfers avoided, distance ratio and crossed routes for a planned route.

    ``lengths`` gives the travel distance of each transit edge keyed by
    :func:`edge_key`; missing edges fall back to straight-line distance.
    Pairs disconnected in the old network are skipped and counted.
    """
    diagnostics = diagnostics if diagnostics is not None else Counter()
    lengths = lengths or {}
    stops = list(dict.fromkeys(mu.stops))
    missing = [s for s in stops if s not in old.index or s not in new.index]
    if missing:
        raise ConfigurationError(f"route stops {missing[:3]} are not in both networks")
    src_old = [old.index[s] for s in stops]
    src_new = [new.index[s] for s in stops]
    d_old, pred = dijkstra(_weighted(old, lengths), indices=src_old, return_predecessors=True)
    d_new = dijkstra(_weighted(new, lengths), indices=src_new)
    old_ids = list(old.stops)
    ratios, transfers, skipped = [], [], 0
    for i, j in combinations(range(len(stops)), 2):
        a, b = src_old[i], src_old[j]
        if not np.isfinite(d_old[i, b]):
            skipped += 1
            continue
        nb = src_new[j]
        dn = d_new[i, nb]
        ratio = d_old[i, b] / dn if dn > 0 else 1.0
        ratios += [ratio, ratio]
        walk = _walk(pred[i], a, b)
        owners = [old.edge_routes[edge_key(old_ids[x], old_ids[y])] for x, y in zip(walk, walk[1:])]
        transfers.append(min_transfers(owners))
    diagnostics["disconnected_pairs"] += skipped
    route_stops = set(stops)
    crossed = sum(1 for seq in old.routes.values() if route_stops.intersection(seq))
    return TransferMetrics(
        transfers_avoided=float(np.mean(transfers)) if transfers else 0.0,
        distance_ratio=float(math.fsum(ratios) / len(ratios)) if ratios else 1.0,
        crossed_routes=crossed,
        pairs=len(transfers),
        skipped_pairs=skipped,
    )


def edge_lengths(records: Iterable[CandidateEdge]) -> dict[tuple[str, str], float]:
    return {r.key: r.length for r in records}


# -- experiments ---------------------------------------------------------------------


def _connectivity(A, params: SpectralParams | None, exact: bool) -> float:
    return natural_connectivity_exact(A) if exact else natural_connectivity(A, params)


def monotonicity_experiment(transit: TransitNetwork, steps: int = 10, params: SpectralParams | None = None,
                            exact: bool = False, seed: int = 0) -> list[dict]:
    """Connectivity as whole routes are removed cumulatively in random order.

    Returns ``steps + 1`` rows from nothing removed to every route removed;
    stops are kept throughout, so the last row has connectivity 0.
    """
    if steps < 1:
        raise ConfigurationError("steps must be >= 1")
    order = list(np.random.default_rng(seed).permutation(sorted(transit.routes)))
    R = len(order)
    idx = transit.index
    rows = []
    for j in range(steps + 1):
        frac = j / steps
        gone = set(order[: int(round(frac * R))])
        pairs = [(idx[a], idx[b]) for (a, b), owners in transit.edge_routes.items() if owners - gone]
        A = adjacency_matrix(transit.n, pairs)
        rows.append({"fraction_removed": frac, "routes_removed": len(gone), "edges": len(pairs),
                     "connectivity": _connectivity(A, params, exact)})
    return rows


def sample_path_edges(candidates: Sequence[CandidateEdge], size: int, rng, tries: int = 200):
    """A random simple path of ``size`` candidate edges (random walk without revisits)."""
    nbrs: dict[str, list[CandidateEdge]] = {}
    for c in candidates:
        nbrs.setdefault(c.u, []).append(c)
        nbrs.setdefault(c.v, []).append(c)
    starts = sorted(nbrs)
    for _ in range(tries):
        cur = starts[int(rng.integers(len(starts)))]
        seen, chosen = {cur}, []
        while len(chosen) < size:
            opts = [c for c in nbrs[cur] if (c.v if c.u == cur else c.u) not in seen]
            if not opts:
                break
            c = opts[int(rng.integers(len(opts)))]
            chosen.append(c)
            cur = c.v if c.u == cur else c.u
            seen.add(cur)
        if len(chosen) == size:
            return chosen
    return None


def submodularity_experiment(transit: TransitNetwork, candidates: Sequence[CandidateEdge],
                             sizes: Sequence[int], trials: int = 20, params: SpectralParams | None = None,
                             exact: bool = False, seed: int = 0, sampler: str = "path") -> list[dict]:
    """Relative gap ``theta = (joint - sum) / sum`` between a set's joint connectivity
    gain and the sum of its single-edge gains.

    ``sampler="path"`` draws edge sets forming a simple path (route shaped),
    ``"random"`` draws uniform subsets. Samples whose single gains sum to
    zero are skipped.
    """
    if sampler not in ("path", "random"):
        raise ConfigurationError(f"unknown sampler {sampler!r}")
    est = ConnectivityEstimator(transit.A, params, exact=exact)
    idx = transit.index
    single: dict[tuple[str, str], float] = {}

    def gain(c):
        if c.key not in single:
            single[c.key] = est.increment([(idx[c.u], idx[c.v])])
        return single[c.key]

    rng = np.random.default_rng(seed)
    cands = sorted(candidates, key=lambda c: c.key)
    rows = []
    for size in sizes:
        for trial in range(trials):
            if sampler == "path":
                chosen = sample_path_edges(cands, size, rng)
            elif size <= len(cands):
                chosen = [cands[i] for i in sorted(rng.choice(len(cands), size=size, replace=False))]
            else:
                chosen = None
            if chosen is None:
                log.warning("could not sample %d edges", size)
                continue
            total = math.fsum(gain(c) for c in chosen)
            if total == 0:
                continue
            joint = gain(chosen[0]) if size == 1 else est.increment([(idx[c.u], idx[c.v]) for c in chosen])
            rows.append({"size": size, "trial": trial, "sum_delta": total, "joint_delta": joint,
                         "theta": (joint - total) / total})
    return rows


@dataclass
class BoundInstance:
    A: sp.csr_array
    pairs: list[tuple[int, int]]
    kind: str  # "path" or "edges"


def random_bound_instances(count: int, kind: str = "path", n_range=(10, 100), k_range=(1, 5),
                           mean_degree: float = 3.0, planar: bool = True, seed: int = 0) -> list[BoundInstance]:
    """Random graphs with ``k`` added edges (a simple path or arbitrary non-edges)."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        k = int(rng.integers(k_range[0], k_range[1] + 1))
        gseed = int(rng.integers(2**31))
        A = random_planar_graph(n, mean_degree, gseed) if planar else random_graph(n, int(mean_degree * n / 2), gseed)
        pairs = random_new_path(A, k, rng) if kind == "path" else random_new_edges(A, k, rng)
        if pairs is None:
            continue
        out.append(BoundInstance(A, pairs, kind))
    return out


def bound_row(inst: BoundInstance, pool_size: int = 50, seed: int = 0) -> dict:
    """Exact connectivity after the addition next to every bound.

    The increment bound adds the ``k`` largest single-edge gains found in a
    pool of non-edges (the added edges plus ``pool_size`` random others).
    """
    A = sp.csr_array(inst.A)
    n, k = A.shape[0], len(inst.pairs)
    m = int(A.nnz // 2)
    est = ConnectivityEstimator(A, exact=True)
    lam = est.base
    exact = natural_connectivity_exact(_add_edges(A, inst.pairs)) if k else lam
    row = {"n": n, "m": m, "k": k, "kind": inst.kind, "lambda_G": lam, "exact": exact}
    if k:
        rng = np.random.default_rng(seed)
        pool = set(inst.pairs)
        for p in random_new_edges(A, min(pool_size, n * (n - 1) // 2 - m - k), rng):
            pool.add(p)
        gains = sorted((est.increment([p]) for p in pool), reverse=True)
        row["increment"] = lam + math.fsum(gains[:k])
    else:
        row["increment"] = lam
    top = top_eigenvalues(A, min(2 * k, n)) if k else np.zeros(0)
    row["general"] = general_upper_bound(lam, top, k, n)
    row["estrada"] = estrada_upper_bound(m, n, k)
    if inst.kind == "path":
        row["path"] = path_upper_bound(lam, top[: (k + 1) // 2], k, n)
    return row


def bound_tightness_report(instances: Sequence[BoundInstance], tol: float = 1e-9,
                           pool_size: int = 50) -> tuple[list[dict], dict]:
    """Rows for every instance plus soundness violations and ordering tallies."""
    rows = [bound_row(inst, pool_size, seed=i) for i, inst in enumerate(instances)]
    tally = Counter()
    for r in rows:
        tally["rows"] += 1
        for name in ("general", "estrada", "path"):
            if name in r and r["exact"] > r[name] + tol:
                tally[f"violations_{name}"] += 1
        if r["exact"] > r["increment"] + tol:
            tally["increment_below_exact"] += 1
        if "path" in r:
            tally["path_rows"] += 1
            tally["path_le_general"] += r["path"] <= r["general"] + tol
            tally["general_le_estrada"] += r["general"] <= r["estrada"] + tol
            tally["path_le_general_le_estrada"] += r["path"] <= r["general"] + tol and r["general"] <= r["estrada"] + tol
    return rows, dict(sorted(tally.items()))


def rows_to_csv(rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    """CSV text with a header row; floats written with ``repr`` precision."""
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r.get(c, "") for c in columns})
    return buf.getvalue()
