"""Candidate edges, their demand and connectivity gains, and the ranked lists."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, ParseError
from .graph import EARTH_RADIUS_M, RoadNetwork, TransitNetwork, edge_key, path_demand, shortest_paths_to, straight_line_distance
from .netio import write_json
from .spectral import ConnectivityEstimator, SpectralParams

log = logging.getLogger(__name__)

CACHE_FORMAT = "ctbus-precompute"
CACHE_VERSION = 1


@dataclass(frozen=True)
class CandidateEdge:
    """A stop-to-stop link, new or already in the transit network.

    ``road_path`` runs from the road vertex of stop ``u`` to that of ``v``;
    ``demand`` is the sum of ``f_e * |e|`` along it and ``delta`` the
    connectivity gain of adding the link alone (0 for existing links).
    """

    u: str
    v: str
    road_path: tuple[int, ...]
    length: float
    demand: float
    delta: float = 0.0
    is_new: bool = True

    @property
    def key(self) -> tuple[str, str]:
        return (self.u, self.v)


def _stop_pairs_within(transit: TransitNetwork, tau: float) -> list[tuple[str, str]]:
    ids = list(transit.stops)
    if len(ids) < 2:
        return []
    lat = np.radians([transit.stops[s].lat for s in ids])
    lng = np.radians([transit.stops[s].lng for s in ids])
    xyz = np.column_stack([np.cos(lat) * np.cos(lng), np.cos(lat) * np.sin(lng), np.sin(lat)])
    chord = 2 * math.sin(min(tau / (2 * EARTH_RADIUS_M), math.pi / 2))
    out = []
    for i, j in cKDTree(xyz).query_pairs(chord * (1 + 1e-9) + 1e-12):
        a, b = edge_key(ids[i], ids[j])
        if straight_line_distance(transit.stops[a].point, transit.stops[b].point) <= tau:
            out.append((a, b))
    return sorted(out)


def _with_road_paths(road: RoadNetwork, transit: TransitNetwork, pairs, is_new: bool, diagnostics):
    by_target = defaultdict(list)
    for a, b in pairs:
        by_target[transit.stops[b].road_vertex].append((a, b))
    out = []
    for target in sorted(by_target):
        group = by_target[target]
        paths = shortest_paths_to(road, target, {transit.stops[a].road_vertex for a, _ in group})
        for a, b in group:
            src = transit.stops[a].road_vertex
            if src not in paths:
                diagnostics["unreachable"] += 1
                if is_new:
                    continue
                # existing link without a road path: keep it, carrying no demand
                rp = (src, target) if src != target else (src,)
                length = straight_line_distance(transit.stops[a].point, transit.stops[b].point)
                out.append(CandidateEdge(a, b, rp, length, 0.0, 0.0, is_new))
                continue
            rp, length = paths[src]
            out.append(CandidateEdge(a, b, tuple(rp), float(length), path_demand(road, rp), 0.0, is_new))
    out.sort(key=lambda c: c.key)
    return out


def generate_candidate_edges(road: RoadNetwork, transit: TransitNetwork, tau: float = 500.0,
                             diagnostics: Counter | None = None) -> list[CandidateEdge]:
    """All unconnected stop pairs within straight-line distance ``tau`` meters.

    Pairs whose road vertices are disconnected are dropped and tallied under
    ``diagnostics["unreachable"]``.
    """
    diagnostics = diagnostics if diagnostics is not None else Counter()
    pairs = [p for p in _stop_pairs_within(transit, tau) if not transit.has_edge(*p)]
    out = _with_road_paths(road, transit, pairs, True, diagnostics)
    diagnostics["candidates"] += len(out)
    return out


def existing_edge_records(road: RoadNetwork, transit: TransitNetwork,
                          diagnostics: Counter | None = None) -> list[CandidateEdge]:
    """Road paths and demands of the links already in the transit network."""
    diagnostics = diagnostics if diagnostics is not None else Counter()
    return _with_road_paths(road, transit, transit.edges, False, diagnostics)


def connectivity_increment(A, pair: tuple[int, int], params: SpectralParams | None = None,
                           exact: bool = False) -> float:
    """Connectivity gain of adding the single edge ``pair`` (vertex indices) to ``A``."""
    return ConnectivityEstimator(A, params, exact=exact).increment([pair])


def compute_deltas(transit: TransitNetwork, candidates: Sequence[CandidateEdge],
                   params: SpectralParams | None = None, exact: bool = False,
                   threads: int = 1) -> list[CandidateEdge]:
    """Fill ``delta`` for every new candidate; all use the same estimator configuration."""
    if not candidates:
        return []
    est = ConnectivityEstimator(transit.A, params, exact=exact)
    idx = transit.index

    def one(c):
        return replace(c, delta=est.increment([(idx[c.u], idx[c.v])]))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, candidates))
    return [one(c) for c in candidates]


class RankedEdgeList:
    """Edges sorted by non-ascending key, ties broken by edge id.

    ``at(i)``/``edge_at(i)`` are 1-indexed positional lookups, ``self[e]``
    the key of edge ``e``.
    """

    def __init__(self, keys: Mapping[tuple[str, str], float]):
        self._order = sorted(keys, key=lambda e: (-keys[e], e))
        self._keys = dict(keys)
        self._vals = [self._keys[e] for e in self._order]
        self._rank = {e: i + 1 for i, e in enumerate(self._order)}
        self._prefix = np.concatenate([[0.0], np.cumsum(self._vals)])

    def __len__(self):
        return len(self._order)

    def __contains__(self, e):
        return e in self._keys

    def __getitem__(self, e) -> float:
        return self._keys[e]

    def __iter__(self):
        return iter(self._order)

    def at(self, i: int) -> float:
        if not 1 <= i <= len(self._order):
            raise IndexError(i)
        return self._vals[i - 1]

    def edge_at(self, i: int):
        if not 1 <= i <= len(self._order):
            raise IndexError(i)
        return self._order[i - 1]

    def rank(self, e) -> int:
        return self._rank[e]

    def top_sum(self, k: int) -> float:
        """Sum of the first ``min(k, len)`` keys."""
        return float(math.fsum(self._vals[: max(0, min(k, len(self._vals)))]))

    def items(self):
        return [(e, self._keys[e]) for e in self._order]


@dataclass(frozen=True)
class Normalizers:
    d_max: float
    lambda_max: float


@dataclass
class RankedLists:
    demand: RankedEdgeList        # L_d, new edges
    connectivity: RankedEdgeList  # L_lambda, new edges
    combined: RankedEdgeList      # L_e, new and existing edges


def compute_normalizers(L_d: RankedEdgeList, L_lam: RankedEdgeList, k: int) -> Normalizers:
    """Top-k sums of the demand and connectivity lists."""
    return Normalizers(L_d.top_sum(k), L_lam.top_sum(k))


def combined_key(demand: float, delta: float, w: float, norm: Normalizers) -> float:
    """Per-edge objective gain ``w * d / d_max + (1 - w) * delta / lambda_max``."""
    out = 0.0
    if w > 0:
        out += w * demand / norm.d_max
    if w < 1:
        out += (1 - w) * delta / norm.lambda_max
    return out


def check_normalizers(w: float, norm: Normalizers) -> None:
    if w > 0 and not norm.d_max > 0:
        raise ConfigurationError("demand normalizer d_max must be positive (no candidate carries demand)")
    if w < 1 and not norm.lambda_max > 0:
        raise ConfigurationError("connectivity normalizer lambda_max must be positive")


def build_ranked_lists(candidates: Sequence[CandidateEdge], existing_edges: Sequence[CandidateEdge],
                       w: float, normalizers: Normalizers) -> RankedLists:
    check_normalizers(w, normalizers)
    L_d = RankedEdgeList({c.key: c.demand for c in candidates})
    L_lam = RankedEdgeList({c.key: c.delta for c in candidates})
    keys = {c.key: combined_key(c.demand, c.delta, w, normalizers) for c in candidates}
    keys.update({c.key: combined_key(c.demand, 0.0, w, normalizers) for c in existing_edges})
    return RankedLists(L_d, L_lam, RankedEdgeList(keys))


def greedy_topk_edges(candidates: Sequence[CandidateEdge], k: int, recompute: bool = False,
                      transit: TransitNetwork | None = None, params: SpectralParams | None = None,
                      exact: bool = False) -> list[CandidateEdge]:
    """Connectivity-first baseline: the k candidates with the largest gain.

    By default uses the static ``delta`` ranking. With ``recompute`` the
    gains are re-evaluated against the graph grown so far (needs ``transit``).
    """
    if k >= len(candidates):
        if k > len(candidates):
            log.warning("only %d candidates for k=%d; returning all", len(candidates), k)
        return sorted(candidates, key=lambda c: (-c.delta, c.key))
    if not recompute:
        return sorted(candidates, key=lambda c: (-c.delta, c.key))[:k]
    if transit is None:
        raise ConfigurationError("recompute=True needs the transit network")
    est = ConnectivityEstimator(transit.A, params, exact=exact)
    idx = transit.index
    chosen: list[CandidateEdge] = []
    pairs: list[tuple[int, int]] = []
    remaining = list(candidates)
    for _ in range(k):
        gains = [(est.connectivity(pairs + [(idx[c.u], idx[c.v])]), c) for c in remaining]
        best_val = max(g[0] for g in gains)
        best = min((g[1] for g in gains if g[0] == best_val), key=lambda c: c.key)
        chosen.append(best)
        pairs.append((idx[best.u], idx[best.v]))
        remaining.remove(best)
    return chosen


# -- precomputation ----------------------------------------------------------------


@dataclass
class EdgeTable:
    """Precomputed new candidates and existing links for one dataset."""

    new: list[CandidateEdge]
    existing: list[CandidateEdge]

    def lists(self, w: float, k: int) -> tuple[RankedLists, Normalizers]:
        L_d = RankedEdgeList({c.key: c.demand for c in self.new})
        L_lam = RankedEdgeList({c.key: c.delta for c in self.new})
        norm = compute_normalizers(L_d, L_lam, k)
        return build_ranked_lists(self.new, self.existing, w, norm), norm


def precompute(road: RoadNetwork, transit: TransitNetwork, tau: float = 500.0,
               params: SpectralParams | None = None, exact: bool = False, threads: int = 1,
               diagnostics: Counter | None = None) -> EdgeTable:
    """Candidate generation, road paths, demands and connectivity gains."""
    diagnostics = diagnostics if diagnostics is not None else Counter()
    new = generate_candidate_edges(road, transit, tau, diagnostics)
    if transit.n:
        new = compute_deltas(transit, new, params, exact=exact, threads=threads)
    existing = existing_edge_records(road, transit, diagnostics)
    log.info("precomputed %d candidates, %d existing edges", len(new), len(existing))
    return EdgeTable(new, existing)


def _record(c: CandidateEdge) -> dict:
    d = asdict(c)
    d["road_path"] = list(c.road_path)
    return d


def save_edge_table(table: EdgeTable, path, input_hash: str, settings: Mapping | None = None) -> None:
    write_json({
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "input_hash": input_hash,
        "settings": dict(settings or {}),
        "new": [_record(c) for c in table.new],
        "existing": [_record(c) for c in table.existing],
    }, path)


def load_edge_table(path) -> tuple[EdgeTable, dict]:
    """Read a cache file; returns the table and its header fields."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CACHE_FORMAT or doc.get("version") != CACHE_VERSION:
        raise ParseError("not a ctbus precomputation cache (or wrong version)", path)

    def edge(r):
        return CandidateEdge(str(r["u"]), str(r["v"]), tuple(int(x) for x in r["road_path"]),
                             float(r["length"]), float(r["demand"]), float(r["delta"]), bool(r["is_new"]))

    header = {k: doc[k] for k in ("format", "version", "input_hash", "settings")}
    return EdgeTable([edge(r) for r in doc["new"]], [edge(r) for r in doc["existing"]]), header
