"""Road and transit network containers, shortest paths and geometry helpers."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import IntegrityError, NoPathError

EARTH_RADIUS_M = 6_371_000.0


def edge_key(u, v):
    """Canonical (smaller, larger) key of an undirected edge."""
    return (u, v) if u <= v else (v, u)


@dataclass
class RoadNetwork:
    """Undirected road graph.

    ``coords`` maps vertex id to ``(lat, lng)`` in degrees, ``adj`` holds
    symmetric edge lengths in meters and ``demand`` the trajectory count
    ``f_e`` keyed by :func:`edge_key`. Missing demand entries count as zero.
    """

    coords: dict[int, tuple[float, float]]
    adj: dict[int, dict[int, float]]
    demand: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.adj.values()) // 2

    def edges(self):
        for u in sorted(self.adj):
            for v in sorted(self.adj[u]):
                if u < v:
                    yield u, v

    def length(self, u: int, v: int) -> float:
        try:
            return self.adj[u][v]
        except KeyError:
            raise IntegrityError(f"road vertices {u} and {v} are not adjacent") from None

    def flow(self, u: int, v: int) -> int:
        return self.demand.get(edge_key(u, v), 0)

    def with_demand(self, demand: Mapping[tuple[int, int], int]) -> "RoadNetwork":
        """Copy sharing geometry but carrying a different demand map."""
        return RoadNetwork(self.coords, self.adj, dict(demand))


@dataclass(frozen=True)
class Stop:
    id: str
    road_vertex: int
    lat: float
    lng: float

    @property
    def point(self) -> tuple[float, float]:
        return (self.lat, self.lng)


class TransitNetwork:
    """Undirected stop graph built from bus routes.

    Edges are deduplicated across routes; ``edge_routes`` keeps, for every
    edge, the ids of the routes running over it.
    """

    def __init__(self, stops: Sequence[Stop], routes: Mapping[str, Sequence[str]],
                 extra_edges: Mapping[tuple[str, str], Iterable[str]] | None = None):
        self.stops: dict[str, Stop] = {}
        for s in stops:
            if s.id in self.stops:
                raise IntegrityError(f"duplicate stop id {s.id!r}")
            self.stops[s.id] = s
        self.routes: dict[str, tuple[str, ...]] = {}
        owners: dict[tuple[str, str], set[str]] = {}
        for rid, seq in routes.items():
            seq = tuple(str(x) for x in seq)
            if len(seq) < 2:
                raise IntegrityError(f"route {rid!r} has fewer than 2 stops")
            for a, b in zip(seq, seq[1:]):
                for x in (a, b):
                    if x not in self.stops:
                        raise IntegrityError(f"route {rid!r} references unknown stop {x!r}")
                if a == b:
                    raise IntegrityError(f"route {rid!r} repeats stop {a!r} consecutively")
                owners.setdefault(edge_key(a, b), set()).add(rid)
            self.routes[rid] = seq
        for key, rids in (extra_edges or {}).items():
            a, b = key
            for x in (a, b):
                if x not in self.stops:
                    raise IntegrityError(f"edge references unknown stop {x!r}")
            owners.setdefault(edge_key(a, b), set()).update(rids)
        self.edge_routes: dict[tuple[str, str], frozenset[str]] = {
            k: frozenset(v) for k, v in sorted(owners.items())
        }
        self.index: dict[str, int] = {sid: i for i, sid in enumerate(self.stops)}
        self._nbrs: dict[str, set[str]] = {sid: set() for sid in self.stops}
        for a, b in self.edge_routes:
            self._nbrs[a].add(b)
            self._nbrs[b].add(a)
        self._A = None

    @property
    def n(self) -> int:
        return len(self.stops)

    @property
    def m(self) -> int:
        return len(self.edge_routes)

    @property
    def edges(self) -> list[tuple[str, str]]:
        return list(self.edge_routes)

    def has_edge(self, a: str, b: str) -> bool:
        return edge_key(a, b) in self.edge_routes

    def neighbors(self, sid: str) -> set[str]:
        return self._nbrs[sid]

    def coords(self) -> dict[str, tuple[float, float]]:
        return {sid: s.point for sid, s in self.stops.items()}

    @property
    def A(self) -> sp.csr_array:
        """Sparse symmetric 0/1 adjacency in stop-index order."""
        if self._A is None:
            self._A = adjacency_matrix(self.n, [(self.index[a], self.index[b]) for a, b in self.edge_routes])
        return self._A

    def with_edges(self, new_edges: Iterable[tuple[str, str]], route_id: str) -> "TransitNetwork":
        """Copy with extra edges owned by ``route_id``; existing routes are kept."""
        extra = {k: set(v) for k, v in self.edge_routes.items()}
        for a, b in new_edges:
            extra.setdefault(edge_key(a, b), set()).add(route_id)
        return TransitNetwork(list(self.stops.values()), self.routes, extra)


def adjacency_matrix(n: int, pairs: Iterable[tuple[int, int]]) -> sp.csr_array:
    pairs = list(pairs)
    if not pairs:
        return sp.csr_array((n, n), dtype=np.float64)
    ij = np.asarray(pairs, dtype=np.int64)
    rows = np.concatenate([ij[:, 0], ij[:, 1]])
    cols = np.concatenate([ij[:, 1], ij[:, 0]])
    A = sp.csr_array((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    A.data[:] = 1.0
    return A


@dataclass(frozen=True)
class RoutePath:
    """A planned route: stop sequence plus the concatenated road-vertex walk."""

    stops: tuple[str, ...]
    road_path: tuple[int, ...] = ()
    new_edges: frozenset = frozenset()

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [edge_key(a, b) for a, b in zip(self.stops, self.stops[1:])]

    @property
    def is_loop(self) -> bool:
        return len(self.stops) > 2 and self.stops[0] == self.stops[-1]

    def __len__(self) -> int:
        return max(len(self.stops) - 1, 0)


def _dijkstra_until(road: RoadNetwork, source: int, targets: set[int]) -> dict[int, float]:
    """Settled distances from ``source``; stops once every target is settled."""
    dist: dict[int, float] = {}
    heap = [(0.0, source)]
    pending = set(targets)
    best = {source: 0.0}
    while heap and pending:
        d, x = heapq.heappop(heap)
        if x in dist:
            continue
        dist[x] = d
        pending.discard(x)
        for y, w in road.adj.get(x, {}).items():
            nd = d + w
            if y not in dist and nd < best.get(y, math.inf):
                best[y] = nd
                heapq.heappush(heap, (nd, y))
    return dist


def _walk_down(road: RoadNetwork, start: int, dist: Mapping[int, float]) -> list[int]:
    # From ``start`` follow the smallest-id neighbour that stays on a shortest path.
    path = [start]
    x = start
    while dist[x] > 0:
        tol = 1e-9 * (1.0 + dist[x])
        nxt = None
        for y in sorted(road.adj[x]):
            if y in dist and abs(dist[x] - road.adj[x][y] - dist[y]) <= tol:
                nxt = y
                break
        if nxt is None:  # pragma: no cover - guarded by Dijkstra invariants
            raise NoPathError(f"inconsistent distance labels at {x}")
        path.append(nxt)
        x = nxt
    return path


def shortest_paths_to(road: RoadNetwork, target: int, sources: Iterable[int]):
    """Shortest paths from each source to one target.

    Returns ``{source: (vertex list, length)}``; unreachable sources are
    omitted. Among equal-length paths the lexicographically smallest vertex
    sequence (read from the source) wins.
    """
    sources = set(sources)
    if target not in road.coords:
        raise IntegrityError(f"unknown road vertex {target}")
    dist = _dijkstra_until(road, target, sources)
    out = {}
    for s in sorted(sources):
        if s in dist:
            out[s] = (_walk_down(road, s, dist), dist[s])
    return out


def shortest_path(road: RoadNetwork, u: int, v: int) -> tuple[list[int], float]:
    """Minimum-length road path from ``u`` to ``v`` with smallest-next-id tie-break."""
    for x in (u, v):
        if x not in road.coords:
            raise IntegrityError(f"unknown road vertex {x}")
    res = shortest_paths_to(road, v, [u])
    if u not in res:
        raise NoPathError(f"no road path from {u} to {v}")
    return res[u]


def path_demand(road: RoadNetwork, road_path: Sequence[int]) -> float:
    """Commuting demand of a road walk: sum of ``f_e * |e|`` over its edges."""
    total = 0.0
    for a, b in zip(road_path, road_path[1:]):
        total += road.flow(a, b) * road.length(a, b)
    return total


def path_length(road: RoadNetwork, road_path: Sequence[int]) -> float:
    return sum(road.length(a, b) for a, b in zip(road_path, road_path[1:]))


def straight_line_distance(p1: tuple[float, float], p2: tuple[float, float]) -> float:
    """Haversine great-circle distance in meters between two ``(lat, lng)`` points."""
    lat1, lng1 = map(math.radians, p1)
    lat2, lng2 = map(math.radians, p2)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lng2 - lng1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _planar(p, lat0):
    return (math.radians(p[1]) * math.cos(math.radians(lat0)), math.radians(p[0]))


def edge_bearing_angle(e_prev: tuple[Hashable, Hashable], e_next: tuple[Hashable, Hashable],
                       coords: Mapping[Hashable, tuple[float, float]]) -> float:
    """Deviation from straight travel where two edges meet, in ``[0, pi]``.

    0 means the route continues straight through the shared stop, ``pi``
    means it doubles back. Symmetric in its two edge arguments.
    """
    shared = set(e_prev) & set(e_next)
    if len(shared) != 1 or len(set(e_prev)) != 2 or len(set(e_next)) != 2:
        raise IntegrityError(f"edges {e_prev} and {e_next} do not share exactly one stop")
    (s,) = shared
    a = e_prev[0] if e_prev[1] == s else e_prev[1]
    b = e_next[0] if e_next[1] == s else e_next[1]
    lat0 = coords[s][0]
    ps, pa, pb = _planar(coords[s], lat0), _planar(coords[a], lat0), _planar(coords[b], lat0)
    d1 = (ps[0] - pa[0], ps[1] - pa[1])
    d2 = (pb[0] - ps[0], pb[1] - ps[1])
    if d1 == (0.0, 0.0) or d2 == (0.0, 0.0):
        return 0.0
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    dot = d1[0] * d2[0] + d1[1] * d2[1]
    return math.atan2(abs(cross), dot)
