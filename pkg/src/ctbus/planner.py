"""Route search: seeded best-first expansion with bound, turn and domination pruning.

Two objective modes share one search loop:

``pre``
    the objective of a path is the sum of per-edge keys ``L_e`` (demand and
    precomputed connectivity gain), so every evaluation is a table lookup.
``online``
    demand is summed exactly and the connectivity gain of the path's new
    edges is re-estimated for every evaluated path.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .candidates import (
    CandidateEdge, EdgeTable, Normalizers, RankedEdgeList, RankedLists, check_normalizers,
    combined_key, compute_deltas, compute_normalizers,
)
from .errors import CTBusError, ConfigurationError, PlanningError
from .graph import RoadNetwork, RoutePath, TransitNetwork, edge_bearing_angle, edge_key, path_demand
from .spectral import ConnectivityEstimator, SpectralParams, path_upper_bound, top_eigenvalues

log = logging.getLogger(__name__)

TERMINATIONS = ("bound", "iteration_cap", "queue_exhausted")
SHARP_TURN = math.pi / 4
FORBIDDEN_TURN = math.pi / 2


@dataclass(frozen=True)
class PlannerConfig:
    """Search parameters.

    ``Tn`` caps sharp turns: a route is feasible while its turn count stays
    strictly below ``Tn``, so ``Tn`` must be at least 1.
    """

    k: int = 30
    w: float = 0.5
    tau: float = 500.0
    Tn: int = 3
    sn: int = 5000
    it_max: int = 100_000
    mode: str = "pre"
    neighbor_policy: str = "best"
    domination: bool = True
    spectral: SpectralParams = field(default_factory=SpectralParams)
    record_every: int = 100
    exact: bool = False
    new_edges_only: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.w <= 1.0:
            raise ConfigurationError(f"w must lie in [0, 1], got {self.w}")
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.Tn < 1:
            raise ConfigurationError(f"Tn must be >= 1 (feasibility needs tn < Tn), got {self.Tn}")
        if self.sn < 1:
            raise ConfigurationError(f"sn must be >= 1, got {self.sn}")
        if self.it_max < 0:
            raise ConfigurationError(f"it_max must be >= 0, got {self.it_max}")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")
        if self.mode not in ("online", "pre"):
            raise ConfigurationError(f"mode must be 'online' or 'pre', got {self.mode!r}")
        if self.neighbor_policy not in ("best", "all"):
            raise ConfigurationError(f"neighbor_policy must be 'best' or 'all', got {self.neighbor_policy!r}")


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    objective: float
    demand_term: float
    connectivity_term: float


@dataclass
class PlanResult:
    """Best route found. ``demand_term`` is the raw demand sum, ``connectivity_term``
    the raw connectivity gain (additive per-edge sum in pre mode)."""

    route: RoutePath
    objective: float
    demand_term: float
    connectivity_term: float
    iterations: int
    trace: list[TracePoint]
    termination: str
    edges: list[CandidateEdge]
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stops": list(self.route.stops),
            "road_path": list(self.route.road_path),
            "edges": [{"u": e.u, "v": e.v, "new": e.is_new, "length": e.length, "demand": e.demand,
                       "delta": e.delta} for e in self.edges],
            "n_edges": len(self.route),
            "n_new_edges": len(self.route.new_edges),
            "objective": self.objective,
            "demand_term": self.demand_term,
            "connectivity_term": self.connectivity_term,
            "iterations": self.iterations,
            "termination": self.termination,
            "diagnostics": dict(sorted(self.diagnostics.items())),
        }


# -- bound and turn bookkeeping -----------------------------------------------------


def initial_bound(L: RankedEdgeList, e, k: int) -> tuple[float, int]:
    """``(ub_d, cur)`` of the single-edge path ``e``.

    Seeds ranked inside the top ``k`` keep all ``k`` slots; lower seeds
    replace the k-th slot with their own key.
    """
    top = L.top_sum(k)
    if len(L) < k:
        return top, len(L)
    i = L.rank(e)
    if i <= k:
        return top, k
    return top - (L.at(k) - L[e]), k - 1


def update_bound(L: RankedEdgeList, ub_d: float, cur: int, path_edges, e, key: float | None = None,
                 diagnostics: Counter | None = None) -> tuple[float, int]:
    """Incremental bound after appending ``e`` to a path holding ``path_edges``.

    ``ub_d`` is the path's key sum plus the keys of the non-path entries among
    the top ``cur`` slots. If ``e`` already sits in that prefix nothing
    changes; otherwise the lowest non-path slot is swapped for ``e``.
    """
    key = L[e] if key is None else key
    rank = L.rank(e) if e in L else len(L) + 1
    while cur >= 1 and L.edge_at(cur) in path_edges:
        cur -= 1
    if rank <= cur:
        return ub_d, cur
    if cur < 1:
        if diagnostics is not None:
            diagnostics["cur_saturated"] += 1
        return ub_d, cur
    return ub_d - (L.at(cur) - key), cur - 1


def rescan_bound(L: RankedEdgeList, path_edges: Sequence, k: int, keys: Mapping | None = None) -> float:
    """Reference bound: path key sum plus the best ``k - len`` entries outside the path."""
    keys = keys or {}
    inside = set(path_edges)
    total = [keys.get(e, L[e] if e in L else 0.0) for e in path_edges]
    need = k - len(path_edges)
    for e in L:
        if need <= 0:
            break
        if e not in inside:
            total.append(L[e])
            need -= 1
    return math.fsum(total)


def turn_update(tn: int, angle: float, Tn: int) -> int:
    """Deviations beyond pi/2 exhaust the budget; beyond pi/4 count one turn."""
    if angle > FORBIDDEN_TURN:
        return Tn
    if angle > SHARP_TURN:
        return tn + 1
    return tn


def update_bound_and_turns(e, path_edges, L: RankedEdgeList, ub_d: float, cur: int, tn: int,
                           angle: float, Tn: int, diagnostics: Counter | None = None) -> tuple[float, int, int]:
    """Combined bound and turn update for one appended edge; returns ``(ub_d, tn, cur)``."""
    ub_d, cur = update_bound(L, ub_d, cur, path_edges, e, diagnostics=diagnostics)
    return ub_d, turn_update(tn, angle, Tn), cur


def count_turns(stops: Sequence[str], coords: Mapping[str, tuple[float, float]], Tn: int) -> int:
    """Turn count of a stop sequence; a closed loop also turns at its departure stop."""
    closed = len(stops) > 3 and stops[0] == stops[-1]
    edges = list(zip(stops, stops[1:]))
    joints = list(zip(edges, edges[1:]))
    if closed:
        joints.append((edges[-1], edges[0]))
    tn = 0
    for e1, e2 in joints:
        tn = turn_update(tn, edge_bearing_angle(e1, e2, coords), Tn)
        if tn >= Tn:
            return tn
    return tn


def _oriented(rec: CandidateEdge, a: str) -> tuple[int, ...]:
    return rec.road_path if rec.u == a else tuple(reversed(rec.road_path))


def road_walk(stops: Sequence[str], edge_paths: Mapping[tuple[str, str], Sequence[int]]) -> list[int]:
    """Concatenated road vertices along a stop sequence."""
    walk: list[int] = []
    for a, b in zip(stops, stops[1:]):
        rp = list(edge_paths[edge_key(a, b)])
        ka = edge_key(a, b)
        if ka[0] != a:
            rp.reverse()
        walk.extend(rp if not walk else rp[1:])
    return walk


def feasibility_check(route: RoutePath, k: int, Tn: int, coords: Mapping[str, tuple[float, float]],
                      edge_paths: Mapping[tuple[str, str], Sequence[int]]) -> bool:
    """Recheck a route from scratch.

    Simple over stops and over the concatenated road walk (a closing loop
    may return to its first stop and first road vertex), at most ``k``
    edges, every edge known, and fewer than ``Tn`` turns.
    ``edge_paths`` maps edge keys to road paths running from the
    smaller-keyed stop to the other.
    """
    stops = list(route.stops)
    if len(stops) < 2 or len(stops) - 1 > k:
        return False
    keys = route.edges
    if len(set(keys)) != len(keys) or any(e not in edge_paths for e in keys):
        return False
    closed = stops[0] == stops[-1]
    if closed and len(stops) < 4:
        return False
    body = stops[:-1] if closed else stops
    if len(set(body)) != len(body):
        return False
    walk = road_walk(stops, edge_paths)
    if closed:
        if walk[-1] != walk[0]:
            return False
        walk = walk[:-1]
    if len(set(walk)) != len(walk):
        return False
    return count_turns(stops, coords, Tn) < Tn


def domination_check(DT: dict, be, ee, objective: float) -> bool:
    """Admit iff ``objective`` beats the best value seen for ``(be, ee)``; records it."""
    if objective > DT.get((be, ee), -math.inf):
        DT[(be, ee)] = objective
        return True
    return False


# -- search ----------------------------------------------------------------------


class CandidatePath:
    """Partial route held in the queue; attributes are treated as immutable."""

    __slots__ = ("stops", "edges", "road", "road_set", "stop_set", "edge_set", "new", "demand",
                 "conn", "lsum", "objective", "ub_d", "ub", "tn", "cur", "closed")

    @property
    def be(self):
        return self.edges[0]

    @property
    def ee(self):
        return self.edges[-1]

    def __len__(self):
        return len(self.edges)

    def reversed(self) -> "CandidatePath":
        p = self._copy()
        p.stops = self.stops[::-1]
        p.edges = self.edges[::-1]
        p.road = self.road[::-1]
        return p

    def _copy(self) -> "CandidatePath":
        p = CandidatePath.__new__(CandidatePath)
        for name in CandidatePath.__slots__:
            setattr(p, name, getattr(self, name))
        return p

    def to_route(self) -> RoutePath:
        return RoutePath(self.stops, self.road, self.new)


class _Search:
    def __init__(self, config: PlannerConfig, transit: TransitNetwork, records: Sequence[CandidateEdge],
                 lists: RankedLists, normalizers: Normalizers):
        self.cfg = config
        self.transit = transit
        self.coords = transit.coords()
        self.records = {r.key: r for r in records}
        if not self.records:
            raise PlanningError("empty candidate set")
        self.by_stop: dict[str, list] = {}
        for key in sorted(self.records):
            for s in key:
                self.by_stop.setdefault(s, []).append(key)
        self.norm = normalizers
        self.diag: Counter = Counter()
        self.DT: dict = {}
        self.heap: list = []
        self.seq = 0
        self.best: CandidatePath | None = None
        self.O_max = -math.inf
        self.evaluated: set | None = None
        w = config.w
        if config.mode == "pre":
            self.L = lists.combined
            self.est = None
        else:
            self.L = RankedEdgeList({key: r.demand for key, r in self.records.items()})
            self.est = ConnectivityEstimator(transit.A, config.spectral, exact=config.exact)
            self.memo: dict[frozenset, float] = {frozenset(): 0.0}
            self.conn_bound = self._connectivity_bound() if w < 1 else 0.0
        missing = [key for key in self.records if key not in self.L]
        if missing:
            raise PlanningError(f"{len(missing)} candidate edges have no ranked key")

    def _connectivity_bound(self) -> float:
        A, n, k = self.transit.A, self.transit.n, self.cfg.k
        m = (k + 1) // 2
        if m > n:
            return math.inf
        lam = self.est.base
        return path_upper_bound(lam, top_eigenvalues(A, m), k, n) - lam

    # objective pieces

    def _conn(self, new: frozenset) -> float:
        val = self.memo.get(new)
        if val is None:
            idx = self.transit.index
            pairs = sorted((idx[a], idx[b]) for a, b in new)
            val = self.est.increment(pairs)
            self.memo[new] = val
            self.diag["connectivity_evaluations"] += 1
        return val

    def _score(self, p: CandidatePath) -> None:
        if self.cfg.mode == "pre":
            p.objective = p.lsum
            p.ub = p.ub_d
        else:
            p.conn = self._conn(p.new)
            p.objective = combined_key(p.demand, p.conn, self.cfg.w, self.norm)
            p.ub = combined_key(p.ub_d, self.conn_bound, self.cfg.w, self.norm)

    def seed(self, key) -> CandidatePath:
        rec = self.records[key]
        p = CandidatePath.__new__(CandidatePath)
        p.stops = (rec.u, rec.v)
        p.edges = (key,)
        p.road = rec.road_path
        p.road_set = frozenset(rec.road_path)
        p.stop_set = frozenset(p.stops)
        p.edge_set = frozenset(p.edges)
        p.new = frozenset([key]) if rec.is_new else frozenset()
        p.demand = rec.demand
        p.conn = rec.delta
        p.lsum = self.L[key]
        p.ub_d, p.cur = initial_bound(self.L, key, self.cfg.k)
        p.tn = 0
        p.closed = False
        self._score(p)
        self._note(p)
        return p

    def extend(self, cp: CandidatePath, key, at_end: bool, allow_close: bool = True) -> CandidatePath | None:
        """``cp`` with ``key`` appended at one end, or None if infeasible."""
        if not at_end:
            p = self.extend(cp.reversed(), key, True, allow_close)
            return None if p is None else p.reversed()
        if cp.closed or key in cp.edge_set or len(cp.edges) + 1 > self.cfg.k:
            return None
        rec = self.records[key]
        a = cp.stops[-1]
        b = rec.v if rec.u == a else rec.u
        closes = b == cp.stops[0]
        if closes:
            if not allow_close or len(cp.stops) < 3:
                return None
        elif b in cp.stop_set:
            return None
        rp = _oriented(rec, a)
        fresh = rp[1:-1] if closes else rp[1:]
        if closes and rp[-1] != cp.road[0]:
            return None
        if any(x in cp.road_set for x in fresh) or len(set(fresh)) != len(fresh):
            return None
        Tn = self.cfg.Tn
        tn = turn_update(cp.tn, edge_bearing_angle(cp.edges[-1], key, self.coords), Tn)
        if closes and tn < Tn:
            tn = turn_update(tn, edge_bearing_angle(key, cp.edges[0], self.coords), Tn)
        if tn >= Tn:
            return None
        p = cp._copy()
        p.ub_d, p.cur = update_bound(self.L, cp.ub_d, cp.cur, cp.edge_set, key, diagnostics=self.diag)
        p.tn = tn
        p.stops = cp.stops + (b,)
        p.edges = cp.edges + (key,)
        p.road = cp.road + tuple(rp[1:])
        p.road_set = cp.road_set | set(fresh)
        p.stop_set = cp.stop_set | {b}
        p.edge_set = cp.edge_set | {key}
        p.new = cp.new | {key} if rec.is_new else cp.new
        p.demand = cp.demand + rec.demand
        p.conn = cp.conn + rec.delta
        p.lsum = cp.lsum + self.L[key]
        p.closed = closes
        self._score(p)
        self._note(p)
        return p

    def _note(self, p: CandidatePath) -> None:
        self.diag["evaluations"] += 1
        if self.evaluated is not None:
            self.evaluated.add(min(p.stops, p.stops[::-1]))

    def offer(self, p: CandidatePath) -> None:
        if p.objective > self.O_max:
            self.O_max = p.objective
            self.best = p

    def gate(self, p: CandidatePath) -> None:
        if p.closed or len(p.edges) >= self.cfg.k or p.tn >= self.cfg.Tn:
            return
        if not p.ub > self.O_max:
            self.diag["pruned_bound"] += 1
            return
        if self.cfg.domination and not domination_check(self.DT, p.be, p.ee, p.objective):
            self.diag["pruned_domination"] += 1
            return
        heapq.heappush(self.heap, (-p.ub, self.seq, p))
        self.seq += 1

    def neighbors(self, cp: CandidatePath, at_end: bool) -> list[CandidatePath]:
        stop = cp.stops[-1] if at_end else cp.stops[0]
        out = []
        for key in self.by_stop.get(stop, ()):
            p = self.extend(cp, key, at_end)
            if p is not None:
                out.append(p)
        return out

    def expand(self, cp: CandidatePath) -> list[CandidatePath]:
        ends = [self.neighbors(cp, True), self.neighbors(cp, False)]
        for group in ends:
            for p in group:
                self.offer(p)
        if self.cfg.neighbor_policy == "all":
            return ends[0] + ends[1]
        picks = [min(g, key=lambda p: (-p.objective, p.ee if g is ends[0] else p.be)) if g else None
                 for g in ends]
        p_end, p_begin = picks
        if p_end is None or p_begin is None:
            return [p for p in picks if p is not None]
        if len(cp.edges) + 2 <= self.cfg.k and not p_end.closed and not p_begin.closed:
            both = self.extend(p_end, p_begin.be, False, allow_close=False)
            if both is not None:
                self.offer(both)
                return [both]
        return [min(picks, key=lambda p: (-p.objective, p.edges))]

    def run(self) -> PlanResult:
        cfg = self.cfg
        seeds = [self.L.edge_at(i) for i in range(1, min(cfg.sn, len(self.L)) + 1)]
        seed_paths = [self.seed(key) for key in seeds]
        for p in seed_paths:
            self.offer(p)
        for p in seed_paths:
            self.gate(p)
        trace: list[TracePoint] = []
        it = 0
        while True:
            if not self.heap:
                reason = "queue_exhausted"
                break
            _, _, cp = heapq.heappop(self.heap)
            if cp.ub <= self.O_max:
                reason = "bound"
                break
            if it >= cfg.it_max:
                reason = "iteration_cap"
                break
            it += 1
            for p in self.expand(cp):
                self.gate(p)
            if it % cfg.record_every == 0:
                trace.append(self._trace_point(it))
        if not trace or trace[-1].iteration != it:
            trace.append(self._trace_point(it))
        best = self.best
        self.diag["queue_left"] = len(self.heap)
        return PlanResult(
            route=best.to_route(),
            objective=best.objective,
            demand_term=best.demand,
            connectivity_term=best.conn,
            iterations=it,
            trace=trace,
            termination=reason,
            edges=[self.records[e] for e in best.edges],
            diagnostics=dict(self.diag),
        )

    def _trace_point(self, it: int) -> TracePoint:
        b = self.best
        return TracePoint(it, b.objective, b.demand, b.conn)


# -- entry points ---------------------------------------------------------------------


def active_lists(table: EdgeTable, config: PlannerConfig) -> tuple[list[CandidateEdge], RankedLists, Normalizers]:
    """Edge universe, ranked lists and normalizers for one planner run."""
    existing = [] if config.new_edges_only else table.existing
    L_d = RankedEdgeList({c.key: c.demand for c in table.new})
    L_lam = RankedEdgeList({c.key: c.delta for c in table.new})
    if not len(L_d):
        raise PlanningError("empty candidate set")
    norm = compute_normalizers(L_d, L_lam, config.k)
    check_normalizers(config.w, norm)
    keys = {c.key: combined_key(c.demand, c.delta, config.w, norm) for c in table.new}
    keys.update({c.key: combined_key(c.demand, 0.0, config.w, norm) for c in existing})
    lists = RankedLists(L_d, L_lam, RankedEdgeList(keys))
    return list(table.new) + list(existing), lists, norm


def run_eta(config: PlannerConfig, transit: TransitNetwork, table: EdgeTable,
            evaluated: set | None = None) -> PlanResult:
    """Plan one route over the precomputed candidate table.

    If ``evaluated`` is given, the stop sequence of every path whose
    objective was computed is added to it (in a canonical orientation).
    """
    records, lists, norm = active_lists(table, config)
    search = _Search(config, transit, records, lists, norm)
    search.evaluated = evaluated
    result = search.run()
    log.info("planned %d-edge route, objective %.6g, %d iterations (%s)", len(result.route),
             result.objective, result.iterations, result.termination)
    return result


def run_vk_tsp(config: PlannerConfig, transit: TransitNetwork, table: EdgeTable) -> PlanResult:
    """Demand-only baseline over new edges only."""
    return run_eta(replace(config, w=1.0, new_edges_only=True), transit, table)


def path_objective(route: RoutePath, config: PlannerConfig, transit: TransitNetwork, table: EdgeTable,
                   estimator: ConnectivityEstimator | None = None) -> float:
    """Objective of ``route`` recomputed from scratch."""
    records, lists, norm = active_lists(table, config)
    if config.mode == "pre":
        return math.fsum(lists.combined[e] for e in route.edges)
    by_key = {r.key: r for r in records}
    demand = math.fsum(by_key[e].demand for e in route.edges)
    conn = 0.0
    if config.w < 1 and route.new_edges:
        est = estimator or ConnectivityEstimator(transit.A, config.spectral, exact=config.exact)
        idx = transit.index
        conn = est.increment(sorted((idx[a], idx[b]) for a, b in route.new_edges))
    return combined_key(demand, conn, config.w, norm)


@dataclass
class MultiRoutePlan:
    routes: list[PlanResult]
    transit: TransitNetwork
    error: str | None = None


def plan_multi_route(config: PlannerConfig, road: RoadNetwork, transit: TransitNetwork, table: EdgeTable,
                     count: int, recompute_deltas: bool = False, threads: int = 1) -> MultiRoutePlan:
    """Plan ``count`` routes one after another.

    After each route its new edges join the transit network and the demand
    of every road edge it covers is set to zero before the next search.
    Connectivity gains of the remaining candidates are kept from the
    original table unless ``recompute_deltas`` is set.
    """
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    results: list[PlanResult] = []
    for i in range(count):
        try:
            res = run_eta(config, transit, table)
        except CTBusError as exc:
            log.warning("route %d failed: %s", i + 1, exc)
            return MultiRoutePlan(results, transit, f"route {i + 1}: {exc}")
        results.append(res)
        if i == count - 1:
            break
        route = res.route
        covered = {edge_key(a, b) for a, b in zip(route.road_path, route.road_path[1:])}
        road = road.with_demand({e: f for e, f in road.demand.items() if e not in covered})
        transit = transit.with_edges(route.new_edges, f"planned-{i + 1}")
        new = [replace(c, demand=path_demand(road, c.road_path)) for c in table.new
               if c.key not in route.new_edges]
        existing = [replace(c, demand=path_demand(road, c.road_path)) for c in table.existing]
        existing += [replace(c, demand=path_demand(road, c.road_path), delta=0.0, is_new=False)
                     for c in table.new if c.key in route.new_edges]
        if recompute_deltas:
            new = compute_deltas(transit, new, config.spectral, exact=config.exact, threads=threads)
        table = EdgeTable(new, sorted(existing, key=lambda c: c.key))
    return MultiRoutePlan(results, transit)


def exhaustive_best_path(config: PlannerConfig, transit: TransitNetwork, table: EdgeTable,
                         limit: int = 2_000_000) -> tuple[float, RoutePath | None, int]:
    """Brute-force optimum over every feasible path of at most ``k`` edges.

    Uses the same extension rules as the search (pre-mode objective unless
    ``config.mode`` is online). Returns ``(objective, route, paths_seen)``.
    """
    records, lists, norm = active_lists(table, config)
    search = _Search(replace(config, sn=1, domination=False), transit, records, lists, norm)
    best_val, best, seen = -math.inf, None, 0
    stack = []
    for key in sorted(search.records, reverse=True):
        p = search.seed(key)
        stack += [p.reversed(), p]
    while stack:
        p = stack.pop()
        seen += 1
        if seen > limit:
            raise PlanningError(f"enumeration exceeded {limit} paths")
        # every path is grown from both of its orientations; keep the first maximum
        if p.objective > best_val:
            best_val, best = p.objective, p
        if p.closed or len(p.edges) >= config.k:
            continue
        stack.extend(reversed(search.neighbors(p, True)))
    return best_val, (best.to_route() if best else None), seen
