"""Synthetic cities and random graphs for tests, demos and benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra, minimum_spanning_tree
from scipy.spatial import Delaunay

from .graph import RoadNetwork, Stop, TransitNetwork, edge_key, straight_line_distance

M_PER_DEG_LAT = 111_195.0


@dataclass
class SyntheticCity:
    road: RoadNetwork
    transit: TransitNetwork
    trajectories: list[list[int]]


def _count_flows(trajectories):
    flows: dict[tuple[int, int], int] = {}
    for traj in trajectories:
        for key in {edge_key(a, b) for a, b in zip(traj, traj[1:])}:
            flows[key] = flows.get(key, 0) + 1
    return flows


def grid_city(rows: int = 12, cols: int = 12, spacing: float = 150.0, stop_every: int = 2,
              n_routes: int = 6, n_trajectories: int = 200, turn_prob: float = 0.4,
              full_lattice: bool = False, origin=(41.85, -87.70), seed: int = 0) -> SyntheticCity:
    """Jittered grid road network with bus routes along a coarser stop lattice.

    Road vertices are numbered ``r * cols + c + 1``. Stops sit on road
    vertices whose row and column are multiples of ``stop_every``; routes run
    along lattice lines (straight or L-shaped) so crossing routes share stops.
    With ``full_lattice`` every lattice row and column carries a route.
    Trajectories are shortest road paths between hotspot-biased endpoints.
    """
    rng = np.random.default_rng(seed)
    lat0, lng0 = origin
    dlat = spacing / M_PER_DEG_LAT
    dlng = spacing / (M_PER_DEG_LAT * math.cos(math.radians(lat0)))

    def vid(r, c):
        return r * cols + c + 1

    coords = {}
    for r in range(rows):
        for c in range(cols):
            jr, jc = rng.uniform(-0.08, 0.08, size=2)
            coords[vid(r, c)] = (lat0 + (r + jr) * dlat, lng0 + (c + jc) * dlng)
    adj: dict[int, dict[int, float]] = {v: {} for v in coords}
    for r in range(rows):
        for c in range(cols):
            for r2, c2 in ((r + 1, c), (r, c + 1)):
                if r2 < rows and c2 < cols:
                    a, b = vid(r, c), vid(r2, c2)
                    w = float(max(1, round(straight_line_distance(coords[a], coords[b]))))
                    adj[a][b] = w
                    adj[b][a] = w

    lat_rows = list(range(0, rows, stop_every))
    lat_cols = list(range(0, cols, stop_every))
    routes: dict[str, list[tuple[int, int]]] = {}
    if full_lattice:
        for r in lat_rows:
            routes[f"h{r}"] = [(r, c) for c in lat_cols]
        for c in lat_cols:
            routes[f"v{c}"] = [(r, c) for r in lat_rows]
    else:
        for i in range(n_routes):
            horizontal = bool(rng.integers(2))
            line = lat_rows if horizontal else lat_cols
            other = lat_cols if horizontal else lat_rows
            fixed = int(rng.choice(line))
            span = int(rng.integers(max(2, len(other) // 2), len(other) + 1))
            start = int(rng.integers(0, len(other) - span + 1))
            seq = other[start:start + span]
            pts = [(fixed, x) if horizontal else (x, fixed) for x in seq]
            if rng.random() < turn_prob:
                end = pts[-1]
                pos = line.index(fixed)
                step = 1 if pos < len(line) // 2 else -1
                extra = int(rng.integers(1, max(2, len(line) // 2)))
                for j in range(1, extra + 1):
                    if not 0 <= pos + step * j < len(line):
                        break
                    nxt = line[pos + step * j]
                    pts.append((nxt, end[1]) if horizontal else (end[0], nxt))
            routes[f"r{i}"] = pts
    used = sorted({p for pts in routes.values() for p in pts})
    stops = [Stop(f"s{vid(r, c)}", vid(r, c), *coords[vid(r, c)]) for r, c in used]
    transit = TransitNetwork(stops, {rid: [f"s{vid(r, c)}" for r, c in pts] for rid, pts in routes.items()})

    n = rows * cols
    ij = [(a - 1, b - 1, w) for a in adj for b, w in adj[a].items()]
    W = sp.csr_array(([w for _, _, w in ij], ([i for i, _, _ in ij], [j for _, j, _ in ij])), shape=(n, n))
    hotspots = rng.integers(0, n, size=4)
    n_origins = min(n, 16)
    origins = rng.choice(hotspots, size=n_origins) if n_trajectories else []
    _, pred = dijkstra(W, indices=np.asarray(origins, dtype=np.int64), return_predecessors=True) if n_trajectories else (None, None)
    trajectories = []
    for t in range(n_trajectories):
        row = t % n_origins
        src = int(origins[row])
        dst = int(rng.integers(0, n))
        path = [dst]
        while path[-1] != src and pred[row, path[-1]] >= 0:
            path.append(int(pred[row, path[-1]]))
        if path[-1] != src or len(path) < 2:
            continue
        trajectories.append([p + 1 for p in reversed(path)])
    road = RoadNetwork(coords, adj, _count_flows(trajectories))
    return SyntheticCity(road, transit, trajectories)


def random_planar_graph(n: int, mean_degree: float = 3.0, seed: int = 0) -> sp.csr_array:
    """Connected planar graph: Delaunay triangulation thinned to a target mean degree.

    A Euclidean minimum spanning tree is always kept, so the result is
    connected; the remaining Delaunay edges are added in random order.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    tri = Delaunay(pts)
    cand = set()
    for simplex in tri.simplices:
        for a, b in ((0, 1), (1, 2), (0, 2)):
            cand.add(edge_key(int(simplex[a]), int(simplex[b])))
    cand = sorted(cand)
    ij = np.array(cand, dtype=np.int32)
    d = np.linalg.norm(pts[ij[:, 0]] - pts[ij[:, 1]], axis=1)
    W = sp.csr_array((d, (ij[:, 0], ij[:, 1])), shape=(n, n))
    T = minimum_spanning_tree(W).tocoo()
    chosen = {edge_key(int(a), int(b)) for a, b in zip(T.row, T.col)}
    rest = [e for e in cand if e not in chosen]
    rng.shuffle(rest)
    need = int(round(mean_degree * n / 2)) - len(chosen)
    chosen.update(tuple(e) for e in rest[:max(0, need)])
    return _sym(n, chosen)


def random_graph(n: int, m: int, seed: int = 0, connected: bool = True) -> sp.csr_array:
    """Uniform random simple graph with ``m`` edges (plus a spanning tree if connected)."""
    rng = np.random.default_rng(seed)
    edges = set()
    if connected:
        order = rng.permutation(n)
        for i in range(1, n):
            edges.add(edge_key(int(order[i]), int(order[rng.integers(i)])))
    m = min(m, n * (n - 1) // 2)
    while len(edges) < m:
        a, b = rng.integers(n, size=2)
        if a != b:
            edges.add(edge_key(int(a), int(b)))
    return _sym(n, edges)


def _sym(n, edges) -> sp.csr_array:
    if not edges:
        return sp.csr_array((n, n), dtype=np.float64)
    ij = np.array(sorted(edges))
    rows = np.concatenate([ij[:, 0], ij[:, 1]])
    cols = np.concatenate([ij[:, 1], ij[:, 0]])
    return sp.csr_array((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def random_new_edges(A, k: int, rng) -> list[tuple[int, int]]:
    """``k`` distinct vertex pairs that are not edges of ``A``."""
    A = sp.csr_array(A)
    n = A.shape[0]
    out: set[tuple[int, int]] = set()
    while len(out) < k:
        a, b = rng.integers(n, size=2)
        if a != b and A[a, b] == 0:
            out.add(edge_key(int(a), int(b)))
    return sorted(out)


def random_new_path(A, k: int, rng, max_tries: int = 1000) -> list[tuple[int, int]] | None:
    """A simple path of ``k`` edges over distinct vertices using only non-edges of ``A``."""
    A = sp.csr_array(A)
    n = A.shape[0]
    if k + 1 > n:
        return None
    for _ in range(max_tries):
        verts = [int(x) for x in rng.choice(n, size=k + 1, replace=False)]
        if all(A[a, b] == 0 for a, b in zip(verts, verts[1:])):
            return [(a, b) for a, b in zip(verts, verts[1:])]
    return None
