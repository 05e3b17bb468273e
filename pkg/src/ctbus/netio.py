"""File formats: DIMACS road graphs, transit JSON, trajectories, GeoJSON and reports.

Transit network document::

    {"stops":  [{"id": "s1", "road_vertex": 17, "lat": 41.88, "lng": -87.63}, ...],
     "routes": [{"id": "22", "stop_sequence": ["s1", "s2", ...]}, ...]}

Trajectory file: one trajectory per line, whitespace-separated road vertex
ids; lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, Mapping

from .errors import IntegrityError, ParseError
from .graph import RoadNetwork, RoutePath, Stop, TransitNetwork, edge_key

log = logging.getLogger(__name__)


def _numbers(parts, path, lineno, kinds):
    try:
        return [kind(p) for kind, p in zip(kinds, parts)]
    except ValueError:
        raise ParseError(f"expected numeric fields, got {' '.join(parts)!r}", path, lineno) from None


def read_dimacs_coordinates(co_path) -> dict[int, tuple[float, float]]:
    """``v id x y`` lines with x = longitude, y = latitude in micro-degrees."""
    coords: dict[int, tuple[float, float]] = {}
    with open(co_path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0] in ("c", "p"):
                continue
            if parts[0] != "v" or len(parts) != 4:
                raise ParseError(f"malformed coordinate line {line.strip()!r}", co_path, lineno)
            vid, x, y = _numbers(parts[1:], co_path, lineno, (int, int, int))
            if vid in coords:
                raise ParseError(f"duplicate vertex {vid}", co_path, lineno)
            coords[vid] = (y / 1e6, x / 1e6)
    return coords


def load_road_network(gr_path, co_path) -> RoadNetwork:
    """Read a DIMACS ``.gr``/``.co`` pair into an undirected road network.

    Both arc directions collapse into one edge keeping the smaller weight.
    """
    coords = read_dimacs_coordinates(co_path)
    adj: dict[int, dict[int, float]] = {v: {} for v in coords}
    with open(gr_path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0] in ("c", "p"):
                continue
            if parts[0] != "a" or len(parts) != 4:
                raise ParseError(f"malformed arc line {line.strip()!r}", gr_path, lineno)
            u, v, w = _numbers(parts[1:], gr_path, lineno, (int, int, int))
            if w <= 0:
                raise ParseError(f"arc weight must be a positive integer, got {w}", gr_path, lineno)
            for x in (u, v):
                if x not in coords:
                    raise IntegrityError(f"{gr_path}:{lineno}: vertex {x} has no coordinates")
            if u == v:
                continue
            w = float(w)
            if w < adj[u].get(v, float("inf")):
                adj[u][v] = w
                adj[v][u] = w
    road = RoadNetwork(coords, adj)
    log.info("road network: %d vertices, %d edges", road.n_vertices, road.n_edges)
    return road


def save_road_network(road: RoadNetwork, gr_path, co_path) -> None:
    """Write DIMACS files; every undirected edge becomes two arcs."""
    with open(co_path, "w") as fh:
        fh.write(f"p aux sp co {road.n_vertices}\n")
        for v in sorted(road.coords):
            lat, lng = road.coords[v]
            fh.write(f"v {v} {round(lng * 1e6)} {round(lat * 1e6)}\n")
    with open(gr_path, "w") as fh:
        fh.write(f"p sp {road.n_vertices} {2 * road.n_edges}\n")
        for u, v in road.edges():
            w = int(round(road.adj[u][v]))
            fh.write(f"a {u} {v} {w}\na {v} {u} {w}\n")


def transit_from_dict(doc: Mapping, road: RoadNetwork | None = None) -> TransitNetwork:
    try:
        stop_docs = doc["stops"]
        route_docs = doc.get("routes", [])
        stops = [Stop(str(s["id"]), int(s["road_vertex"]), float(s["lat"]), float(s["lng"])) for s in stop_docs]
        routes = {}
        for r in route_docs:
            rid = str(r["id"])
            if rid in routes:
                raise IntegrityError(f"duplicate route id {rid!r}")
            routes[rid] = [str(x) for x in r["stop_sequence"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, IntegrityError):
            raise
        raise ParseError(f"invalid transit document: {exc}") from None
    if road is not None:
        for s in stops:
            if s.road_vertex not in road.coords:
                raise IntegrityError(f"stop {s.id!r} references unknown road vertex {s.road_vertex}")
    extra = {}
    for e in doc.get("extra_edges", []):
        extra[edge_key(str(e["a"]), str(e["b"]))] = [str(x) for x in e["routes"]]
    return TransitNetwork(stops, routes, extra)


def load_transit_network(path, road: RoadNetwork | None = None) -> TransitNetwork:
    """Load the transit JSON document; stops are checked against ``road`` when given."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None
    transit = transit_from_dict(doc, road)
    log.info("transit network: %d stops, %d edges, %d routes", transit.n, transit.m, len(transit.routes))
    return transit


def transit_to_dict(transit: TransitNetwork) -> dict:
    """Serialisable form; edges not produced by any listed route go to ``extra_edges``."""
    from_routes: dict[tuple[str, str], set[str]] = {}
    for rid, seq in transit.routes.items():
        for a, b in zip(seq, seq[1:]):
            from_routes.setdefault(edge_key(a, b), set()).add(rid)
    extra = []
    for key, owners in transit.edge_routes.items():
        rest = owners - from_routes.get(key, set())
        if rest:
            extra.append({"a": key[0], "b": key[1], "routes": sorted(rest)})
    doc = {
        "stops": [{"id": s.id, "road_vertex": s.road_vertex, "lat": s.lat, "lng": s.lng}
                  for s in transit.stops.values()],
        "routes": [{"id": rid, "stop_sequence": list(seq)} for rid, seq in transit.routes.items()],
    }
    if extra:
        doc["extra_edges"] = extra
    return doc


def save_transit_network(transit: TransitNetwork, path) -> None:
    write_json(transit_to_dict(transit), path)


def load_trajectories(path, road: RoadNetwork) -> dict[tuple[int, int], int]:
    """Count, per road edge, the trajectories that traverse it (at most once each)."""
    flows: dict[tuple[int, int], int] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            ids = _numbers(line.split(), path, lineno, [int] * len(line.split()))
            seen = set()
            for a, b in zip(ids, ids[1:]):
                if b not in road.adj.get(a, {}):
                    raise ParseError(f"consecutive vertices {a} and {b} are not adjacent", path, lineno)
                seen.add(edge_key(a, b))
            for key in seen:
                flows[key] = flows.get(key, 0) + 1
    return flows


def save_trajectories(trajectories: Iterable[Iterable[int]], path) -> None:
    with open(path, "w") as fh:
        for traj in trajectories:
            fh.write(" ".join(str(v) for v in traj) + "\n")


def export_geojson(route: RoutePath, transit: TransitNetwork, road: RoadNetwork | None = None,
                   edge_paths: Mapping[tuple[str, str], tuple[int, ...]] | None = None,
                   properties: Mapping | None = None) -> dict:
    """FeatureCollection with one LineString per route edge, coordinates as ``[lng, lat]``.

    When ``road`` and ``edge_paths`` are supplied the interior road vertices
    of each edge are included so the line follows the street network.
    """
    features = []
    for i, (a, b) in enumerate(zip(route.stops, route.stops[1:])):
        key = edge_key(a, b)
        pts = [transit.stops[a].point]
        if road is not None and edge_paths and key in edge_paths:
            interior = list(edge_paths[key][1:-1])
            if edge_paths[key] and edge_paths[key][0] != transit.stops[a].road_vertex:
                interior.reverse()
            pts += [road.coords[v] for v in interior]
        pts.append(transit.stops[b].point)
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[lng, lat] for lat, lng in pts]},
            "properties": {"seq": i, "from": a, "to": b, "new": key in route.new_edges},
        })
    return {"type": "FeatureCollection", "properties": dict(properties or {}), "features": features}


def write_json(doc, path) -> None:
    """Deterministic JSON (sorted keys, fixed indentation, trailing newline)."""
    Path(path).write_text(dumps(doc))


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def file_digest(paths: Iterable, extra: Mapping | None = None) -> str:
    """SHA-256 over the bytes of ``paths`` (in order) and a JSON dump of ``extra``."""
    h = hashlib.sha256()
    for p in paths:
        if p is None:
            h.update(b"<none>")
            continue
        h.update(Path(p).read_bytes())
        h.update(b"\0")
    h.update(json.dumps(extra or {}, sort_keys=True).encode())
    return h.hexdigest()
