import pytest

from ctbus.candidates import precompute
from ctbus.graph import RoadNetwork, Stop, TransitNetwork
from ctbus.synthetic import grid_city

ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(scope="session")
def city():
    return grid_city(seed=1)


@pytest.fixture(scope="session")
def city_table(city):
    return precompute(city.road, city.transit, 500.0)


def line_city(n_stops=4, spacing=100.0, lat0=41.0, lng0=-87.0):
    """Stops on a straight east-west road, one per road vertex, no routes."""
    dlng = spacing / (111_195.0 * 0.7547095802227721)  # cos(41 deg)
    coords = {i + 1: (lat0, lng0 + i * dlng) for i in range(n_stops)}
    adj = {v: {} for v in coords}
    for v in range(1, n_stops):
        adj[v][v + 1] = adj[v + 1][v] = spacing
    road = RoadNetwork(coords, adj)
    stops = [Stop(f"s{v}", v, *coords[v]) for v in coords]
    return road, stops


@pytest.fixture
def square_transit():
    """Four stops on a 100 m square; one route along three sides."""
    lat0, lng0 = 41.0, -87.0
    d = 100.0 / 111_195.0
    dl = 100.0 / (111_195.0 * 0.7547095802227721)
    pts = {1: (lat0, lng0), 2: (lat0, lng0 + dl), 3: (lat0 + d, lng0 + dl), 4: (lat0 + d, lng0)}
    adj = {v: {} for v in pts}
    for a, b in ((1, 2), (2, 3), (3, 4), (4, 1)):
        adj[a][b] = adj[b][a] = 100.0
    road = RoadNetwork(pts, adj, {(1, 2): 3, (2, 3): 1, (3, 4): 2, (1, 4): 5})
    stops = [Stop(f"s{v}", v, *pts[v]) for v in pts]
    transit = TransitNetwork(stops, {"r1": ["s1", "s2", "s3", "s4"]})
    return road, transit


def toy_instances(count=12):
    """Small cities (at most 12 stops) with their candidate tables."""
    shapes = [(5, 5), (7, 5), (5, 7), (7, 7)]
    out = []
    seed = 0
    while len(out) < count:
        rows, cols = shapes[seed % len(shapes)]
        c = grid_city(rows=rows, cols=cols, stop_every=2, n_routes=3 + seed % 2, n_trajectories=120, seed=seed)
        seed += 1
        if c.transit.n > 12:
            continue
        table = precompute(c.road, c.transit, 500.0)
        if len(table.new) < 2 or not any(x.demand > 0 for x in table.new):
            continue
        out.append((c, table))
    return out
