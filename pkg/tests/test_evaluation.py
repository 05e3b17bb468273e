import itertools
import math

import numpy as np
import pytest

from ctbus.evaluation import (
    bound_tightness_report, min_transfers, monotonicity_experiment, random_bound_instances,
    rows_to_csv, submodularity_experiment, transfer_metrics,
)
from ctbus.graph import RoutePath, TransitNetwork
from ctbus.planner import PlannerConfig, run_eta

from conftest import line_city


def brute_transfers(owner_sets):
    best = math.inf
    for labels in itertools.product(*[sorted(s) for s in owner_sets]):
        best = min(best, sum(a != b for a, b in zip(labels, labels[1:])))
    return best


def test_min_transfers_matches_brute_force():
    rng = np.random.default_rng(0)
    routes = list("abcd")
    for _ in range(300):
        m = int(rng.integers(1, 7))
        sets = [frozenset(rng.choice(routes, size=int(rng.integers(1, 3)), replace=False)) for _ in range(m)]
        assert min_transfers(sets) == brute_transfers(sets)


def test_one_transfer_avoided():
    _, stops = line_city(3, spacing=100.0)
    old = TransitNetwork(stops, {"r1": ["s1", "s2"], "r2": ["s2", "s3"]})
    new = old.with_edges([("s1", "s3")], "planned")
    mu = RoutePath(("s1", "s3"), new_edges=frozenset({("s1", "s3")}))
    m = transfer_metrics(mu, old, new)
    assert m.transfers_avoided == 1.0
    assert m.crossed_routes == 2
    assert m.distance_ratio == pytest.approx(1.0)


def test_identical_network_has_unit_ratio(city):
    seq = city.transit.routes[sorted(city.transit.routes)[0]]
    m = transfer_metrics(RoutePath(tuple(seq)), city.transit, city.transit)
    assert m.distance_ratio == pytest.approx(1.0)
    assert m.transfers_avoided == 0.0


def test_ratio_at_least_one_and_disconnected_pairs_skipped(city, city_table):
    res = run_eta(PlannerConfig(k=6, sn=50), city.transit, city_table)
    new = city.transit.with_edges(res.route.new_edges, "planned")
    lengths = {c.key: c.length for c in city_table.new + city_table.existing}
    m = transfer_metrics(res.route, city.transit, new, lengths)
    assert m.distance_ratio >= 1.0 - 1e-12
    assert m.crossed_routes <= len(city.transit.routes)
    n = len(set(res.route.stops))
    assert m.pairs + m.skipped_pairs == n * (n - 1) // 2
    # in the new network the route itself connects its stops without a transfer
    after = transfer_metrics(res.route, new, new, lengths)
    assert after.distance_ratio == pytest.approx(1.0)


def test_monotonicity_exact(city):
    rows = monotonicity_experiment(city.transit, steps=6, exact=True, seed=2)
    vals = [r["connectivity"] for r in rows]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0
    assert rows[0]["routes_removed"] == 0 and rows[-1]["routes_removed"] == len(city.transit.routes)
    assert rows == monotonicity_experiment(city.transit, steps=6, exact=True, seed=2)


def test_submodularity_single_edge_theta_is_zero(city, city_table):
    rows = submodularity_experiment(city.transit, city_table.new, [1], trials=10)
    assert rows and all(r["theta"] == 0.0 for r in rows)


def test_submodularity_exact_is_reproducible(city, city_table):
    a = submodularity_experiment(city.transit, city_table.new, [1, 4], trials=5, exact=True, seed=3)
    b = submodularity_experiment(city.transit, city_table.new, [1, 4], trials=5, exact=True, seed=3)
    assert a == b
    r = submodularity_experiment(city.transit, city_table.new, [4], trials=5, exact=True, seed=3, sampler="random")
    assert len(r) == 5


def test_bound_report_soundness_and_k0():
    insts = random_bound_instances(30, "path", n_range=(10, 40), seed=4)
    rows, tally = bound_tightness_report(insts)
    assert tally["rows"] == 30
    assert not any(k.startswith("violations") for k in tally)
    for r in rows:
        assert r["exact"] <= r["general"] + 1e-9 and r["exact"] <= r["path"] + 1e-9
    inst = insts[0]
    inst.pairs = []
    (row,), _ = bound_tightness_report([inst])
    assert row["general"] == row["exact"] == row["increment"] == row["lambda_G"]


def test_csv_output():
    text = rows_to_csv([{"a": 1, "b": 0.5}, {"a": 2, "b": 0.25}])
    assert text == "a,b\n1,0.5\n2,0.25\n"
    assert rows_to_csv([]) == ""
