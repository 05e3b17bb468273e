"""Plan a new bus route on a synthetic city, end to end.

We build a jittered grid city with a handful of existing routes and a few
hundred simulated trips, write it out in the on-disk formats, load it back
the way a user with real data would, and then:

1. generate candidate stop-to-stop edges and precompute their demand and
   connectivity gain,
2. plan one route with the pre-computed objective and one with the online
   objective and compare them,
3. compare against the demand-only baseline,
4. measure how many transfers the new route saves and export it as GeoJSON.

Run with ``python demos/plan_synthetic_city.py [output_dir]``.
"""

import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

from ctbus import PlannerConfig, load_road_network, load_trajectories, load_transit_network, precompute, run_eta
from ctbus.evaluation import edge_lengths, transfer_metrics
from ctbus.netio import export_geojson, save_road_network, save_trajectories, save_transit_network, write_json
from ctbus.planner import run_vk_tsp
from ctbus.spectral import natural_connectivity
from ctbus.synthetic import grid_city


def describe(label, res):
    kinds = "".join("N" if e.is_new else "." for e in res.edges)
    print(f"  {label:<10} objective {res.objective:.4f}  demand {res.demand_term:7.0f}  "
          f"connectivity {res.connectivity_term:.4f}  edges [{kinds}]  "
          f"{res.iterations} iterations, stopped by {res.termination}")


def main(out_dir: Path) -> None:
    print("1. a synthetic city")
    city = grid_city(rows=16, cols=16, n_routes=7, n_trajectories=600, seed=3)
    save_road_network(city.road, out_dir / "road.gr", out_dir / "road.co")
    save_transit_network(city.transit, out_dir / "transit.json")
    save_trajectories(city.trajectories, out_dir / "trips.txt")

    road = load_road_network(out_dir / "road.gr", out_dir / "road.co")
    road = road.with_demand(load_trajectories(out_dir / "trips.txt", road))
    transit = load_transit_network(out_dir / "transit.json", road)
    print(f"  {len(road.coords)} road vertices, {transit.n} stops, {len(transit.routes)} routes, "
          f"natural connectivity {natural_connectivity(transit.A):.4f}")

    print("2. candidate edges and their precomputed gains")
    t0 = time.perf_counter()
    table = precompute(road, transit, tau=500.0)
    print(f"  {len(table.new)} new candidates, {len(table.existing)} existing edges "
          f"in {time.perf_counter() - t0:.1f} s")
    top = sorted(table.new, key=lambda e: -e.delta)[:3]
    for e in top:
        print(f"  largest gain {e.u}-{e.v}: delta {e.delta:.5f}, demand {e.demand:.0f}, {e.length:.0f} m")

    print("3. planning")
    cfg = PlannerConfig(k=10, w=0.5, sn=300, it_max=3000)
    pre = run_eta(cfg, transit, table)
    describe("pre", pre)
    online = run_eta(replace(cfg, mode="online", sn=30, it_max=200), transit, table)
    describe("online", online)
    base = run_vk_tsp(cfg, transit, table)
    describe("demand", base)
    # the baseline ignores connectivity and may not reuse existing edges
    print(f"  demand-only baseline: {base.demand_term / pre.demand_term:.0%} of the demand, "
          f"{base.connectivity_term / pre.connectivity_term:.0%} of the connectivity gain, "
          f"{base.objective / pre.objective:.0%} of the combined objective")

    print("4. what riders get")
    new_net = transit.with_edges(pre.route.new_edges, "planned")
    m = transfer_metrics(pre.route, transit, new_net, edge_lengths(table.new + table.existing))
    print(f"  route crosses {m.crossed_routes} existing routes, saves {m.transfers_avoided:.2f} "
          f"transfers per stop pair, shortest trips shrink by {m.distance_ratio:.2f}x on average")
    paths = {e.key: e.road_path for e in table.new + table.existing}
    write_json(export_geojson(pre.route, transit, road, paths, {"objective": pre.objective}),
               out_dir / "route.geojson")
    print(f"  wrote {out_dir / 'route.geojson'}")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        target = Path(sys.argv[1])
        target.mkdir(parents=True, exist_ok=True)
        main(target)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            main(Path(tmp))
