"""Two structural properties of natural connectivity on transit networks.

Removing routes: we delete whole routes from a synthetic city in random
order and watch connectivity fall. It never increases and reaches zero once
no edge is left.

Adding edge sets: for a set of candidate edges that forms a path we compare
the joint gain with the sum of the single-edge gains. The ratio
``theta = 1 - joint / sum`` is zero for a single edge and mostly positive
for longer paths, which is why summing precomputed single-edge gains
overestimates what a whole route adds.

Run with ``python demos/structure_experiments.py``.
"""

import statistics

from ctbus import precompute
from ctbus.evaluation import monotonicity_experiment, submodularity_experiment
from ctbus.synthetic import grid_city


def main() -> None:
    city = grid_city(rows=20, cols=20, n_routes=10, n_trajectories=0, seed=0)
    print(f"city with {city.transit.n} stops and {len(city.transit.routes)} routes")

    print("\nremoving routes")
    for row in monotonicity_experiment(city.transit, steps=10, exact=True, seed=0):
        bar = "#" * int(round(40 * row["connectivity"]))
        print(f"  {row['fraction_removed']:4.0%} removed, {row['edges']:3d} edges  "
              f"{row['connectivity']:.4f} {bar}")

    print("\njoint gain of path-shaped edge sets")
    table = precompute(city.road, city.transit, 500.0)
    rows = submodularity_experiment(city.transit, table.new, [1, 5, 10, 15, 20], trials=15, seed=0)
    for size in (1, 5, 10, 15, 20):
        th = [r["theta"] for r in rows if r["size"] == size]
        if th:
            print(f"  {size:2d} edges: median theta {statistics.median(th):+.3f} "
                  f"(min {min(th):+.3f}, max {max(th):+.3f}, {len(th)} samples)")


if __name__ == "__main__":
    main()
