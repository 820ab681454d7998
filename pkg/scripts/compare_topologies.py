"""Throughput, admitted streams and solving time per algorithm on the four 25-bridge topologies.

    python scripts/compare_topologies.py --seeds 10 --out results/topologies.csv
"""

import argparse
import statistics
from collections import defaultdict
from dataclasses import replace

from ttplan.harness import ScenarioConfig, run_scenario_full, write_metrics_csv
from ttplan.routing import RouteCache
from ttplan.topology import TopologySpec, generate

TOPOLOGIES = {
    "random": TopologySpec("random", n_bridges=25),
    "grid": TopologySpec("grid", rows=5, cols=5),
    "ring": TopologySpec("ring", n_bridges=25),
    "tree": TopologySpec("tree", n_bridges=25),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--streams", type=int, default=2500)
    parser.add_argument("--algos", default="h2s,celf,ff,edf")
    parser.add_argument("--out", default="topologies.csv")
    args = parser.parse_args()

    rows = []
    summary = defaultdict(list)
    for name, base in TOPOLOGIES.items():
        for seed in range(args.seeds):
            spec = replace(base, seed=seed)
            cache = RouteCache(generate(spec), 4)
            for algo in args.algos.split(","):
                run = run_scenario_full(ScenarioConfig(spec, args.streams, algorithm=algo, seed=seed), cache=cache)
                rows += run.rows
                last = run.rows[-1]
                summary[name, algo].append((float(last.aggregated_throughput_mbps), len(run.state.schedules),
                                            last.solving_time_seconds))
    write_metrics_csv(rows, args.out)

    print(f"{'topology':8} {'algo':6} {'Mbit/s':>10} {'admitted':>9} {'seconds':>8}")
    for (name, algo), values in summary.items():
        thr, adm, sec = (statistics.mean(col) for col in zip(*values))
        print(f"{name:8} {algo:6} {thr:10.1f} {adm:9.1f} {sec:8.3f}")


if __name__ == "__main__":
    main()
