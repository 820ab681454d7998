"""Effect of the batch size on throughput and solving time (random-25, defensive planning)."""

import argparse
import statistics

from ttplan.harness import ScenarioConfig, run_scenario_full, write_metrics_csv
from ttplan.routing import RouteCache
from ttplan.topology import TopologySpec, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1,10,100,500,2500")
    parser.add_argument("--algos", default="h2s,celf")
    parser.add_argument("--streams", type=int, default=2500)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--out", default="batch_sizes.csv")
    args = parser.parse_args()

    rows = []
    for algo in args.algos.split(","):
        for size in map(int, args.sizes.split(",")):
            thr, secs = [], []
            for seed in range(args.seeds):
                spec = TopologySpec("random", n_bridges=25, seed=seed)
                cache = RouteCache(generate(spec), 4)
                run = run_scenario_full(ScenarioConfig(spec, args.streams, size, algo, seed=seed), cache=cache)
                rows += run.rows
                thr.append(float(run.rows[-1].aggregated_throughput_mbps))
                secs.append(sum(r.solving_time_seconds for r in run.rows))
            print(f"{algo:5} batch {size:5d}: {statistics.mean(thr):9.1f} Mbit/s, {statistics.mean(secs):.3f} s total")
    write_metrics_csv(rows, args.out)


if __name__ == "__main__":
    main()
