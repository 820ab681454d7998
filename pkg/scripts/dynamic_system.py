"""Streams leave and enter a 25-bridge network over many steps; prints throughput per step."""

import argparse

from ttplan.harness import DynamicConfig, ScenarioConfig, run_scenario_full, write_metrics_csv
from ttplan.routing import RouteCache
from ttplan.topology import TopologySpec, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kind", choices=["ring", "random", "grid", "tree"], default="ring")
    parser.add_argument("--algos", default="h2s,celf,ff,offensive-h2s")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument("--leave-from", choices=["requested", "admitted"], default="requested")
    parser.add_argument("--out", default="dynamic.csv")
    args = parser.parse_args()

    spec = TopologySpec(args.kind, n_bridges=25, rows=5, cols=5, seed=args.seed)
    cache = RouteCache(generate(spec), 4)
    dyn = DynamicConfig(steps=args.steps, leave_from=args.leave_from)
    rows, series = [], {}
    for algo in args.algos.split(","):
        run = run_scenario_full(ScenarioConfig(spec, algorithm=algo, seed=args.seed, dynamic=dyn), cache=cache)
        rows += run.rows
        series[algo] = [float(r.aggregated_throughput_mbps) for r in run.rows]
    write_metrics_csv(rows, args.out)

    print("step " + " ".join(f"{a:>14}" for a in series))
    for step in range(args.steps + 1):
        print(f"{step:4d} " + " ".join(f"{s[step]:14.1f}" for s in series.values()))


if __name__ == "__main__":
    main()
