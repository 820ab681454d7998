"""Command line entry point: ``ttplan <subcommand> ...``.

Exit codes: 0 success, 1 infeasible or violations found, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

from .harness import (
    ALGORITHMS,
    DynamicConfig,
    FormatError,
    ScenarioConfig,
    ScheduleInvalidError,
    aggregated_throughput,
    export_tables,
    load_streams,
    load_tables,
    load_topology,
    run_scenario,
    run_scenario_full,
    write_metrics_csv,
    write_streams,
    write_topology,
)
from .model import RequestBatch, format_mbps
from .placement import ScheduleState
from .routing import NoRouteError, RouteCache
from .schedulers import PLANNERS, AlphaError, offensive_plan
from .edf import edf_plan
from .topology import KINDS, TopologySpec, generate, generate_streams
from .verify import validate

log = logging.getLogger("ttplan")


class UsageError(Exception):
    pass


def _topology_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=[k for k in KINDS if k != "external"], default="random")
    p.add_argument("--bridges", type=int, default=25)
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--cols", type=int, default=5)
    p.add_argument("--edge-probability", type=float)
    p.add_argument("--max-children", type=int, default=4)
    p.add_argument("--hosts-per-bridge", type=int, default=1)


def _topology_spec(args, seed: int) -> TopologySpec:
    if getattr(args, "topology_file", None):
        return TopologySpec("external", path=args.topology_file)
    return TopologySpec(
        args.kind,
        n_bridges=args.bridges,
        rows=args.rows,
        cols=args.cols,
        edge_probability=args.edge_probability,
        max_children=args.max_children,
        hosts_per_bridge=args.hosts_per_bridge,
        seed=seed,
    )


def _algorithm(args) -> str:
    algo = args.algo
    if args.offensive:
        if algo not in ("h2s", "celf"):
            raise UsageError("--offensive applies to h2s and celf only")
        algo = f"offensive-{algo}"
    return algo


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttplan", description="Time-triggered stream scheduling toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-topology", help="generate a topology file")
    _topology_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-streams", help="generate a streams file for a topology")
    p.add_argument("--topology-file", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("schedule", help="plan streams and export the scheduling tables")
    p.add_argument("--topology-file", required=True)
    p.add_argument("--streams-file", required=True)
    p.add_argument("--algo", choices=["h2s", "celf", "ff", "edf"], default="h2s")
    p.add_argument("--offensive", action="store_true")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--alpha", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="check an exported schedule")
    p.add_argument("--topology-file", required=True)
    p.add_argument("--streams-file", required=True)
    p.add_argument("--schedule-file", required=True)
    p.add_argument("--json", action="store_true", help="print violations as JSON records")

    p = sub.add_parser("bench", help="run scenarios and write metrics CSV")
    _topology_args(p)
    p.add_argument("--algo", default="h2s,celf,ff", help="comma separated; also edf, offensive-h2s, offensive-celf")
    p.add_argument("--offensive", action="store_true")
    p.add_argument("--streams", type=int, default=2500)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("dynamic", help="streams leave and enter over many steps")
    _topology_args(p)
    p.set_defaults(kind="ring")
    p.add_argument("--algo", choices=["h2s", "celf", "ff"], default="h2s")
    p.add_argument("--offensive", action="store_true")
    p.add_argument("--initial", type=int, default=1500)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--leave", type=int, default=100)
    p.add_argument("--leave-from", choices=["requested", "admitted"], default="requested",
                   help="pick leaving streams among all requested ones or only admitted ones")
    p.add_argument("--enter", type=int, default=200)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _gen_topology(args) -> int:
    write_topology(generate(_topology_spec(args, args.seed)), args.out)
    return 0


def _gen_streams(args) -> int:
    graph = load_topology(args.topology_file)
    write_streams(generate_streams(graph, args.n, args.seed), args.out)
    return 0


def _schedule(args) -> int:
    algo = _algorithm(args)
    if args.batch_size is not None and args.batch_size < 1:
        raise UsageError("--batch-size must be at least 1")
    if algo == "edf" and args.batch_size is not None:
        raise UsageError("edf plans offline; drop --batch-size")
    graph = load_topology(args.topology_file)
    streams = load_streams(args.streams_file, graph)
    cache = RouteCache(graph, args.k)
    state = ScheduleState(graph)
    rejected = []
    if algo == "edf":
        routes = {sid: c.routes[0] for sid, c in cache.candidates(streams).items()}
        result = edf_plan(graph, streams, state.hyper_period, routes)
        state, rejected = result.state, result.rejected
    else:
        size = args.batch_size or max(len(streams), 1)
        kwargs = {} if algo == "ff" else {"alpha": args.alpha}
        for i in range(0, len(streams), size):
            batch = RequestBatch(add=streams[i:i + size])
            old = [state.streams[sid] for sid in sorted(state.schedules)]
            candidates = cache.candidates(list(batch.add) + old)
            if algo.startswith("offensive-"):
                result = offensive_plan(state, batch, candidates, inner=algo.split("-", 1)[1], **kwargs)
            else:
                result = PLANNERS[algo](state, batch, candidates, **kwargs)
            state = result.state
            rejected += result.rejected
    export_tables(state, args.out)
    print(f"admitted {len(state.schedules)} rejected {len(rejected)} "
          f"throughput {format_mbps(aggregated_throughput(state))} Mbit/s")
    return 1 if rejected else 0


def _verify(args) -> int:
    graph = load_topology(args.topology_file)
    streams = load_streams(args.streams_file, graph)
    state = load_tables(args.schedule_file, graph, streams)
    violations = validate(state)
    for v in violations:
        print(json.dumps(v.as_record()) if args.json else str(v))
    if not violations and not args.json:
        print(f"ok: {len(state.schedules)} streams, no violations")
    return 1 if violations else 0


def _bench_one(cfg: ScenarioConfig):
    return run_scenario(cfg)


def _bench(args) -> int:
    algos = [a.strip() for a in args.algo.split(",") if a.strip()]
    if args.offensive:
        algos = [f"offensive-{a}" if a in ("h2s", "celf") else a for a in algos]
    unknown = [a for a in algos if a not in ALGORITHMS]
    if unknown:
        raise UsageError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
    configs = []
    for seed in range(args.seed, args.seed + args.seeds):
        topo = _topology_spec(args, seed)
        for algo in algos:
            batch = None if algo == "edf" else args.batch_size
            configs.append(ScenarioConfig(topo, args.streams, batch, algo, args.k, seed))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_bench_one, configs))
    else:
        results = [_bench_one(cfg) for cfg in configs]
    rows = [row for rows in results for row in rows]
    write_metrics_csv(rows, args.out)
    for row in rows:
        log.info("%s step %d: %s Mbit/s, %d admitted, %.3f s", row.scenario, row.step,
                 format_mbps(row.aggregated_throughput_mbps), row.admitted_count, row.solving_time_seconds)
    return 0


def _dynamic(args) -> int:
    algo = _algorithm(args)
    dyn = DynamicConfig(args.initial, args.steps, args.leave, args.enter, args.leave_from)
    cfg = ScenarioConfig(_topology_spec(args, args.seed), 0, None, algo, args.k, args.seed, dyn)
    run = run_scenario_full(cfg)
    write_metrics_csv(run.rows, args.out)
    for row in run.rows:
        log.info("step %d: %s Mbit/s", row.step, format_mbps(row.aggregated_throughput_mbps))
    return 0


COMMANDS = {
    "gen-topology": _gen_topology,
    "gen-streams": _gen_streams,
    "schedule": _schedule,
    "verify": _verify,
    "bench": _bench,
    "dynamic": _dynamic,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FormatError, AlphaError, NoRouteError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"ttplan {args.command}: {exc}", file=sys.stderr)
        return 2
    except ScheduleInvalidError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
