"""Scenario driver, metrics, and the plain-text file formats.

Every file starts with a ``# ttplan-v1`` line. Blank lines and other ``#``
lines are ignored on input.
"""

from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .edf import edf_plan
from .model import NetworkGraph, NodeKind, PlanResult, RequestBatch, Stream, format_mbps, throughput
from .placement import ScheduleState, StreamSchedule, buffer_occupancy
from .routing import Route, RouteCache
from .schedulers import PLANNERS, offensive_plan
from .topology import TopologySpec, generate, generate_streams
from .verify import Violation, validate

HEADER = "# ttplan-v1"
ALGORITHMS = ("h2s", "celf", "ff", "edf", "offensive-h2s", "offensive-celf")


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


class ScheduleInvalidError(RuntimeError):
    def __init__(self, label: str, violations: Sequence[Violation]) -> None:
        self.violations = list(violations)
        lines = "\n".join(f"  {v}" for v in self.violations[:50])
        more = f"\n  ... {len(self.violations) - 50} more" if len(self.violations) > 50 else ""
        super().__init__(f"{label}: {len(self.violations)} violations\n{lines}{more}")


@dataclass(frozen=True)
class DynamicConfig:
    initial_n: int = 1500
    steps: int = 50
    leave_per_step: int = 100
    enter_per_step: int = 200
    # "requested": the oldest requested streams leave, admitted or not; "admitted": the oldest admitted ones
    leave_from: str = "requested"

    def __post_init__(self) -> None:
        if min(self.initial_n, self.steps, self.leave_per_step, self.enter_per_step) <= 0:
            raise ValueError("dynamic parameters must be positive")
        if self.leave_from not in ("requested", "admitted"):
            raise ValueError(f"leave_from must be 'requested' or 'admitted', not {self.leave_from!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    topology: TopologySpec
    n_streams: int = 2500
    batch_size: Optional[int] = None  # None: one offline batch
    algorithm: str = "h2s"
    k_candidates: int = 4
    seed: int = 0
    dynamic: Optional[DynamicConfig] = None
    alpha: Optional[int] = None
    validate: bool = True

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.k_candidates < 1:
            raise ValueError("k must be at least 1")
        if self.n_streams < 0:
            raise ValueError("stream count must be non-negative")
        if self.algorithm == "edf" and (self.batch_size is not None or self.dynamic is not None):
            raise ValueError("edf only runs offline on a single batch")

    @property
    def label(self) -> str:
        batch = "inf" if self.batch_size is None else str(self.batch_size)
        mode = "dyn" if self.dynamic else f"b{batch}"
        return f"{self.topology.label}/seed{self.seed}/{self.algorithm}/{mode}"


@dataclass
class MetricsRow:
    scenario: str
    step: int
    algorithm: str
    aggregated_throughput_mbps: Fraction
    admitted_count: int
    rejected_count: int
    solving_time_seconds: float
    mean_table_length: float
    max_table_length: int
    max_buffer_occupancy: int
    schedulable: bool

    def csv_values(self) -> list[str]:
        return [
            self.scenario,
            str(self.step),
            self.algorithm,
            format_mbps(self.aggregated_throughput_mbps),
            str(self.admitted_count),
            str(self.rejected_count),
            f"{self.solving_time_seconds:.6f}",
            f"{self.mean_table_length:.3f}",
            str(self.max_table_length),
            str(self.max_buffer_occupancy),
            str(self.schedulable).lower(),
        ]


METRIC_COLUMNS = [f.name for f in dataclasses.fields(MetricsRow)]


@dataclass
class ScenarioRun:
    """Everything a scenario produced; ``rows`` are the metrics."""

    config: ScenarioConfig
    graph: NetworkGraph
    streams: list[Stream]
    state: ScheduleState
    rows: list[MetricsRow] = field(default_factory=list)
    history: list[frozenset[int]] = field(default_factory=list)  # admitted ids after each step


def aggregated_throughput(result: PlanResult | ScheduleState) -> Fraction:
    state = result.state if isinstance(result, PlanResult) else result
    return sum((throughput(state.streams[sid]) for sid in state.schedules), Fraction(0))


def table_lengths(state: ScheduleState) -> list[int]:
    """Reservation count of every egress port that carries traffic."""
    return [len(t) for t in state.timelines if len(t)]


def _plan(cfg: ScenarioConfig, state: ScheduleState, batch: RequestBatch, cache: RouteCache,
          ) -> tuple[PlanResult, float]:
    old = [state.streams[sid] for sid in sorted(state.schedules)]
    candidates = cache.candidates(list(batch.add) + old)
    algo = cfg.algorithm
    if algo == "edf":
        routes = {sid: c.routes[0] for sid, c in candidates.items()}
        t0 = time.perf_counter()
        result = edf_plan(state.graph, batch.add, state.hyper_period, routes)
        return result, time.perf_counter() - t0
    kwargs = {} if algo.endswith("ff") else {"alpha": cfg.alpha}
    t0 = time.perf_counter()
    if algo.startswith("offensive-"):
        result = offensive_plan(state, batch, candidates, inner=algo.split("-", 1)[1], **kwargs)
    else:
        result = PLANNERS[algo](state, batch, candidates, **kwargs)
    return result, time.perf_counter() - t0


def _row(cfg: ScenarioConfig, step: int, result: PlanResult, elapsed: float) -> MetricsRow:
    state = result.state
    lengths = table_lengths(state)
    return MetricsRow(
        scenario=cfg.label,
        step=step,
        algorithm=cfg.algorithm,
        aggregated_throughput_mbps=aggregated_throughput(state),
        admitted_count=len(result.admitted),
        rejected_count=len(result.rejected),
        solving_time_seconds=elapsed,
        mean_table_length=sum(lengths) / len(lengths) if lengths else 0.0,
        max_table_length=max(lengths, default=0),
        max_buffer_occupancy=max((buffer_occupancy(state, lid) for lid in range(len(state.timelines))), default=0),
        schedulable=not result.rejected,
    )


def run_scenario_full(cfg: ScenarioConfig, graph: Optional[NetworkGraph] = None,
                      cache: Optional[RouteCache] = None) -> ScenarioRun:
    """Run a scenario and keep the final state alongside the metrics rows.

    ``graph`` and ``cache`` let several algorithms share one topology and
    its candidate routes; the cache must belong to ``graph``.
    """
    if cache is not None:
        graph = cache.graph
    graph = graph if graph is not None else generate(cfg.topology)
    dyn = cfg.dynamic
    total = cfg.n_streams if dyn is None else dyn.initial_n + dyn.steps * dyn.enter_per_step
    streams = generate_streams(graph, total, cfg.seed)
    if cache is None or cache.k != cfg.k_candidates:
        cache = RouteCache(graph, cfg.k_candidates)
    state = ScheduleState(graph)
    run = ScenarioRun(cfg, graph, streams, state)

    if dyn is None:
        size = cfg.batch_size or max(len(streams), 1)
        batches = [RequestBatch(add=streams[i:i + size]) for i in range(0, len(streams), size)]
        for step, batch in enumerate(batches or [RequestBatch()]):
            state = _step(cfg, run, step, state, batch, cache)
    else:
        order: list[int] = []  # candidates for leaving, oldest first
        cursor = dyn.initial_n
        batch = RequestBatch(add=streams[:cursor])
        for step in range(dyn.steps + 1):
            if step:
                leaving = order[:dyn.leave_per_step]
                order = order[dyn.leave_per_step:]
                batch = RequestBatch(add=streams[cursor:cursor + dyn.enter_per_step],
                                     remove=[sid for sid in leaving if sid in state.schedules])
                cursor += dyn.enter_per_step
            state = _step(cfg, run, step, state, batch, cache)
            if dyn.leave_from == "requested":
                order += [s.id for s in batch.add]
            else:
                order += [s.id for s in batch.add if s.id in state.schedules]
    run.state = state
    return run


def _step(cfg, run: ScenarioRun, step: int, state: ScheduleState, batch: RequestBatch,
          cache: RouteCache) -> ScheduleState:
    result, elapsed = _plan(cfg, state, batch, cache)
    if cfg.validate:
        violations = validate(result.state)
        if violations:
            raise ScheduleInvalidError(f"{cfg.label} step {step}", violations)
    run.rows.append(_row(cfg, step, result, elapsed))
    run.history.append(frozenset(result.state.schedules))
    return result.state


def run_scenario(cfg: ScenarioConfig) -> list[MetricsRow]:
    return run_scenario_full(cfg).rows


# -- file formats -----------------------------------------------------------


def _records(path: str | Path) -> Iterable[tuple[int, list[str]]]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise FormatError(f"{path}:1: missing '{HEADER}' header")
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if line and not line.startswith("#"):
            yield lineno, line.split()


def _ints(path, lineno: int, fields: Sequence[str]) -> list[int]:
    try:
        return [int(f) for f in fields]
    except ValueError:
        raise FormatError(f"{path}:{lineno}: expected integers, got {' '.join(fields)!r}") from None


def _keyed(path, lineno: int, fields: Sequence[str], keys: Sequence[str]) -> list[str]:
    if len(fields) != len(keys):
        raise FormatError(f"{path}:{lineno}: expected {len(keys)} key=value fields")
    values = []
    for f, key in zip(fields, keys):
        name, sep, value = f.partition("=")
        if not sep or name != key:
            raise FormatError(f"{path}:{lineno}: expected '{key}=...', got {f!r}")
        values.append(value)
    return values


def write_topology(graph: NetworkGraph, path: str | Path) -> None:
    lines = [HEADER]
    lines += [f"node {n.id} {n.kind.value}" for n in graph.nodes]
    lines += [
        f"link {l.id} {l.src} {l.dst} {l.rate * 1_000_000} {l.propagation} {l.processing}"
        for l in graph.links
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_topology(path: str | Path) -> NetworkGraph:
    graph = NetworkGraph()
    for lineno, fields in _records(path):
        tag, args = fields[0], fields[1:]
        if tag == "node":
            if len(args) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'node <id> bridge|host'")
            (nid,) = _ints(path, lineno, args[:1])
            if nid != len(graph.nodes):
                raise FormatError(f"{path}:{lineno}: node id {nid} out of order, expected {len(graph.nodes)}")
            if args[1] not in ("bridge", "host"):
                raise FormatError(f"{path}:{lineno}: unknown node kind {args[1]!r}")
            graph.add_node(NodeKind(args[1]))
        elif tag == "link":
            if len(args) != 6:
                raise FormatError(f"{path}:{lineno}: expected 'link <id> <from> <to> <rate_bps> <prop_us> <proc_us>'")
            lid, src, dst, rate_bps, prop, proc = _ints(path, lineno, args)
            if lid != len(graph.links):
                raise FormatError(f"{path}:{lineno}: link id {lid} out of order, expected {len(graph.links)}")
            for node in (src, dst):
                if not 0 <= node < len(graph.nodes):
                    raise FormatError(f"{path}:{lineno}: link {lid} references unknown node {node}")
            if rate_bps <= 0 or rate_bps % 1_000_000:
                raise FormatError(f"{path}:{lineno}: rate {rate_bps} must be a positive multiple of 1 Mbit/s")
            try:
                graph.add_link(src, dst, rate_bps // 1_000_000, prop, proc)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
        else:
            raise FormatError(f"{path}:{lineno}: unknown record {tag!r}")
    return graph


def write_streams(streams: Iterable[Stream], path: str | Path) -> None:
    lines = [HEADER] + [f"stream {s.id} {s.src} {s.dst} {s.frame_size} {s.period}" for s in streams]
    Path(path).write_text("\n".join(lines) + "\n")


def load_streams(path: str | Path, graph: Optional[NetworkGraph] = None) -> list[Stream]:
    streams = []
    seen = set()
    for lineno, fields in _records(path):
        if fields[0] != "stream" or len(fields) != 6:
            raise FormatError(f"{path}:{lineno}: expected 'stream <id> <src> <dst> <bytes> <period_us>'")
        sid, src, dst, size, period = _ints(path, lineno, fields[1:])
        if sid in seen:
            raise FormatError(f"{path}:{lineno}: duplicate stream id {sid}")
        if graph is not None:
            for node in (src, dst):
                if not 0 <= node < len(graph.nodes) or not graph.is_host(node):
                    raise FormatError(f"{path}:{lineno}: stream {sid} endpoint {node} is not an end station")
        try:
            streams.append(Stream(sid, src, dst, size, period))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        seen.add(sid)
    return streams


def export_tables(state: ScheduleState, path: str | Path) -> None:
    """Write routes, offsets, then every reservation sorted by (link, start)."""
    Path(path).write_text(format_tables(state))


def format_tables(state: ScheduleState) -> str:
    lines = [HEADER, f"hyper_period {state.hyper_period}"]
    for sid in sorted(state.schedules):
        sched = state.schedules[sid]
        links = ",".join(map(str, sched.route.links))
        lines.append(f"route {sid} offset={sched.offset} links={links}")
    for lid, timeline in enumerate(state.timelines):
        for start, end, (sid, j, _) in timeline.intervals():
            lines.append(f"port {lid} t={start} len={end - start} stream={sid} frame={j}")
    return "\n".join(lines) + "\n"


def load_tables(path: str | Path, graph: NetworkGraph, streams: Iterable[Stream]) -> ScheduleState:
    """Rebuild a state from an exported schedule; validate() it afterwards."""
    by_id = {s.id: s for s in streams}
    h = None
    routes: dict[int, tuple[int, tuple[int, ...]]] = {}
    slots: dict[int, dict[tuple[int, int], tuple[int, int]]] = {}
    for lineno, fields in _records(path):
        tag, args = fields[0], fields[1:]
        if tag == "hyper_period":
            (h,) = _ints(path, lineno, args)
        elif tag == "route":
            if len(args) != 3:
                raise FormatError(f"{path}:{lineno}: expected 'route <id> offset=<o> links=<l,...>'")
            (sid,) = _ints(path, lineno, args[:1])
            offset, links = _keyed(path, lineno, args[1:], ("offset", "links"))
            (offset,) = _ints(path, lineno, [offset])
            links = tuple(_ints(path, lineno, links.split(",")))
            if sid not in by_id:
                raise FormatError(f"{path}:{lineno}: unknown stream {sid}")
            routes[sid] = (offset, links)
            slots[sid] = {}
        elif tag == "port":
            if len(args) != 5:
                raise FormatError(f"{path}:{lineno}: expected 'port <link> t= len= stream= frame='")
            (lid,) = _ints(path, lineno, args[:1])
            start, length, sid, j = _ints(path, lineno, _keyed(path, lineno, args[1:], ("t", "len", "stream", "frame")))
            if sid not in routes:
                raise FormatError(f"{path}:{lineno}: reservation for stream {sid} without a route line")
            slots[sid][(j, lid)] = (start, length)
        else:
            raise FormatError(f"{path}:{lineno}: unknown record {tag!r}")
    if h is None:
        raise FormatError(f"{path}: missing hyper_period line")
    state = ScheduleState(graph, h, max_hyper_period=h)
    for sid, (offset, links) in routes.items():
        stream = by_id[sid]
        n_frames = max((j + 1 for j, _ in slots[sid]), default=0)
        starts, tx = [], [0] * len(links)
        for j in range(n_frames):
            row = []
            for i, lid in enumerate(links):
                if (j, lid) not in slots[sid]:
                    break
                start, length = slots[sid][(j, lid)]
                row.append(start)
                tx[i] = length
            starts.append(tuple(row))
        schedule = StreamSchedule(sid, Route(links), offset, tuple(starts), tuple(tx))
        state.admit(stream, schedule, check=False)
    return state


def write_violations(violations: Iterable[Violation], path: str | Path) -> None:
    Path(path).write_text("\n".join([HEADER] + [str(v) for v in violations]) + "\n")


def write_metrics_csv(rows: Iterable[MetricsRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(HEADER + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_values())
