"""Independent schedule validation and an exhaustive oracle for tiny instances.

``validate`` re-derives every constraint from the stored stream schedules and
the link parameters of the graph; it never trusts the port timelines except
to compare them against a rebuild.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from itertools import combinations
from typing import Optional, Sequence

from .model import NetworkGraph, Stream, throughput
from .placement import ScheduleState, place, release
from .routing import CandidateSet

KINDS = (
    "Overlap",
    "Precedence",
    "Deadline",
    "Release",
    "RouteBroken",
    "Incomplete",
    "PeriodDivides",
    "TimelineMismatch",
)


@dataclass(frozen=True)
class Violation:
    kind: str
    link: Optional[int] = None
    stream: Optional[int] = None
    frame: Optional[int] = None
    detail: str = ""

    def __str__(self) -> str:
        where = []
        if self.link is not None:
            where.append(f"link={self.link}")
        if self.stream is not None:
            where.append(f"stream={self.stream}")
        if self.frame is not None:
            where.append(f"frame={self.frame}")
        return f"{self.kind} {' '.join(where)}: {self.detail}"

    def as_record(self) -> dict:
        return {
            "kind": self.kind,
            "link": self.link,
            "stream": self.stream,
            "frame": self.frame,
            "detail": self.detail,
        }


def _route_problem(graph: NetworkGraph, links: Sequence[int], src: int, dst: int) -> Optional[str]:
    if not links:
        return "empty route"
    node = src
    visited = {src}
    for i, lid in enumerate(links):
        if not 0 <= lid < len(graph.links):
            return f"unknown link {lid}"
        link = graph.links[lid]
        if link.src != node:
            return f"link {lid} does not leave node {node}"
        node = link.dst
        if node in visited:
            return f"node {node} visited twice"
        visited.add(node)
        if i < len(links) - 1 and graph.nodes[node].is_host:
            return f"end station {node} used as a relay"
    if node != dst:
        return f"route ends at {node}, not {dst}"
    return None


def validate(state: ScheduleState) -> list[Violation]:
    graph = state.graph
    h = state.hyper_period
    out: list[Violation] = []
    slots: dict[int, list[tuple[int, int, int, int]]] = {}

    for sid in sorted(state.schedules):
        sched = state.schedules[sid]
        stream = state.streams.get(sid)
        if stream is None:
            out.append(Violation("RouteBroken", stream=sid, detail="schedule without stream"))
            continue
        p = stream.period
        if h % p:
            out.append(Violation("PeriodDivides", stream=sid, detail=f"period {p} does not divide {h}"))
            continue
        links = sched.route.links
        problem = _route_problem(graph, links, stream.src, stream.dst)
        if problem:
            out.append(Violation("RouteBroken", stream=sid, detail=problem))
            continue
        if sched.stream != sid or not 0 <= sched.offset < p:
            out.append(Violation("Release", stream=sid, detail=f"bad offset {sched.offset}"))
        n_hops = len(links)
        tx = [-(-stream.frame_size * 8 // graph.links[lid].rate) for lid in links]
        if list(sched.tx) != tx:
            out.append(Violation("Incomplete", stream=sid, detail=f"transmission lengths {sched.tx} != {tx}"))
            continue
        if len(sched.starts) != h // p:
            out.append(Violation("Incomplete", stream=sid,
                                 detail=f"{len(sched.starts)} frames scheduled, {h // p} required"))
        for j, starts in enumerate(sched.starts):
            if len(starts) != n_hops:
                out.append(Violation("Incomplete", stream=sid, frame=j,
                                     detail=f"{len(starts)} of {n_hops} hops scheduled"))
                continue
            if starts[0] < j * p + sched.offset:
                out.append(Violation("Release", links[0], sid, j,
                                     f"starts at {starts[0]} before release {j * p + sched.offset}"))
            for i in range(n_hops - 1):
                link = graph.links[links[i]]
                ready = starts[i] + tx[i] + link.propagation + link.processing
                if starts[i + 1] < ready:
                    out.append(Violation("Precedence", links[i + 1], sid, j,
                                         f"hop {i + 1} starts at {starts[i + 1]}, frame ready at {ready}"))
            delivered = starts[-1] + tx[-1] + graph.links[links[-1]].propagation
            if delivered > (j + 1) * p:
                out.append(Violation("Deadline", links[-1], sid, j,
                                     f"delivered at {delivered}, deadline {(j + 1) * p}"))
            for i, lid in enumerate(links):
                slots.setdefault(lid, []).append((starts[i], starts[i] + tx[i], sid, j))

    for lid in sorted(slots):
        items = sorted(slots[lid])
        for start, end, sid, j in items:
            if start < 0 or end > h:
                out.append(Violation("Overlap", lid, sid, j, f"[{start}, {end}) outside [0, {h})"))
        for (s1, e1, a, ja), (s2, e2, b, jb) in zip(items, items[1:]):
            if s2 < e1:
                out.append(Violation("Overlap", lid, b, jb,
                                     f"[{s2}, {e2}) overlaps stream {a} frame {ja} at [{s1}, {e1})"))

    for lid, (have, want) in enumerate(zip(state.timelines, state.expected_intervals())):
        if have.intervals() != want:
            out.append(Violation("TimelineMismatch", link=lid,
                                 detail=f"{len(have)} stored slots vs {len(want)} rebuilt"))
    return out


# -- exhaustive oracle ------------------------------------------------------


@dataclass(frozen=True)
class OracleResult:
    throughput: Fraction
    admitted: tuple[int, ...]
    explored: int


class InstanceTooLarge(ValueError):
    pass


def oracle_best(
    graph: NetworkGraph,
    streams: Sequence[Stream],
    candidates: dict[int, CandidateSet],
    mode: str = "restricted",
    hyper_period: Optional[int] = None,
) -> OracleResult:
    """Best aggregated throughput reachable on a tiny instance.

    ``restricted`` searches admitted subsets x route choice x insertion
    order x sub-cycle offset with the regular placement code, so it bounds
    every heuristic built on that placement. ``tick`` searches over all
    integer start times and needs at most two streams on one shared link.
    """
    streams = list(streams)
    if len(graph.bridges) > 4 or len(streams) > 6:
        raise InstanceTooLarge("oracle needs <= 4 bridges and <= 6 streams")
    if any(len(candidates[s.id].routes) > 2 for s in streams):
        raise InstanceTooLarge("oracle needs <= 2 candidate routes per stream")
    periods = [s.period for s in streams]
    h = reduce(math.lcm, periods, hyper_period or 1)
    if mode == "restricted":
        return _restricted(graph, streams, candidates, h)
    if mode == "tick":
        return _tick(graph, streams, candidates, h)
    raise ValueError(f"unknown oracle mode {mode!r}")


def _restricted(graph, streams, candidates, h) -> OracleResult:
    g = reduce(math.gcd, (s.period for s in streams), 0) or 1
    state = ScheduleState(graph, h)
    state.sub_cycle = g
    total = sum((throughput(s) for s in streams), Fraction(0))
    best = [Fraction(0), ()]
    seen: set = set()
    explored = 0

    def signature():
        return frozenset((sid, sc.route.links, sc.starts) for sid, sc in state.schedules.items())

    def search(current: Fraction, remaining: list[Stream]) -> None:
        nonlocal explored
        explored += 1
        if current > best[0]:
            best[0], best[1] = current, tuple(sorted(state.schedules))
        if current + sum((throughput(s) for s in remaining), Fraction(0)) <= best[0]:
            return
        for idx, stream in enumerate(remaining):
            rest = remaining[:idx] + remaining[idx + 1:]
            for route in candidates[stream.id].routes:
                for offset in range(0, stream.period, g):
                    if place(state, stream, route, offsets=(offset,)) is None:
                        continue
                    key = signature()
                    if key not in seen:
                        seen.add(key)
                        search(current + throughput(stream), rest)
                    release(state, stream.id)
                    if best[0] == total:
                        return

    search(Fraction(0), streams)
    return OracleResult(best[0], best[1], explored)


def _tick(graph, streams, candidates, h) -> OracleResult:
    if len(streams) > 2:
        raise InstanceTooLarge("tick mode needs <= 2 streams")
    routes = [candidates[s.id].routes for s in streams]
    if any(len(r) != 1 or r[0].hop_count != 1 for r in routes) or len({r[0].links for r in routes}) > 1:
        raise InstanceTooLarge("tick mode needs every stream on the same single link")
    link = graph.links[routes[0][0].links[0]] if streams else None
    best = (Fraction(0), ())
    explored = 0
    for size in range(len(streams), 0, -1):
        for subset in combinations(streams, size):
            thr = sum((throughput(s) for s in subset), Fraction(0))
            if thr <= best[0]:
                continue
            explored += 1
            if _single_link_feasible(subset, link, h):
                best = (thr, tuple(sorted(s.id for s in subset)))
    return OracleResult(best[0], best[1], explored)


def _single_link_feasible(streams: Sequence[Stream], link, h: int) -> bool:
    """Whether some choice of integer start ticks serves every frame on one link.

    Frames on one link are transmitted in some order. For a fixed order,
    starting each frame at the earliest tick it may start is feasible
    whenever any tick assignment with that order is, so enumerating the
    interleavings of the streams' frame sequences with earliest starts
    covers every tick-level schedule. Frames of one stream have disjoint
    windows, so their relative order is fixed. The interleavings are
    enumerated with memoisation on (frames placed per stream) -> earliest
    finishing tick, which dominates any later finish.
    """
    frames = []
    for s in streams:
        tx = -(-s.frame_size * 8 // link.rate)
        frames.append([(j * s.period, (j + 1) * s.period - link.propagation, tx) for j in range(h // s.period)])
    counts = tuple(len(f) for f in frames)
    best_end = {(0,) * len(frames): 0}
    frontier = [(0,) * len(frames)]
    while frontier:
        nxt = []
        for placed in frontier:
            busy = best_end[placed]
            for k, fr in enumerate(frames):
                if placed[k] == counts[k]:
                    continue
                release_t, latest_end, tx = fr[placed[k]]
                start = max(busy, release_t)
                if start + tx > latest_end:
                    continue
                key = placed[:k] + (placed[k] + 1,) + placed[k + 1:]
                if key not in best_end:
                    nxt.append(key)
                    best_end[key] = start + tx
                else:
                    best_end[key] = min(best_end[key], start + tx)
        frontier = nxt
    return counts in best_end
