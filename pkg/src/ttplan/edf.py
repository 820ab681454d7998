"""Earliest-deadline-first benchmark: discrete-event simulation over shortest routes.

EDF is offensive: every simulation recomputes all transmission times, so a
plan replaces the previous state instead of extending it.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction
from itertools import chain
from typing import Iterable, Optional, Sequence

import numpy as np
from numba import njit

from .model import NetworkGraph, PlanResult, Stream, hyper_period as lcm_periods
from .placement import ScheduleState, StreamSchedule, _hops
from .routing import Route, shortest_route

INFLATION = Fraction(6, 5)


@dataclass
class EdfStats:
    simulations: int = 0
    prefiltered: int = 0
    seed_size: int = 0
    seed_retries: int = 0


def simulate(graph: NetworkGraph, streams: Sequence[Stream], routes: dict[int, Route],
             h: int) -> Optional[dict[int, tuple[tuple[int, ...], ...]]]:
    """Non-preemptive EDF at every egress port over one hyper period.

    Frames are released in phase at ``j * period``. An idle port starts the
    waiting frame with the earliest absolute deadline (ties: stream id, then
    frame index). Returns per-stream ``starts[frame][hop]``, or None as soon
    as any frame can no longer meet its deadline.
    """
    hop_table = [_hops(graph, routes[s.id], s.frame_size) for s in streams]
    starts = [[[0] * len(hops) for _ in range(h // s.period)] for s, hops in zip(streams, hop_table)]
    # events: (time, stream index, frame, hop); a frame becomes eligible at a port
    events = []
    for k, s in enumerate(streams):
        p = s.period
        for j in range(h // p):
            events.append((j * p, k, j, 0))
    heapq.heapify(events)
    ready: dict[int, list] = {}
    busy_until: dict[int, int] = {}
    wake = []  # (time, link) when a busy port frees up
    pop, push = heapq.heappop, heapq.heappush
    ids = [s.id for s in streams]
    periods = [s.period for s in streams]

    while events or wake:
        t = min(events[0][0] if events else h * 4, wake[0][0] if wake else h * 4)
        touched = set()
        while events and events[0][0] == t:
            _, k, j, i = pop(events)
            lid = hop_table[k][i][0]
            q = ready.get(lid)
            if q is None:
                q = ready[lid] = []
            push(q, ((j + 1) * periods[k], ids[k], j, k, i))
            touched.add(lid)
        while wake and wake[0][0] == t:
            touched.add(pop(wake)[1])
        for lid in touched:
            q = ready.get(lid)
            if not q or busy_until.get(lid, 0) > t:
                continue
            deadline, _, j, k, i = pop(q)
            _, tx, post, slack = hop_table[k][i]
            if t + slack > deadline:
                return None
            starts[k][j][i] = t
            busy_until[lid] = t + tx
            push(wake, (t + tx, lid))
            if i + 1 < len(hop_table[k]):
                push(events, (t + tx + post, k, j, i + 1))
    return {s.id: tuple(tuple(f) for f in starts[k]) for k, s in enumerate(streams)}


@njit(cache=True)
def _push(keys, vals, size, key, val):
    i = size
    keys[i] = key
    vals[i] = val
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return size + 1


@njit(cache=True)
def _pop(keys, vals, size):
    size -= 1
    keys[0] = keys[size]
    vals[0] = vals[size]
    i = 0
    while True:
        child = 2 * i + 1
        if child >= size:
            break
        if child + 1 < size and keys[child + 1] < keys[child]:
            child += 1
        if keys[i] <= keys[child]:
            break
        keys[child], keys[i] = keys[i], keys[child]
        vals[child], vals[i] = vals[i], vals[child]
        i = child
    return size


@njit(cache=True)
def _edf_kernel(n_links, horizon, period, sid, n_hops, hop_off, hops, fh_k, fh_j, fh_i, first,
                link_cap, id_span, frame_span, starts):
    """Tick-bucketed event loop; per-port ready heaps keyed by (deadline, stream id, frame)."""
    nfh = fh_k.shape[0]
    head = np.full(horizon + 1, -1, np.int64)  # frames becoming eligible at tick t
    nxt = np.full(nfh, -1, np.int64)
    wake_head = np.full(horizon + 1, -1, np.int64)  # ports finishing a transmission at t
    wake_nxt = np.full(n_links, -1, np.int64)
    for x in range(first.shape[0]):
        fh = first[x]
        t = fh_j[fh] * period[fh_k[fh]]
        nxt[fh] = head[t]
        head[t] = fh
    rd_keys = np.empty((n_links, link_cap), np.int64)
    rd_vals = np.empty((n_links, link_cap), np.int64)
    rd_size = np.zeros(n_links, np.int64)
    busy = np.zeros(n_links, np.int64)
    flag = np.zeros(n_links, np.bool_)
    touched = np.empty(n_links, np.int64)
    for t in range(horizon + 1):
        n_touched = 0
        fh = head[t]
        while fh >= 0:
            k = fh_k[fh]
            j = fh_j[fh]
            lid = hops[hop_off[k] + fh_i[fh], 0]
            key = ((j + 1) * period[k] * id_span + sid[k]) * frame_span + j
            rd_size[lid] = _push(rd_keys[lid], rd_vals[lid], rd_size[lid], key, fh)
            if not flag[lid]:
                flag[lid] = True
                touched[n_touched] = lid
                n_touched += 1
            fh = nxt[fh]
        lid = wake_head[t]
        while lid >= 0:
            if not flag[lid]:
                flag[lid] = True
                touched[n_touched] = lid
                n_touched += 1
            lid = wake_nxt[lid]
        for x in range(n_touched):
            lid = touched[x]
            flag[lid] = False
            if rd_size[lid] == 0 or busy[lid] > t:
                continue
            fh = rd_vals[lid, 0]
            rd_size[lid] = _pop(rd_keys[lid], rd_vals[lid], rd_size[lid])
            k = fh_k[fh]
            j = fh_j[fh]
            hop = hop_off[k] + fh_i[fh]
            deadline = (j + 1) * period[k]
            if t + hops[hop, 3] > deadline:
                return False
            starts[fh] = t
            tx = hops[hop, 1]
            busy[lid] = t + tx
            # t + tx <= deadline <= horizon, checked above
            wake_nxt[lid] = wake_head[t + tx]
            wake_head[t + tx] = lid
            if fh_i[fh] + 1 < n_hops[k]:
                arrive = t + tx + hops[hop, 2]
                if arrive + hops[hop + 1, 3] > deadline:
                    return False
                nxt[fh + 1] = head[arrive]
                head[arrive] = fh + 1
    return True


class _SimArrays:
    """Flat simulation inputs for a stream list; cheap to extend by one stream."""

    def __init__(self, streams: Sequence[Stream], hop_rows: dict[int, list], h: int) -> None:
        self.streams = list(streams)
        self.horizon = h
        n = len(self.streams)
        self.period = np.array([s.period for s in self.streams], np.int64)
        self.sid = np.array([s.id for s in self.streams], np.int64)
        rows = [hop_rows[s.id] for s in self.streams]
        self.n_hops = np.array([len(r) for r in rows], np.int64)
        self.hop_off = np.zeros(n, np.int64)
        if n:
            np.cumsum(self.n_hops[:-1], out=self.hop_off[1:])
        self.hops = np.array(list(chain.from_iterable(rows)), np.int64).reshape(-1, 4)
        self.n_frames = h // self.period
        count = self.n_frames * self.n_hops
        base = np.zeros(n, np.int64)
        if n:
            np.cumsum(count[:-1], out=base[1:])
        nfh = int(count.sum())
        self.fh_k = np.repeat(np.arange(n, dtype=np.int64), count)
        local = np.arange(nfh, dtype=np.int64) - base[self.fh_k]
        self.fh_j = local // self.n_hops[self.fh_k]
        self.fh_i = local % self.n_hops[self.fh_k]
        self.first = np.flatnonzero(self.fh_i == 0)
        self.starts: Optional[np.ndarray] = None

    def extended(self, stream: Stream, hop_rows: dict[int, list], h: int) -> "_SimArrays":
        block = _SimArrays([stream], hop_rows, h)
        out = _SimArrays.__new__(_SimArrays)
        out.streams = self.streams + [stream]
        k, hop_base, fh_base = len(self.streams), len(self.hops), len(self.fh_k)
        out.period = np.append(self.period, block.period)
        out.sid = np.append(self.sid, block.sid)
        out.n_hops = np.append(self.n_hops, block.n_hops)
        out.hop_off = np.append(self.hop_off, block.hop_off + hop_base)
        out.hops = np.concatenate((self.hops, block.hops))
        out.n_frames = np.append(self.n_frames, block.n_frames)
        out.fh_k = np.concatenate((self.fh_k, block.fh_k + k))
        out.fh_j = np.concatenate((self.fh_j, block.fh_j))
        out.fh_i = np.concatenate((self.fh_i, block.fh_i))
        out.first = np.concatenate((self.first, block.first + fh_base))
        out.horizon = self.horizon
        out.starts = None
        return out

    def run(self, n_links: int) -> bool:
        if not self.streams:
            self.starts = np.zeros(0, np.int64)
            return True
        per_link = np.bincount(self.hops[:, 0], weights=np.repeat(self.n_frames, self.n_hops),
                               minlength=n_links)
        starts = np.zeros(len(self.fh_k), np.int64)
        ok = _edf_kernel(n_links, self.horizon, self.period, self.sid, self.n_hops, self.hop_off, self.hops,
                         self.fh_k, self.fh_j, self.fh_i, self.first, int(per_link.max()) + 1,
                         int(self.sid.max()) + 1, int(self.n_frames.max()) + 1, starts)
        self.starts = starts if ok else None
        return ok

    def result(self) -> dict[int, tuple[tuple[int, ...], ...]]:
        out = {}
        pos = 0
        for k, s in enumerate(self.streams):
            nh = int(self.n_hops[k])
            size = int(self.n_frames[k]) * nh
            out[s.id] = tuple(map(tuple, self.starts[pos:pos + size].reshape(-1, nh).tolist()))
            pos += size
        return out


def simulate_fast(graph: NetworkGraph, streams: Sequence[Stream], hop_rows: dict[int, list],
                  h: int) -> Optional[dict[int, tuple[tuple[int, ...], ...]]]:
    """Compiled equivalent of :func:`simulate`; ``hop_rows`` maps stream id to ``_hops`` rows."""
    arrays = _SimArrays(streams, hop_rows, h)
    return arrays.result() if arrays.run(len(graph.links)) else None


def edf_plan(graph: NetworkGraph, streams: Iterable[Stream], hyper_period: Optional[int] = None,
             routes: Optional[dict[int, Route]] = None, stats: Optional[EdfStats] = None,
             fast: bool = True) -> PlanResult:
    """Admit a large EDF-schedulable subset of ``streams`` (FIFO = given order).

    1. Simulate all streams; done if that succeeds.
    2. Otherwise seed with the FIFO streams whose throughput, inflated by
       20 %, fits every link on the route; if the seed fails, binary search
       for a prefix of it that simulates cleanly.
    3. Add the remaining streams one at a time, keeping each only if the
       re-simulation succeeds.

    A stream whose tick demand would overflow a link's hyper period is
    rejected without simulating, since no schedule can exist for it.
    """
    streams = list(streams)
    stats = stats if stats is not None else EdfStats()
    if routes is None:
        pair_routes: dict[tuple[int, int], Route] = {}
        routes = {}
        for s in streams:
            key = (s.src, s.dst)
            if key not in pair_routes:
                pair_routes[key] = shortest_route(graph, s.src, s.dst)
            routes[s.id] = pair_routes[key]
    h = lcm_periods([hyper_period or 1] + [s.period for s in streams]) if streams else (hyper_period or 1)
    hop_rows = {s.id: _hops(graph, routes[s.id], s.frame_size) for s in streams}
    position = {s.id: i for i, s in enumerate(streams)}

    n_links = len(graph.links)

    def run(subset):
        stats.simulations += 1
        if fast:
            arrays = _SimArrays(subset, hop_rows, h)
            return arrays if arrays.run(n_links) else None
        return simulate(graph, subset, routes, h)

    def extend(current, s):
        stats.simulations += 1
        if fast:
            arrays = current.extended(s, hop_rows, h)
            return arrays if arrays.run(n_links) else None
        return simulate(graph, accepted + [s], routes, h)

    def demand(s):
        n = h // s.period
        return [(lid, n * tx) for lid, tx, _, _ in hop_rows[s.id]]

    result = run(streams)
    accepted = streams
    if result is None:
        # inflated bits per tick, scaled by h * INFLATION.denominator to stay integral
        load: dict[int, int] = {}
        capacity = [link.rate * h * INFLATION.denominator for link in graph.links]
        seed, rest = [], []
        for s in streams:
            inflated = s.frame_size * 8 * (h // s.period) * INFLATION.numerator
            links = routes[s.id].links
            if all(load.get(lid, 0) + inflated <= capacity[lid] for lid in links):
                for lid in links:
                    load[lid] = load.get(lid, 0) + inflated
                seed.append(s)
            else:
                rest.append(s)
        stats.seed_size = len(seed)
        result = run(seed)
        if result is None:
            # binary search for a long prefix of the seed that simulates cleanly
            lo, hi = 0, len(seed)
            result = run([])
            while hi - lo > 1:
                stats.seed_retries += 1
                mid = (lo + hi) // 2
                trial = run(seed[:mid])
                if trial is None:
                    hi = mid
                else:
                    lo, result = mid, trial
            rest = sorted(rest + seed[lo:], key=lambda s: position[s.id])
            seed = seed[:lo]
        accepted = seed
        ticks: dict[int, int] = {}
        for s in seed:
            for lid, d in demand(s):
                ticks[lid] = ticks.get(lid, 0) + d
        for s in rest:
            need = demand(s)
            if any(ticks.get(lid, 0) + d > h for lid, d in need):
                stats.prefiltered += 1
                continue
            trial = extend(result, s)
            if trial is None:
                continue
            result = trial
            accepted = accepted + [s]
            for lid, d in need:
                ticks[lid] = ticks.get(lid, 0) + d
    if fast:
        result = result.result()

    state = ScheduleState(graph, h)
    for s in accepted:
        tx = tuple(row[1] for row in hop_rows[s.id])
        state.admit(s, StreamSchedule(s.id, routes[s.id], 0, result[s.id], tx), check=False)
    kept = set(state.schedules)
    return PlanResult([s.id for s in streams if s.id in kept], [s.id for s in streams if s.id not in kept], state)
