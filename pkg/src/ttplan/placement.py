"""Per-port reservation timelines and stream placement.

A schedule covers exactly one hyper period ``h``; every reservation is a
half-open interval ``[start, end)`` with ``0 <= start < end <= h``.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Optional, Sequence

from .model import NetworkGraph, Stream, hyper_period, sub_cycle, transmission_ticks
from .routing import Route

DEFAULT_HYPER_PERIOD = 2000
DEFAULT_MAX_HYPER_PERIOD = 100_000

# (stream id, frame index, arrival tick at this port)
Owner = tuple[int, int, int]


class PortTimeline:
    """Ordered, non-overlapping reservations of one egress port."""

    __slots__ = ("link", "horizon", "starts", "ends", "owners", "reserved", "busy_starts", "busy_ends")

    def __init__(self, link: int, horizon: int) -> None:
        self.link = link
        self.horizon = horizon
        self.starts: list[int] = []
        self.ends: list[int] = []
        self.owners: list[Owner] = []
        self.reserved = 0
        # maximal busy blocks: touching reservations merged, so free-slot
        # searches skip back-to-back frames in one step
        self.busy_starts: list[int] = []
        self.busy_ends: list[int] = []

    def find_free(self, t: int, length: int) -> int:
        """Earliest ``s >= t`` such that ``[s, s + length)`` is unreserved."""
        starts, ends = self.busy_starts, self.busy_ends
        i = bisect_right(starts, t)
        if i and ends[i - 1] > t:
            t = ends[i - 1]
        n = len(starts)
        while i < n and starts[i] < t + length:
            t = ends[i]
            i += 1
        return t

    def is_free(self, start: int, end: int) -> bool:
        return self.find_free(start, end - start) == start

    def reserve(self, start: int, end: int, owner: Owner, check: bool = True) -> None:
        if check:
            if not 0 <= start < end <= self.horizon:
                raise ValueError(f"reservation [{start}, {end}) outside [0, {self.horizon})")
            if not self.is_free(start, end):
                raise ValueError(f"reservation [{start}, {end}) overlaps on link {self.link}")
        i = bisect_right(self.starts, start)
        self.starts.insert(i, start)
        self.ends.insert(i, end)
        self.owners.insert(i, owner)
        self.reserved += end - start
        bs, be = self.busy_starts, self.busy_ends
        k = bisect_right(bs, start)
        if k and be[k - 1] == start:
            if k < len(bs) and bs[k] == end:
                be[k - 1] = be[k]
                del bs[k], be[k]
            else:
                be[k - 1] = end
        elif k < len(bs) and bs[k] == end:
            bs[k] = start
        else:
            bs.insert(k, start)
            be.insert(k, end)

    def cancel(self, start: int, stream: int) -> None:
        i = bisect_right(self.starts, start) - 1
        while i >= 0 and self.starts[i] == start:
            if self.owners[i][0] == stream:
                end = self.ends[i]
                self.reserved -= end - start
                del self.starts[i], self.ends[i], self.owners[i]
                self._unbusy(start, end)
                return
            i -= 1
        raise KeyError(f"no reservation of stream {stream} at {start} on link {self.link}")

    def _unbusy(self, start: int, end: int) -> None:
        bs, be = self.busy_starts, self.busy_ends
        k = bisect_right(bs, start) - 1
        block_start, block_end = bs[k], be[k]
        if block_start == start and block_end == end:
            del bs[k], be[k]
        elif block_start == start:
            bs[k] = end
        elif block_end == end:
            be[k] = start
        else:
            be[k] = start
            bs.insert(k + 1, end)
            be.insert(k + 1, block_end)

    def intervals(self) -> list[tuple[int, int, Owner]]:
        return list(zip(self.starts, self.ends, self.owners))

    def copy(self) -> "PortTimeline":
        other = PortTimeline(self.link, self.horizon)
        other.starts = self.starts[:]
        other.ends = self.ends[:]
        other.owners = self.owners[:]
        other.reserved = self.reserved
        other.busy_starts = self.busy_starts[:]
        other.busy_ends = self.busy_ends[:]
        return other

    def __len__(self) -> int:
        return len(self.starts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PortTimeline):
            return NotImplemented
        return (
            self.link == other.link
            and self.horizon == other.horizon
            and self.starts == other.starts
            and self.ends == other.ends
            and self.owners == other.owners
        )

    def __repr__(self) -> str:
        return f"PortTimeline(link={self.link}, {len(self)} slots, {self.reserved}/{self.horizon})"


@dataclass(frozen=True)
class StreamSchedule:
    """Route, sub-cycle offset and per-frame, per-hop transmission starts."""

    stream: int
    route: Route
    offset: int
    starts: tuple[tuple[int, ...], ...]  # starts[frame][hop]
    tx: tuple[int, ...]  # transmission ticks per hop


def hop_delays(graph: NetworkGraph, route: Route, frame_size: int) -> list[tuple[int, int]]:
    """Per hop: (transmission ticks, delay from end of transmission until eligible downstream).

    The last entry's delay is propagation only; it yields the delivery time.
    """
    links = graph.links
    last = len(route.links) - 1
    out = []
    for i, lid in enumerate(route.links):
        link = links[lid]
        post = link.propagation + (link.processing if i < last else 0)
        out.append((transmission_ticks(frame_size, link.rate), post))
    return out


def frame_arrivals(graph: NetworkGraph, schedule: StreamSchedule, frame_size: int,
                   period: int) -> list[list[int]]:
    """Tick at which each frame becomes eligible at each hop (release at hop 0)."""
    delays = hop_delays(graph, schedule.route, frame_size)
    out = []
    for j, starts in enumerate(schedule.starts):
        row = [j * period + schedule.offset]
        for i in range(1, len(starts)):
            tx, post = delays[i - 1]
            row.append(starts[i - 1] + tx + post)
        out.append(row)
    return out


class ScheduleState:
    """Admitted streams, their schedules, and the derived port timelines."""

    def __init__(
        self,
        graph: NetworkGraph,
        hyper_period: int = DEFAULT_HYPER_PERIOD,
        buffer_cap: Optional[int] = None,
        max_hyper_period: int = DEFAULT_MAX_HYPER_PERIOD,
    ) -> None:
        if hyper_period <= 0:
            raise ValueError("hyper period must be positive")
        self.graph = graph
        self.hyper_period = hyper_period
        self.max_hyper_period = max(max_hyper_period, hyper_period)
        self.buffer_cap = buffer_cap
        self.sub_cycle: Optional[int] = None
        self.streams: dict[int, Stream] = {}
        self.schedules: dict[int, StreamSchedule] = {}
        self.timelines = [PortTimeline(link.id, hyper_period) for link in graph.links]
        self.attempts = 0  # place() calls, for complexity checks

    # -- bookkeeping -----------------------------------------------------

    def empty_like(self) -> "ScheduleState":
        return ScheduleState(self.graph, self.hyper_period, self.buffer_cap, self.max_hyper_period)

    def copy(self) -> "ScheduleState":
        other = self.empty_like()
        other.sub_cycle = self.sub_cycle
        other.streams = dict(self.streams)
        other.schedules = dict(self.schedules)
        other.timelines = [t.copy() for t in self.timelines]
        return other

    def accepts_period(self, period: int) -> bool:
        return math.lcm(self.hyper_period, period) <= self.max_hyper_period

    def prepare(self, periods: Iterable[int]) -> None:
        """Fix hyper period and sub-cycle for a planning run over the known periods."""
        periods = [p for p in periods if self.accepts_period(p)]
        known = periods + [s.period for s in self.streams.values()]
        if periods:
            self.extend_horizon(hyper_period([self.hyper_period] + periods))
        self.sub_cycle = sub_cycle(known) if known else None

    def extend_horizon(self, new_h: int) -> None:
        """Grow the hyper period to a multiple of the current one, repeating schedules."""
        h = self.hyper_period
        if new_h == h:
            return
        if new_h % h or new_h > self.max_hyper_period:
            raise ValueError(f"cannot extend hyper period {h} to {new_h}")
        old = self.schedules
        self.hyper_period = new_h
        self.schedules = {}
        self.timelines = [PortTimeline(link.id, new_h) for link in self.graph.links]
        for sid, sched in old.items():
            n = len(sched.starts)
            starts = tuple(
                tuple(t + (j // n) * h for t in sched.starts[j % n]) for j in range(n * new_h // h)
            )
            self.admit(self.streams[sid], StreamSchedule(sid, sched.route, sched.offset, starts, sched.tx))

    def offset_step(self, period: int) -> int:
        if self.sub_cycle is not None:
            return math.gcd(self.sub_cycle, period)
        return reduce(math.gcd, (s.period for s in self.streams.values()), period)

    def admit(self, stream: Stream, schedule: StreamSchedule, check: bool = True) -> None:
        """Record a schedule and reserve all of its slots."""
        if stream.id in self.schedules:
            raise ValueError(f"stream {stream.id} already admitted")
        arrivals = frame_arrivals(self.graph, schedule, stream.frame_size, stream.period)
        for j, starts in enumerate(schedule.starts):
            for i, (lid, t) in enumerate(zip(schedule.route.links, starts)):
                self.timelines[lid].reserve(t, t + schedule.tx[i], (stream.id, j, arrivals[j][i]), check)
        self.streams[stream.id] = stream
        self.schedules[stream.id] = schedule

    def expected_intervals(self) -> list[list[tuple[int, int, Owner]]]:
        """Per-link ``PortTimeline.intervals()`` implied by the stored schedules."""
        out: list[list[tuple[int, int, Owner]]] = [[] for _ in self.graph.links]
        for sid, sched in self.schedules.items():
            stream = self.streams[sid]
            arrivals = frame_arrivals(self.graph, sched, stream.frame_size, stream.period)
            for j, starts in enumerate(sched.starts):
                for i, (lid, t) in enumerate(zip(sched.route.links, starts)):
                    out[lid].append((t, t + sched.tx[i], (sid, j, arrivals[j][i])))
        # stable on equal starts, like insertion behind equal keys
        for slots in out:
            slots.sort(key=lambda slot: slot[0])
        return out

    def rebuild_timelines(self) -> list[PortTimeline]:
        rebuilt = [PortTimeline(link.id, self.hyper_period) for link in self.graph.links]
        for sid, sched in self.schedules.items():
            stream = self.streams[sid]
            arrivals = frame_arrivals(self.graph, sched, stream.frame_size, stream.period)
            for j, starts in enumerate(sched.starts):
                for i, (lid, t) in enumerate(zip(sched.route.links, starts)):
                    rebuilt[lid].reserve(t, t + sched.tx[i], (sid, j, arrivals[j][i]), False)
        return rebuilt

    @property
    def admitted(self) -> list[int]:
        return sorted(self.schedules)

    def __repr__(self) -> str:
        return f"ScheduleState({len(self.schedules)} streams, h={self.hyper_period}, g={self.sub_cycle})"


def _walk(timelines, hops, release, deadline):
    """ASAP with queuing along ``hops`` = [(lid, tx, post, slack)]; None if late."""
    starts = []
    t = release
    for lid, tx, post, slack in hops:
        tl = timelines[lid]
        s, e = tl.busy_starts, tl.busy_ends
        i = bisect_right(s, t)
        if i and e[i - 1] > t:
            t = e[i - 1]
        n = len(s)
        while i < n and s[i] < t + tx:
            t = e[i]
            i += 1
        # slack: minimal ticks from this start until delivery
        if t + slack > deadline:
            return None
        starts.append(t)
        t += tx + post
    return starts, t


def _hops(graph: NetworkGraph, route: Route, frame_size: int) -> list[tuple[int, int, int, int]]:
    delays = hop_delays(graph, route, frame_size)
    slack = 0
    rows = []
    for lid, (tx, post) in zip(reversed(route.links), reversed(delays)):
        slack += tx + post
        rows.append((lid, tx, post, slack))
    rows.reverse()
    return rows


def asap_forward(state: ScheduleState, stream: Stream, route: Route, release: int) -> Optional[tuple[int, ...]]:
    """Per-hop transmission starts of one frame released at ``release``, or None if it misses its deadline."""
    if not 0 <= release < state.hyper_period:
        raise ValueError("release outside the hyper period")
    deadline = (release // stream.period + 1) * stream.period
    walked = _walk(state.timelines, _hops(state.graph, route, stream.frame_size), release, deadline)
    return None if walked is None else tuple(walked[0])


def delivery_time(state: ScheduleState, stream: Stream, route: Route, starts: Sequence[int]) -> int:
    tx, post = hop_delays(state.graph, route, stream.frame_size)[-1]
    return starts[-1] + tx + post


def _buffer_ok(state: ScheduleState, route: Route, frames, cap: int) -> bool:
    for i, lid in enumerate(route.links):
        events = _queue_events(state.timelines[lid])
        for arrivals, starts in frames:
            if arrivals[i] < starts[i]:
                events.append((arrivals[i], 1))
                events.append((starts[i], -1))
        if _max_queue(events) > cap:
            return False
    return True


def _max_queue(events: list[tuple[int, int]]) -> int:
    count = best = 0
    for _, delta in sorted(events):
        count += delta
        best = max(best, count)
    return best


def place(
    state: ScheduleState,
    stream: Stream,
    route: Route,
    offsets: Optional[Iterable[int]] = None,
    commit: bool = True,
) -> Optional[StreamSchedule]:
    """Place all frames of ``stream`` on ``route`` at the best sub-cycle offset.

    Every candidate offset is simulated against the current timelines; its
    score is the largest delay of any frame measured from that frame's
    release. The lowest score wins, ties to the smaller offset. Nothing is
    reserved unless a feasible offset exists.
    """
    state.attempts += 1
    h = state.hyper_period
    period = stream.period
    if h % period or stream.id in state.schedules:
        return None
    hops = _hops(state.graph, route, stream.frame_size)
    n_frames = h // period
    timelines = state.timelines
    for lid, tx, _, _ in hops:
        if timelines[lid].reserved + n_frames * tx > h:
            return None
    if offsets is None:
        offsets = range(0, period, state.offset_step(period))

    best_score = None
    best = None
    for offset in offsets:
        frames = []
        worst = 0
        for j in range(n_frames):
            release = j * period + offset
            deadline = (j + 1) * period
            if best_score is not None:
                # a delay equal to the incumbent cannot win the tie
                deadline = min(deadline, release + best_score - 1)
            walked = _walk(timelines, hops, release, deadline)
            if walked is None:
                break
            starts, delivered = walked
            worst = max(worst, delivered - release)
            frames.append(starts)
        else:
            if state.buffer_cap is not None:
                fr = []
                for j, starts in enumerate(frames):
                    arr = [j * period + offset]
                    for i in range(1, len(starts)):
                        arr.append(starts[i - 1] + hops[i - 1][1] + hops[i - 1][2])
                    fr.append((arr, starts))
                if not _buffer_ok(state, route, fr, state.buffer_cap):
                    continue
            best_score = worst
            best = (offset, frames)
    if best is None:
        return None
    offset, frames = best
    schedule = StreamSchedule(
        stream.id, route, offset, tuple(tuple(f) for f in frames), tuple(tx for _, tx, _, _ in hops)
    )
    if commit:
        state.admit(stream, schedule, check=False)
    return schedule


def release(state: ScheduleState, stream_id: int) -> None:
    """Remove an admitted stream and all of its reservations."""
    if stream_id not in state.schedules:
        raise KeyError(f"stream {stream_id} is not admitted")
    schedule = state.schedules.pop(stream_id)
    del state.streams[stream_id]
    for starts in schedule.starts:
        for i, lid in enumerate(schedule.route.links):
            state.timelines[lid].cancel(starts[i], stream_id)


def utilization(state: ScheduleState, link: int) -> Fraction:
    return Fraction(state.timelines[link].reserved, state.hyper_period)


def buffer_occupancy(state: ScheduleState, link: int) -> int:
    """Most frames simultaneously waiting (arrived, not yet transmitting) at an egress port."""
    return _max_queue(_queue_events(state.timelines[link]))


def _queue_events(tl: PortTimeline) -> list[tuple[int, int]]:
    events = []
    for (_, _, arrival), start in zip(tl.owners, tl.starts):
        if arrival < start:
            events.append((arrival, 1))
            events.append((start, -1))
    return events
