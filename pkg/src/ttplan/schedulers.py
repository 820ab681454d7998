"""Plan implementations: H2S, CELF, FirstFit and offensive re-planning.

All planners mutate the given ``ScheduleState`` in place and return a
``PlanResult`` whose ``admitted``/``rejected`` partition the batch's adds.
EDF lives in :mod:`ttplan.edf`.
"""

from __future__ import annotations

import heapq
from fractions import Fraction
from typing import Callable, Iterable, Optional

from .model import MAX_FRAME_SIZE, PlanResult, RequestBatch, Stream, throughput
from .placement import ScheduleState, place, release
from .routing import CandidateSet, Route

DEFAULT_ALPHA = 10_000

Candidates = dict[int, CandidateSet]


class AlphaError(ValueError):
    pass


def alpha_violations(alpha: int, hyper_period: int, max_id: int, max_route_len: int,
                     max_frame: int = MAX_FRAME_SIZE) -> list[str]:
    problems = []
    if alpha <= 2 * hyper_period:
        problems.append(f"alpha={alpha} must exceed twice the hyper period ({2 * hyper_period})")
    if alpha <= max_frame:
        problems.append(f"alpha={alpha} must exceed the largest frame size ({max_frame})")
    if alpha <= max_id:
        problems.append(f"alpha={alpha} must exceed the largest stream id ({max_id})")
    if alpha < max_route_len ** 2:
        problems.append(f"alpha={alpha} must be at least the squared longest route ({max_route_len ** 2})")
    return problems


def resolve_alpha(alpha: Optional[int], hyper_period: int, streams: Iterable[Stream],
                  candidates: Candidates) -> int:
    """Check an explicit alpha, or pick the default (scaled by 10 until valid)."""
    streams = list(streams)
    max_id = max((s.id for s in streams), default=0)
    max_frame = max((s.frame_size for s in streams), default=0)
    max_len = max((r.hop_count for s in streams for r in candidates[s.id].routes), default=0)
    if alpha is not None:
        problems = alpha_violations(alpha, hyper_period, max_id, max_len, max_frame)
        if problems:
            raise AlphaError("; ".join(problems))
        return alpha
    alpha = DEFAULT_ALPHA
    while alpha_violations(alpha, hyper_period, max_id, max_len, max_frame):
        alpha *= 10
    return alpha


def ssf_score(stream: Stream, alpha: int = DEFAULT_ALPHA) -> Fraction:
    """Stream sorting score; smaller is scheduled first."""
    return alpha * stream.period + Fraction(alpha, stream.frame_size) + Fraction(stream.id, alpha)


def _ssf_key(stream: Stream, alpha: int) -> tuple[float, Fraction, int]:
    # the float is correctly rounded, hence monotone; the exact score breaks float ties
    score = ssf_score(stream, alpha)
    return float(score), score, stream.id


def route_sort_key(route: Route) -> tuple[int, tuple[int, ...]]:
    return route.sort_key()


def route_load(state: ScheduleState, route: Route) -> int:
    """Reserved ticks summed over the route's links (utilization sum times h)."""
    timelines = state.timelines
    return sum(timelines[lid].reserved for lid in route.links)


def crf_score(state: ScheduleState, stream: Stream, route: Route, alpha: int = DEFAULT_ALPHA) -> Fraction:
    """CELF rating of a stream/route pair; larger is better.

    ``1 / (1 + sum of utilizations)`` is evaluated as ``h / (h + reserved ticks)``.
    """
    h = state.hyper_period
    return (
        Fraction(alpha, stream.period)
        + Fraction(h, h + route_load(state, route))
        + Fraction(stream.id, alpha)
    )


class _PairKey:
    """Heap key of a stream/route pair: best CRF first, then stream id, hop count, links.

    The score is the exact value of :func:`crf_score`, kept as an unreduced
    numerator and denominator so comparisons are plain integer cross products.
    """

    __slots__ = ("num", "den", "sid", "tie")

    def __init__(self, num: int, den: int, sid: int, route: Route) -> None:
        self.num = num
        self.den = den
        self.sid = sid
        self.tie = (sid, route.hop_count, route.links)

    def __lt__(self, other: "_PairKey") -> bool:
        diff = self.num * other.den - other.num * self.den
        if diff:
            return diff > 0
        return self.tie < other.tie

    def __gt__(self, other: "_PairKey") -> bool:
        return other < self

    @property
    def links(self) -> tuple[int, ...]:
        return self.tie[2]

    @property
    def score(self) -> Fraction:
        return Fraction(self.num, self.den)


def _pair_key(h: int, stream: Stream, route: Route, load: int, alpha: int) -> _PairKey:
    # alpha/p + h/(h+R) + id/alpha over the common denominator p*(h+R)*alpha
    p, sid, hr = stream.period, stream.id, h + load
    return _PairKey(alpha * alpha * hr + h * p * alpha + sid * p * hr, p * hr * alpha, sid, route)


def _begin(state: ScheduleState, batch: RequestBatch, candidates: Candidates,
           known_periods: Iterable[int] = ()) -> tuple[list[Stream], list[int]]:
    """Apply removals and validate the adds. Returns (plannable streams, pre-rejected ids)."""
    missing = [sid for sid in batch.remove if sid not in state.schedules]
    if missing:
        raise KeyError(f"cannot remove streams that are not admitted: {missing}")
    ids = [s.id for s in batch.add]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate stream ids in batch")
    clash = [sid for sid in ids if sid in state.schedules]
    if clash:
        raise ValueError(f"streams already admitted: {clash}")
    absent = [sid for sid in ids if sid not in candidates or not candidates[sid].routes]
    if absent:
        raise KeyError(f"no candidate routes for streams {absent}")
    for sid in batch.remove:
        release(state, sid)
    plannable = [s for s in batch.add if state.accepts_period(s.period)]
    rejected = [s.id for s in batch.add if not state.accepts_period(s.period)]
    state.prepare([s.period for s in plannable] + list(known_periods))
    return plannable, rejected


def _result(batch: RequestBatch, state: ScheduleState) -> PlanResult:
    admitted = [s.id for s in batch.add if s.id in state.schedules]
    rejected = [s.id for s in batch.add if s.id not in state.schedules]
    return PlanResult(admitted, rejected, state)


def h2s_plan(state: ScheduleState, batch: RequestBatch, candidates: Candidates,
             alpha: Optional[int] = None, known_periods: Iterable[int] = ()) -> PlanResult:
    """Hierarchical heuristic: streams by SSF, then each stream's routes by hop count."""
    streams, _ = _begin(state, batch, candidates, known_periods)
    alpha = resolve_alpha(alpha, state.hyper_period, streams, candidates)
    for stream in sorted(streams, key=lambda s: _ssf_key(s, alpha)):
        for route in sorted(candidates[stream.id].routes, key=route_sort_key):
            if place(state, stream, route) is not None:
                break
    return _result(batch, state)


def celf_plan(state: ScheduleState, batch: RequestBatch, candidates: Candidates,
              alpha: Optional[int] = None, known_periods: Iterable[int] = (),
              lazy: bool = True, trace: Optional[list] = None) -> PlanResult:
    """Greedy over all stream/route pairs by CRF with lazy re-evaluation.

    Pairs are ordered by score, then stream id, hop count and links, so
    equal scores resolve deterministically. ``lazy=False`` recomputes every live pair each
    round instead; both variants pick the same pair every round.
    ``trace`` collects ``((stream, links), score)`` for every evaluation.
    """
    streams, _ = _begin(state, batch, candidates, known_periods)
    alpha = resolve_alpha(alpha, state.hyper_period, streams, candidates)
    by_id = {s.id: s for s in streams}

    def key(stream: Stream, route: Route) -> _PairKey:
        pair = _pair_key(state.hyper_period, stream, route, route_load(state, route), alpha)
        if trace is not None:
            trace.append(((stream.id, route.links), pair.score))
        return pair

    pairs = [(s, r) for s in streams for r in candidates[s.id].routes]
    routes = {(s.id, r.links): r for s, r in pairs}
    if lazy:
        _celf_lazy(state, by_id, routes, [key(s, r) for s, r in pairs], key)
    else:
        _celf_eager(state, by_id, routes, pairs, key)
    return _result(batch, state)


def _heap_entry(pair: _PairKey) -> tuple[float, _PairKey]:
    # int / int is correctly rounded, hence monotone in the exact score; the
    # exact key only decides between equal floats
    return -(pair.num / pair.den), pair


def _celf_lazy(state, by_id, routes, keys, key: Callable) -> None:
    heap = [_heap_entry(k) for k in keys]
    heapq.heapify(heap)
    admitted = state.schedules
    while heap:
        _, top = heapq.heappop(heap)
        sid, links = top.sid, top.links
        if sid in admitted:
            continue
        stream, route = by_id[sid], routes[(sid, links)]
        fresh = _heap_entry(key(stream, route))
        if heap and fresh > heap[0]:
            heapq.heappush(heap, fresh)
            continue
        place(state, stream, route)


def _celf_eager(state, by_id, routes, pairs, key: Callable) -> None:
    live = {(s.id, r.links) for s, r in pairs}
    cache: dict[tuple, _PairKey] = {}
    loads: dict[tuple, int] = {}
    while live:
        # every live pair's score is current: recompute whenever its route load moved
        for pair in live:
            load = route_load(state, routes[pair])
            if loads.get(pair) != load:
                loads[pair] = load
                cache[pair] = key(by_id[pair[0]], routes[pair])
        best = min(live, key=cache.__getitem__)
        sid = best[0]
        if place(state, by_id[sid], routes[best]) is not None:
            live = {p for p in live if p[0] != sid}
        else:
            live.discard(best)


def firstfit_plan(state: ScheduleState, batch: RequestBatch, candidates: Candidates,
                  known_periods: Iterable[int] = ()) -> PlanResult:
    """Batch order, shortest candidate route only, pure ASAP (offset 0)."""
    streams, _ = _begin(state, batch, candidates, known_periods)
    for stream in streams:
        shortest = min(candidates[stream.id].routes, key=route_sort_key)
        place(state, stream, shortest, offsets=(0,))
    return _result(batch, state)


PLANNERS = {"h2s": h2s_plan, "celf": celf_plan, "ff": firstfit_plan}


def total_throughput(state: ScheduleState) -> Fraction:
    return sum((throughput(s) for s in state.streams.values()), Fraction(0))


def offensive_plan(state: ScheduleState, batch: RequestBatch, candidates: Candidates,
                   inner: str = "h2s", **kwargs) -> PlanResult:
    """Defensive run first; on any rejection retry from an empty network.

    The from-scratch run places the surviving old streams first and is
    discarded unless it re-admits all of them. The higher aggregated
    throughput wins, ties keep the defensive plan. ``state`` is left
    untouched; use ``result.state``.
    """
    plan = PLANNERS[inner]
    removed = set(batch.remove)
    old = [s for sid, s in sorted(state.streams.items()) if sid not in removed]
    known = [s.period for s in old] + [s.period for s in batch.add]

    defensive = plan(state.copy(), batch, candidates, **kwargs)
    if not defensive.rejected or not old:
        # without old streams the from-scratch run repeats the defensive one exactly
        return defensive

    fresh = state.empty_like()
    old_candidates = {
        s.id: candidates.get(s.id) or CandidateSet(s.id, (state.schedules[s.id].route,)) for s in old
    }
    readmit = plan(fresh, RequestBatch(add=old), old_candidates, known_periods=known, **kwargs)
    if readmit.rejected:
        return defensive
    offensive = plan(fresh, RequestBatch(add=list(batch.add)), candidates, known_periods=known, **kwargs)
    if total_throughput(fresh) > total_throughput(defensive.state):
        offensive.offensive = True
        return offensive
    return defensive
