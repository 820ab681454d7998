import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

import ttplan.schedulers as sched_mod
from ttplan.model import RequestBatch, Stream
from ttplan.placement import ScheduleState, place
from ttplan.routing import RouteCache, shortest_route
from ttplan.schedulers import (
    AlphaError,
    celf_plan,
    crf_score,
    firstfit_plan,
    h2s_plan,
    offensive_plan,
    resolve_alpha,
    ssf_score,
    total_throughput,
)
from ttplan.topology import FRAME_SIZES, PERIODS, TopologySpec, generate, generate_streams
from ttplan.verify import validate

from conftest import line_network, ring_network as ring


def plan(planner, state, adds, cache, remove=(), **kw):
    old = [state.streams[sid] for sid in state.schedules]
    return planner(state, RequestBatch(add=adds, remove=list(remove)), cache.candidates(list(adds) + old), **kw)


# -- scores -----------------------------------------------------------------

stream_st = st.builds(
    Stream,
    id=st.integers(0, 9_999),
    src=st.just(0),
    dst=st.just(1),
    frame_size=st.sampled_from(FRAME_SIZES),
    period=st.sampled_from(PERIODS),
)


@settings(max_examples=10_000)
@given(stream_st, stream_st)
def test_ssf_ordering(a, b):
    sa, sb = ssf_score(a), ssf_score(b)
    if a.period != b.period:
        assert (sa < sb) == (a.period < b.period)
    elif a.frame_size != b.frame_size:
        assert (sa < sb) == (a.frame_size > b.frame_size)
    elif a.id != b.id:
        assert (sa < sb) == (a.id < b.id)


def test_ssf_is_exact():
    s = Stream(7, 0, 1, 125, 250)
    assert ssf_score(s) == Fraction(250 * 10_000) + Fraction(10_000, 125) + Fraction(7, 10_000)


def test_crf_examples():
    g, (s, d) = line_network(1)
    state = ScheduleState(g)
    stream = Stream(3, s, d, 125, 500)
    route = shortest_route(g, s, d)
    assert crf_score(state, stream, route) == Fraction(10_000, 500) + 1 + Fraction(3, 10_000)
    state.timelines[route.links[0]].reserve(0, 1000, (9, 0, 0))
    # utilization sum 1/2 -> 1 / (1 + 1/2)
    assert crf_score(state, stream, route) == Fraction(10_000, 500) + Fraction(2, 3) + Fraction(3, 10_000)


def test_alpha_bounds():
    g, (s, d) = line_network(1)
    streams = [Stream(0, s, d, 125, 250)]
    cands = RouteCache(g).candidates(streams)
    assert resolve_alpha(None, 2000, streams, cands) == 10_000
    with pytest.raises(AlphaError):
        resolve_alpha(3_000, 2000, streams, cands)  # not above 2h
    with pytest.raises(AlphaError):
        resolve_alpha(10_000, 2000, [Stream(20_000, s, d, 125, 250)], {20_000: cands[0]})
    assert resolve_alpha(None, 2000, [Stream(20_000, s, d, 125, 250)], {20_000: cands[0]}) == 100_000
    assert resolve_alpha(None, 40_000, streams, cands) == 100_000


def test_explicit_bad_alpha_raises_from_planner():
    g, (s, d) = line_network(1)
    state = ScheduleState(g)
    with pytest.raises(AlphaError):
        plan(h2s_plan, state, [Stream(0, s, d, 125, 250)], RouteCache(g), alpha=100)
    with pytest.raises(AlphaError):
        plan(celf_plan, state, [Stream(0, s, d, 125, 250)], RouteCache(g), alpha=100)


# -- H2S --------------------------------------------------------------------


def test_h2s_short_period_first_when_contending():
    g, (s, d) = line_network(1, rate=100)
    # each frame fills 120 of 250 ticks on a 100 bit/tick link; two cannot share a 250 window
    longer = Stream(0, s, d, 1500, 500)
    shorter = Stream(1, s, d, 1500, 250)
    hog = Stream(2, s, d, 1500, 500)
    res = plan(h2s_plan, ScheduleState(g), [longer, hog, shorter], RouteCache(g))
    assert 1 in res.admitted
    assert res.rejected  # not everything fits
    assert validate(res.state) == []


def test_h2s_uses_long_side_of_ring():
    g, hosts = ring(4)
    state = ScheduleState(g)
    route_short = shortest_route(g, hosts[0], hosts[1])
    state.timelines[route_short.links[1]].reserve(0, 2000, (99, 0, 0))
    cache = RouteCache(g, 2)
    res = plan(h2s_plan, state, [Stream(0, hosts[0], hosts[1], 125, 500)], cache)
    assert res.admitted == [0]
    assert res.state.schedules[0].route.hop_count == 5


def test_empty_batch_is_noop():
    g, (s, d) = line_network(1)
    state = ScheduleState(g)
    place(state, Stream(0, s, d, 125, 250), shortest_route(g, s, d))
    before = state.copy()
    for planner in (h2s_plan, celf_plan, firstfit_plan):
        res = plan(planner, state, [], RouteCache(g))
        assert res.admitted == [] and res.rejected == []
        assert res.state.schedules == before.schedules and res.state.timelines == before.timelines


def test_missing_candidates_raise():
    g, (s, d) = line_network(1)
    for planner in (h2s_plan, celf_plan, firstfit_plan):
        with pytest.raises(KeyError):
            planner(ScheduleState(g), RequestBatch(add=[Stream(0, s, d, 125, 250)]), {})


def test_h2s_attempts_bounded(monkeypatch):
    g = generate(TopologySpec("ring", n_bridges=6))
    streams = generate_streams(g, 300, 5)
    calls = []
    real = sched_mod.place

    def counting(*args, **kwargs):
        calls.append(1)
        return real(*args, **kwargs)

    monkeypatch.setattr(sched_mod, "place", counting)
    cache = RouteCache(g, 3)
    plan(h2s_plan, ScheduleState(g), streams, cache)
    assert len(calls) <= 300 * 3


# -- CELF -------------------------------------------------------------------


def test_celf_first_pick_is_global_max_on_empty_network():
    g = generate(TopologySpec("ring", n_bridges=5))
    streams = generate_streams(g, 20, 2)
    cache = RouteCache(g, 2)
    trace = []
    state = ScheduleState(g)
    celf_plan(state, RequestBatch(add=streams), cache.candidates(streams), trace=trace)
    empty = ScheduleState(g)
    best = max((crf_score(empty, s, r), -s.id, -r.hop_count) for s in streams for r in cache.routes(s.src, s.dst))
    first_recheck = trace[sum(len(cache.routes(s.src, s.dst)) for s in streams)]
    assert first_recheck[1] == best[0]


def test_celf_scores_never_increase():
    for seed in range(5):
        g = generate(TopologySpec("random", n_bridges=8, seed=seed))
        streams = generate_streams(g, 150, seed)
        trace = []
        res = plan(celf_plan, ScheduleState(g), streams, RouteCache(g, 3), trace=trace)
        last = {}
        for pair, score in trace:
            assert score <= last.get(pair, score)
            last[pair] = score
        assert validate(res.state) == []


@settings(max_examples=40)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_celf_lazy_matches_eager(seed, k):
    rnd = random.Random(seed)
    g = generate(TopologySpec(rnd.choice(["ring", "random", "tree"]), n_bridges=rnd.randint(3, 8), seed=seed))
    streams = generate_streams(g, rnd.randint(1, 60), seed)
    cache = RouteCache(g, k)
    lazy = plan(celf_plan, ScheduleState(g), streams, cache)
    eager = plan(celf_plan, ScheduleState(g), streams, cache, lazy=False)
    assert lazy.admitted == eager.admitted
    assert lazy.state.schedules == eager.state.schedules


def test_celf_defers_pair_on_loaded_detour(monkeypatch):
    g, (h0, h1, h2, h3) = ring(4, rate=100)
    hz, hw = g.add_host(), g.add_host()
    g.connect(hz, 0, rate=100)
    g.connect(hw, 1, rate=100)
    cache = RouteCache(g, 2)
    state = ScheduleState(g)
    # saturate the short side B0->B1 and put some load on the far side of the detour
    background = [Stream(i, hz, hw, 500, 250) for i in range(3)] + [Stream(9, h0, h3, 125, 250)]
    state = plan(h2s_plan, state, background, cache).state
    detour = Stream(30, h0, h1, 500, 250)  # larger frame: first for H2S
    local = Stream(20, h3, h2, 250, 250)

    placed = []
    real = sched_mod.place

    def recording(st_, stream, route, *args, **kwargs):
        out = real(st_, stream, route, *args, **kwargs)
        if out is not None:
            placed.append((stream.id, route.hop_count))
        return out

    monkeypatch.setattr(sched_mod, "place", recording)
    h2s = plan(h2s_plan, state.copy(), [detour, local], cache)
    assert placed == [(30, 5), (20, 3)]
    placed.clear()
    celf = plan(celf_plan, state.copy(), [detour, local], cache)
    assert placed == [(20, 3), (30, 5)]
    assert validate(h2s.state) == [] and validate(celf.state) == []


# -- FirstFit ---------------------------------------------------------------


def test_firstfit_single_stream_matches_h2s():
    g, (s, d) = line_network(2)
    a = plan(firstfit_plan, ScheduleState(g), [Stream(0, s, d, 500, 500)], RouteCache(g))
    b = plan(h2s_plan, ScheduleState(g), [Stream(0, s, d, 500, 500)], RouteCache(g))
    assert a.state.schedules == b.state.schedules


def test_firstfit_head_saturation():
    # 1500 B at 375 bit/tick is 32 ticks; eight long-period frames fill [0, 256)
    g, (s, d) = line_network(1, rate=375)
    longs = [Stream(i, s, d, 1500, 2000) for i in range(8)]
    short = Stream(8, s, d, 125, 250)
    ff = plan(firstfit_plan, ScheduleState(g), longs + [short], RouteCache(g))
    assert ff.rejected == [8]
    h2s = plan(h2s_plan, ScheduleState(g), longs + [short], RouteCache(g))
    assert h2s.rejected == []
    assert validate(ff.state) == [] and validate(h2s.state) == []


# -- shared properties ------------------------------------------------------


@pytest.mark.parametrize("planner", [h2s_plan, celf_plan, firstfit_plan])
def test_defensive_keeps_old_reservations(planner):
    g = generate(TopologySpec("random", n_bridges=10, seed=4))
    streams = generate_streams(g, 400, 4)
    cache = RouteCache(g, 4)
    state = plan(planner, ScheduleState(g), streams[:200], cache).state
    removed = state.admitted[::3]
    before = {sid: sc for sid, sc in state.schedules.items() if sid not in removed}
    res = plan(planner, state, streams[200:], cache, remove=removed)
    for sid, sc in before.items():
        assert res.state.schedules[sid] == sc
    assert not set(removed) & set(res.state.schedules)
    assert sorted(res.admitted + res.rejected) == sorted(s.id for s in streams[200:])
    assert validate(res.state) == []


@pytest.mark.parametrize("planner", [h2s_plan, celf_plan, firstfit_plan])
def test_planners_deterministic(planner):
    g = generate(TopologySpec("grid", rows=3, cols=3))
    streams = generate_streams(g, 200, 9)
    a = plan(planner, ScheduleState(g), streams, RouteCache(g))
    b = plan(planner, ScheduleState(g), streams, RouteCache(g))
    assert a.admitted == b.admitted and a.state.schedules == b.state.schedules


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.sampled_from(["h2s", "celf", "ff", "offensive-h2s", "offensive-celf"]))
def test_planner_output_validates(seed, algo):
    rnd = random.Random(seed)
    g = generate(TopologySpec(rnd.choice(["ring", "random", "grid"]), n_bridges=6, rows=2, cols=3, seed=seed))
    streams = generate_streams(g, 150, seed)
    cache = RouteCache(g, 2)
    state = ScheduleState(g)
    for start in range(0, 150, 50):
        old = state.admitted
        removed = [sid for sid in old if rnd.random() < 0.3]
        batch = RequestBatch(add=streams[start:start + 50], remove=removed)
        cands = cache.candidates(list(batch.add) + [state.streams[sid] for sid in old])
        if algo.startswith("offensive"):
            res = offensive_plan(state, batch, cands, inner=algo.split("-")[1])
        else:
            res = sched_mod.PLANNERS[algo](state, batch, cands)
        state = res.state
        assert validate(state) == []


# -- offensive planning -----------------------------------------------------


def test_offensive_not_triggered_without_rejections():
    g, (s, d) = line_network(2)
    cache = RouteCache(g)
    state = plan(h2s_plan, ScheduleState(g), [Stream(0, s, d, 125, 250)], cache).state
    batch = RequestBatch(add=[Stream(1, s, d, 125, 500)])
    res = offensive_plan(state, batch, cache.candidates([state.streams[0], batch.add[0]]))
    assert not res.offensive and res.rejected == []
    assert set(state.schedules) == {0}  # caller's state untouched


def small_ring():
    g, hosts = ring(4, rate=100)
    return g, hosts, RouteCache(g, 2)


def test_offensive_wins_after_fragmentation():
    g, hosts, cache = small_ring()
    h0, h1, h2, h3 = hosts
    state = ScheduleState(g)
    first = [Stream(0, h0, h1, 1000, 1000), Stream(1, h1, h0, 250, 500), Stream(2, h1, h0, 1000, 250)]
    state = plan(h2s_plan, state, first, cache).state
    second = [Stream(3, h3, h1, 250, 250), Stream(4, h0, h2, 1000, 500), Stream(5, h3, h1, 500, 250)]
    state = plan(h2s_plan, state, second, cache).state
    batch = RequestBatch(add=[Stream(6, h0, h2, 250, 250)], remove=[3])
    cands = cache.candidates(list(batch.add) + [state.streams[sid] for sid in state.schedules])
    defensive = h2s_plan(state.copy(), batch, cands)
    assert defensive.rejected == [6]
    res = offensive_plan(state, batch, cands)
    assert res.offensive and res.rejected == []
    assert set(res.state.schedules) == set(state.schedules) - {3} | {6}
    assert total_throughput(res.state) > total_throughput(defensive.state)
    assert validate(res.state) == []


def test_offensive_discarded_when_old_stream_lost():
    g, (h3, h4, h5) = ring(3, rate=100)
    cache = RouteCache(g, 2)
    state = ScheduleState(g)
    state = plan(h2s_plan, state, [Stream(0, h4, h3, 1500, 500), Stream(1, h3, h4, 500, 250),
                                   Stream(2, h5, h4, 250, 250)], cache).state
    state = plan(h2s_plan, state, [Stream(3, h5, h3, 500, 250)], cache).state
    old = [state.streams[sid] for sid in sorted(state.schedules)]
    assert len(old) == 4
    # a from-scratch run of the same streams loses one of them
    fresh = h2s_plan(state.empty_like(), RequestBatch(add=old), cache.candidates(old),
                     known_periods=[s.period for s in old])
    assert fresh.rejected
    hopeless = Stream(9, h3, h4, 1500, 250)
    batch = RequestBatch(add=[hopeless])
    cands = cache.candidates(old + [hopeless])
    res = offensive_plan(state, batch, cands)
    assert not res.offensive
    assert res.rejected == [9]
    assert all(res.state.schedules[s.id] == state.schedules[s.id] for s in old)
