"""Candidate routes: repeated Dijkstra runs with penalised edge costs."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import partial
from typing import Iterable, Optional, Sequence

import numpy as np
from numba import njit

from .model import NetworkGraph, Stream

DEFAULT_K = 4
MAX_DUPLICATES = 10


class NoRouteError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Route:
    """Sequence of directed links (egress ports) from source to destination."""

    links: tuple[int, ...]

    @property
    def hop_count(self) -> int:
        return len(self.links)

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return (len(self.links), self.links)

    def __len__(self) -> int:
        return len(self.links)


@dataclass(frozen=True)
class CandidateSet:
    stream: int
    routes: tuple[Route, ...]


def is_valid_route(graph: NetworkGraph, route: Route, src: int, dst: int) -> bool:
    """Structural check: connected, simple, host endpoints only at the ends."""
    if not route.links:
        return False
    node = src
    seen = {src}
    for i, lid in enumerate(route.links):
        if not 0 <= lid < len(graph.links):
            return False
        link = graph.links[lid]
        if link.src != node:
            return False
        node = link.dst
        if node in seen:
            return False
        seen.add(node)
        if i < len(route.links) - 1 and graph.is_host(node):
            return False
    return node == dst


def _distances_to(graph: NetworkGraph, src: int, dst: int, cost: Sequence[int]) -> dict[int, int]:
    """Reverse Dijkstra from ``dst``; stops once ``src`` is settled.

    Only bridges forward, so the only host allowed besides ``dst`` is ``src``.
    """
    dist = {}
    heap = [(0, dst)]
    best = {dst: 0}
    nodes = graph.nodes
    links = graph.links
    while heap:
        d, u = heapq.heappop(heap)
        if u in dist:
            continue
        dist[u] = d
        if u == src:
            break
        for lid in graph.in_links[u]:
            v = links[lid].src
            if v in dist or (v != src and nodes[v].is_host):
                continue
            nd = d + cost[lid]
            if nd < best.get(v, nd + 1):
                best[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _cheapest_route(graph: NetworkGraph, src: int, dst: int, cost: Sequence[int]) -> Route:
    """Minimum-cost route; among ties the lexicographically smallest link sequence."""
    dist = _distances_to(graph, src, dst, cost)
    if src not in dist:
        raise NoRouteError(f"no route from {src} to {dst}")
    links = graph.links
    path = []
    node = src
    while node != dst:
        here = dist[node]
        step = None
        for lid in graph.out_links[node]:
            v = links[lid].dst
            dv = dist.get(v)
            if dv is not None and dv + cost[lid] == here and (step is None or lid < step):
                step = lid
        path.append(step)
        node = links[step].dst
    return Route(tuple(path))


class _UnitCost:
    def __getitem__(self, _):
        return 1


@njit(cache=True)
def _route_kernel(in_ptr, in_lid, in_src, out_ptr, out_lid, out_dst, relay, src, dst, cost, path):
    """Compiled twin of ``_cheapest_route``: writes the link ids into ``path``, returns the hop count or -1."""
    n = in_ptr.shape[0] - 1
    inf = np.iinfo(np.int64).max
    dist = np.full(n, inf, np.int64)
    settled = np.zeros(n, np.bool_)
    heap_d = np.empty(in_lid.shape[0] + 1, np.int64)
    heap_v = np.empty(in_lid.shape[0] + 1, np.int64)
    size = 1
    heap_d[0] = 0
    heap_v[0] = dst
    dist[dst] = 0
    while size:
        d = heap_d[0]
        u = heap_v[0]
        size -= 1
        heap_d[0] = heap_d[size]
        heap_v[0] = heap_v[size]
        i = 0
        while True:
            c = 2 * i + 1
            if c >= size:
                break
            if c + 1 < size and heap_d[c + 1] < heap_d[c]:
                c += 1
            if heap_d[i] <= heap_d[c]:
                break
            heap_d[i], heap_d[c] = heap_d[c], heap_d[i]
            heap_v[i], heap_v[c] = heap_v[c], heap_v[i]
            i = c
        if settled[u]:
            continue
        settled[u] = True
        if u == src:
            break
        for e in range(in_ptr[u], in_ptr[u + 1]):
            v = in_src[e]
            if settled[v] or (v != src and not relay[v]):
                continue
            nd = d + cost[in_lid[e]]
            if nd < dist[v]:
                dist[v] = nd
                i = size
                heap_d[i] = nd
                heap_v[i] = v
                size += 1
                while i > 0:
                    p = (i - 1) >> 1
                    if heap_d[p] <= heap_d[i]:
                        break
                    heap_d[p], heap_d[i] = heap_d[i], heap_d[p]
                    heap_v[p], heap_v[i] = heap_v[i], heap_v[p]
                    i = p
    if not settled[src]:
        return -1
    node = src
    hops = 0
    while node != dst:
        here = dist[node]
        step = -1
        step_to = -1
        for e in range(out_ptr[node], out_ptr[node + 1]):
            v = out_dst[e]
            lid = out_lid[e]
            if settled[v] and dist[v] + cost[lid] == here and (step < 0 or lid < step):
                step = lid
                step_to = v
        path[hops] = step
        hops += 1
        node = step_to
    return hops


class _GraphArrays:
    """CSR adjacency of a graph for the compiled route search."""

    def __init__(self, graph: NetworkGraph) -> None:
        n = len(graph.nodes)
        self.relay = np.array([not node.is_host for node in graph.nodes], np.bool_)
        self.in_ptr, self.in_lid, self.in_src = self._csr(
            n, [[(lid, graph.links[lid].src) for lid in graph.in_links[u]] for u in range(n)])
        self.out_ptr, self.out_lid, self.out_dst = self._csr(
            n, [[(lid, graph.links[lid].dst) for lid in graph.out_links[u]] for u in range(n)])
        self.path = np.empty(n, np.int64)

    @staticmethod
    def _csr(n, rows):
        ptr = np.zeros(n + 1, np.int64)
        ptr[1:] = np.cumsum([len(r) for r in rows])
        flat = [pair for r in rows for pair in r]
        lids = np.array([a for a, _ in flat], np.int64)
        ends = np.array([b for _, b in flat], np.int64)
        return ptr, lids, ends

    def cheapest(self, src: int, dst: int, cost: np.ndarray) -> Route:
        hops = _route_kernel(self.in_ptr, self.in_lid, self.in_src, self.out_ptr, self.out_lid,
                             self.out_dst, self.relay, src, dst, cost, self.path)
        if hops < 0:
            raise NoRouteError(f"no route from {src} to {dst}")
        return Route(tuple(self.path[:hops].tolist()))


def shortest_route(graph: NetworkGraph, src: int, dst: int) -> Route:
    _check_endpoints(graph, src, dst)
    return _cheapest_route(graph, src, dst, _UnitCost())


def _check_endpoints(graph: NetworkGraph, src: int, dst: int) -> None:
    if src == dst:
        raise ValueError("source and destination must differ")
    for node in (src, dst):
        if not 0 <= node < len(graph.nodes):
            raise ValueError(f"unknown node {node}")
        if not graph.is_host(node):
            raise ValueError(f"node {node} is not an end station")


def candidate_routes(
    graph: NetworkGraph,
    src: int,
    dst: int,
    k: int = DEFAULT_K,
    max_duplicates: int = MAX_DUPLICATES,
    fast: bool = True,
    arrays: Optional[_GraphArrays] = None,
) -> tuple[Route, ...]:
    """Up to ``k`` distinct routes, sorted by (hop count, link ids).

    Each iteration runs Dijkstra on the current costs and then adds 1 to the
    cost of every link it used. Stops after ``max_duplicates`` consecutive
    repeats of an already known route. ``fast=False`` uses the pure Python
    search, which the compiled one must match exactly.
    """
    _check_endpoints(graph, src, dst)
    if k < 1:
        raise ValueError("k must be at least 1")
    if fast:
        arrays = arrays or _GraphArrays(graph)
        cost = np.ones(len(graph.links), np.int64)
        cheapest = partial(arrays.cheapest, src, dst)
    else:
        cost = [1] * len(graph.links)
        cheapest = partial(_cheapest_route, graph, src, dst)
    found: list[Route] = []
    seen: set[Route] = set()
    duplicates = 0
    while len(found) < k:
        route = cheapest(cost)
        for lid in route.links:
            cost[lid] += 1
        if route in seen:
            duplicates += 1
            if duplicates >= max_duplicates:
                break
            continue
        duplicates = 0
        seen.add(route)
        found.append(route)
    return tuple(sorted(found, key=Route.sort_key))


class RouteCache:
    """Candidate routes memoised per (src, dst) pair."""

    def __init__(self, graph: NetworkGraph, k: int = DEFAULT_K) -> None:
        self.graph = graph
        self.k = k
        self._routes: dict[tuple[int, int], tuple[Route, ...]] = {}
        self._arrays = _GraphArrays(graph)

    def routes(self, src: int, dst: int) -> tuple[Route, ...]:
        key = (src, dst)
        routes = self._routes.get(key)
        if routes is None:
            routes = candidate_routes(self.graph, src, dst, self.k, arrays=self._arrays)
            self._routes[key] = routes
        return routes

    def candidates(self, streams: Iterable[Stream]) -> dict[int, CandidateSet]:
        return {s.id: CandidateSet(s.id, self.routes(s.src, s.dst)) for s in streams}


def compute_candidates(
    graph: NetworkGraph,
    streams: Iterable[Stream],
    k: int = DEFAULT_K,
    cache: Optional[RouteCache] = None,
) -> dict[int, CandidateSet]:
    cache = cache or RouteCache(graph, k)
    return cache.candidates(streams)
