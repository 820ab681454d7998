"""Seeded topology and stream generators for the evaluation scenarios."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional

import networkx as nx

from .model import NetworkGraph, Stream

FRAME_SIZES = (125, 250, 500, 750, 1000, 1500)
PERIODS = (250, 500, 1000, 2000)
KINDS = ("random", "grid", "ring", "tree", "line", "external")


@dataclass(frozen=True)
class TopologySpec:
    kind: str
    n_bridges: int = 25
    rows: int = 0
    cols: int = 0
    edge_probability: Optional[float] = None
    max_children: int = 4
    hosts_per_bridge: int = 1
    seed: int = 0
    path: Optional[str] = None  # for kind == "external"

    @property
    def label(self) -> str:
        if self.kind == "grid":
            return f"grid-{self.rows}x{self.cols}"
        if self.kind == "external":
            return f"external-{self.path}"
        return f"{self.kind}-{self.n_bridges}"


def _bridge_edges(spec: TopologySpec, rng: random.Random) -> tuple[int, list[tuple[int, int]]]:
    kind = spec.kind
    if kind == "grid":
        if spec.rows < 1 or spec.cols < 1 or spec.rows * spec.cols < 2:
            raise ValueError("grid needs at least two bridges")
        g = nx.grid_2d_graph(spec.rows, spec.cols)
        index = {(r, c): r * spec.cols + c for r in range(spec.rows) for c in range(spec.cols)}
        return spec.rows * spec.cols, [(index[a], index[b]) for a, b in g.edges()]

    n = spec.n_bridges
    if n < 2:
        raise ValueError("need at least two bridges")
    if kind == "line":
        return n, [(i, i + 1) for i in range(n - 1)]
    if kind == "ring":
        if n < 3:
            raise ValueError("a ring needs at least three bridges")
        return n, [(i, (i + 1) % n) for i in range(n)]
    if kind == "tree":
        if spec.max_children < 1:
            raise ValueError("max_children must be positive")
        children = [0] * n
        edges = []
        for v in range(1, n):
            parent = rng.choice([u for u in range(v) if children[u] < spec.max_children])
            children[parent] += 1
            edges.append((parent, v))
        return n, edges
    if kind == "random":
        p = spec.edge_probability
        if p is None:
            p = min(1.0, 2 * math.log(n) / n)
        for _ in range(1000):
            g = nx.gnp_random_graph(n, p, seed=rng.getrandbits(64))
            if nx.is_connected(g):
                return n, sorted(g.edges())
        raise RuntimeError(f"no connected G({n}, {p}) graph after 1000 attempts")
    raise ValueError(f"unknown topology kind {kind!r}")


def generate(spec: TopologySpec) -> NetworkGraph:
    """Build the network: bridges first, then hosts attached bridge by bridge."""
    if spec.kind == "external":
        from .harness import load_topology

        if spec.path is None:
            raise ValueError("external topology needs a path")
        return load_topology(spec.path)
    if spec.hosts_per_bridge < 0:
        raise ValueError("hosts_per_bridge must be non-negative")
    rng = random.Random(spec.seed)
    n, edges = _bridge_edges(spec, rng)
    graph = NetworkGraph()
    for _ in range(n):
        graph.add_bridge()
    for a, b in edges:
        graph.connect(min(a, b), max(a, b))
    for b in range(n):
        for _ in range(spec.hosts_per_bridge):
            graph.connect(graph.add_host(), b)
    return graph


def generate_streams(graph: NetworkGraph, n: int, seed: int, first_id: int = 0) -> list[Stream]:
    hosts = graph.hosts
    if len(hosts) < 2:
        raise ValueError("need at least two end stations to generate streams")
    rng = random.Random(seed)
    streams = []
    m = len(hosts)
    for i in range(n):
        si = rng.randrange(m)
        di = rng.randrange(m - 1)
        if di >= si:
            di += 1
        streams.append(
            Stream(first_id + i, hosts[si], hosts[di], rng.choice(FRAME_SIZES), rng.choice(PERIODS))
        )
    return streams
