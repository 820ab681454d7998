"""Core domain types: network graph, streams, request batches, time arithmetic."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterable

# 1 Gbit/s expressed per 1 us macro tick
DEFAULT_RATE = 1000
DEFAULT_PROPAGATION = 1
DEFAULT_PROCESSING = 4
MAX_FRAME_SIZE = 1500


class NodeKind(enum.Enum):
    BRIDGE = "bridge"
    HOST = "host"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind

    @property
    def is_host(self) -> bool:
        return self.kind is NodeKind.HOST


@dataclass(frozen=True)
class Link:
    """Directed link; the egress port of ``src`` feeding ``dst``."""

    id: int
    src: int
    dst: int
    rate: int = DEFAULT_RATE  # bits per tick
    propagation: int = DEFAULT_PROPAGATION
    processing: int = DEFAULT_PROCESSING  # applied at the receiving node


class NetworkGraph:
    """Switched full-duplex network. Node and link ids are dense, in creation order."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.links: list[Link] = []
        self.out_links: list[list[int]] = []
        self.in_links: list[list[int]] = []

    def add_node(self, kind: NodeKind | str) -> int:
        node = Node(len(self.nodes), NodeKind(kind))
        self.nodes.append(node)
        self.out_links.append([])
        self.in_links.append([])
        return node.id

    def add_bridge(self) -> int:
        return self.add_node(NodeKind.BRIDGE)

    def add_host(self) -> int:
        return self.add_node(NodeKind.HOST)

    def add_link(
        self,
        src: int,
        dst: int,
        rate: int = DEFAULT_RATE,
        propagation: int = DEFAULT_PROPAGATION,
        processing: int = DEFAULT_PROCESSING,
    ) -> int:
        if not (0 <= src < len(self.nodes) and 0 <= dst < len(self.nodes)):
            raise ValueError(f"link endpoint out of range: {src} -> {dst}")
        if src == dst:
            raise ValueError("self loops are not allowed")
        if rate <= 0 or propagation < 0 or processing < 0:
            raise ValueError("link rate must be positive and delays non-negative")
        link = Link(len(self.links), src, dst, rate, propagation, processing)
        self.links.append(link)
        self.out_links[src].append(link.id)
        self.in_links[dst].append(link.id)
        return link.id

    def connect(self, a: int, b: int, **params) -> tuple[int, int]:
        """Add a full-duplex cable as two directed links (a->b, b->a)."""
        return self.add_link(a, b, **params), self.add_link(b, a, **params)

    @property
    def hosts(self) -> list[int]:
        return [n.id for n in self.nodes if n.is_host]

    @property
    def bridges(self) -> list[int]:
        return [n.id for n in self.nodes if not n.is_host]

    def is_host(self, node: int) -> bool:
        return self.nodes[node].is_host

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.links == other.links

    def __repr__(self) -> str:
        return (
            f"NetworkGraph({len(self.bridges)} bridges, {len(self.hosts)} hosts, "
            f"{len(self.links)} links)"
        )


@dataclass(frozen=True)
class Stream:
    id: int
    src: int
    dst: int
    frame_size: int  # bytes
    period: int  # ticks

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError("stream id must be non-negative")
        if not 0 < self.frame_size <= MAX_FRAME_SIZE:
            raise ValueError(f"frame size {self.frame_size} outside (0, {MAX_FRAME_SIZE}]")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.src == self.dst:
            raise ValueError("source and destination must differ")

    @property
    def deadline(self) -> int:
        return self.period


@dataclass
class RequestBatch:
    add: list[Stream] = field(default_factory=list)
    remove: list[int] = field(default_factory=list)


@dataclass
class PlanResult:
    admitted: list[int]
    rejected: list[int]
    state: "object"  # placement.ScheduleState; kept untyped to avoid an import cycle
    offensive: bool = False  # set when an offensive re-plan replaced the defensive one

    @property
    def throughput(self) -> Fraction:
        return sum((throughput(self.state.streams[s]) for s in self.state.schedules), Fraction(0))


def hyper_period(periods: Iterable[int]) -> int:
    periods = list(periods)
    if not periods:
        raise ValueError("hyper period of an empty period set")
    if any(p <= 0 for p in periods):
        raise ValueError("periods must be positive")
    return reduce(math.lcm, periods)


def sub_cycle(periods: Iterable[int]) -> int:
    periods = list(periods)
    if not periods:
        raise ValueError("sub-cycle of an empty period set")
    if any(p <= 0 for p in periods):
        raise ValueError("periods must be positive")
    return reduce(math.gcd, periods)


def throughput(stream: Stream) -> Fraction:
    """Throughput in Mbit/s (bits per microsecond tick), exact."""
    return Fraction(stream.frame_size * 8, stream.period)


def format_mbps(value: Fraction) -> str:
    return f"{float(value):.3f}"


def transmission_ticks(frame_size: int, rate: int = DEFAULT_RATE) -> int:
    """Ticks needed to serialize ``frame_size`` bytes at ``rate`` bits per tick."""
    if rate <= 0:
        raise ValueError("link rate must be positive")
    return -(-frame_size * 8 // rate)


def apply_batch_semantics(
    prev: Iterable[int], batch: RequestBatch, rejected: Iterable[int]
) -> set[int]:
    prev = set(prev)
    rejected = set(rejected)
    add_ids = {s.id for s in batch.add}
    missing = set(batch.remove) - prev
    if missing:
        raise KeyError(f"cannot remove streams that are not admitted: {sorted(missing)}")
    if not rejected <= add_ids:
        raise ValueError("rejected streams must come from the add set")
    return ((prev - set(batch.remove)) | add_ids) - rejected
