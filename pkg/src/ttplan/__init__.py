"""Incremental time-triggered scheduling and routing of periodic streams."""

from .model import NetworkGraph, PlanResult, RequestBatch, Stream, hyper_period, sub_cycle, throughput
from .placement import ScheduleState, place, release
from .routing import Route, RouteCache, candidate_routes, shortest_route
from .schedulers import celf_plan, firstfit_plan, h2s_plan, offensive_plan
from .edf import edf_plan
from .verify import oracle_best, validate

__all__ = [
    "NetworkGraph",
    "PlanResult",
    "RequestBatch",
    "Route",
    "RouteCache",
    "ScheduleState",
    "Stream",
    "candidate_routes",
    "celf_plan",
    "edf_plan",
    "firstfit_plan",
    "h2s_plan",
    "hyper_period",
    "offensive_plan",
    "oracle_best",
    "place",
    "release",
    "shortest_route",
    "sub_cycle",
    "throughput",
    "validate",
]
