import os
import random

import pytest
from hypothesis import HealthCheck, settings

from ttplan.model import NetworkGraph, Stream
from ttplan.topology import FRAME_SIZES

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", max_examples=20, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def line_network(n_bridges, rate=1000):
    """ES0 - B0 - ... - B(n-1) - ES1. Returns graph, (src host, dst host)."""
    g = NetworkGraph()
    bridges = [g.add_bridge() for _ in range(n_bridges)]
    for a, b in zip(bridges, bridges[1:]):
        g.connect(a, b, rate=rate)
    src, dst = g.add_host(), g.add_host()
    g.connect(src, bridges[0], rate=rate)
    g.connect(bridges[-1], dst, rate=rate)
    return g, (src, dst)


def tiny_instance(seed, rate=100):
    """Random instance within the oracle limits: <= 4 bridges, <= 6 streams.

    Links run at ``rate`` bits per tick; 100 (100 Mbit/s) makes a handful of
    streams saturate a link, which paper-rate links never do at this size.
    """
    rng = random.Random(seed)
    g = NetworkGraph()
    nb = rng.randint(2, 4)
    bridges = [g.add_bridge() for _ in range(nb)]
    for a, b in zip(bridges, bridges[1:]):
        g.connect(a, b, rate=rate)
    if nb >= 3 and rng.random() < 0.7:
        g.connect(bridges[0], bridges[-1], rate=rate)
    hosts = [g.add_host() for _ in bridges]
    for h, b in zip(hosts, bridges):
        g.connect(h, b, rate=rate)
    streams = []
    for i in range(rng.randint(2, 6)):
        s, d = rng.sample(hosts, 2)
        streams.append(Stream(i, s, d, rng.choice(FRAME_SIZES), rng.choice((250, 500))))
    return g, streams


@pytest.fixture
def line3():
    return line_network(3)


def ring_network(n_bridges, rate=1000):
    """Bridge ring with one end station per bridge. Returns graph, hosts."""
    g = NetworkGraph()
    bridges = [g.add_bridge() for _ in range(n_bridges)]
    for i in range(n_bridges):
        g.connect(bridges[i], bridges[(i + 1) % n_bridges], rate=rate)
    hosts = [g.add_host() for _ in bridges]
    for h, b in zip(hosts, bridges):
        g.connect(h, b, rate=rate)
    return g, hosts


# -- acceptance reporting ---------------------------------------------------

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "details": []})
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["details"] += [str(v) for k, v in item.user_properties if k == "measured"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] else "FAIL"
        details = "; ".join(entry["details"])
        line = f"criterion {number:2d} {status}  {entry['title']}"
        terminalreporter.write_line(line + (f"  [{details}]" if details else ""))
