import pytest
from hypothesis import settings

from proarchiver.clock import SimulatedClock
from proarchiver.doubles import LocalSite, MemoryFetcher, SaveEndpointDouble, micro_site
from proarchiver.urls import CrawlPolicy, normalize

settings.register_profile("default", deadline=None)
settings.load_profile("default")

ORIGIN = "https://school.example"


@pytest.fixture
def clock():
    return SimulatedClock()


@pytest.fixture
def site_policy():
    return CrawlPolicy(internal_hosts=frozenset({"school.example"}), politeness_delay=0.0, robots="ignore")


@pytest.fixture
def seed():
    return normalize(ORIGIN + "/")


@pytest.fixture
def micro_fetcher(clock):
    return MemoryFetcher(micro_site(ORIGIN), clock)


@pytest.fixture
def local_site():
    with LocalSite(micro_site) as srv:
        yield srv


@pytest.fixture
def endpoint():
    with SaveEndpointDouble() as srv:
        yield srv


# acceptance gate: one PASS/FAIL line per criterion, from the real outcomes
_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion gate")


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            entry = _criteria.setdefault(number, {"title": title, "ok": None, "nodes": set()})
            entry["nodes"].add(item.nodeid)


def pytest_runtest_logreport(report):
    for entry in _criteria.values():
        if report.nodeid not in entry["nodes"]:
            continue
        if report.failed or (report.when == "call" and report.skipped):
            entry["ok"] = False
        elif report.when == "call" and entry["ok"] is None:
            entry["ok"] = True


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        verdict = {True: "PASS", False: "FAIL", None: "NOT RUN"}[entry["ok"]]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {entry['title']}")
