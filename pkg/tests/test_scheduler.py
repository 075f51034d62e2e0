import random
from collections import Counter
from itertools import permutations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from proarchiver.client import Accepted, ConnectionFailed, RateLimited, ServerError
from proarchiver.clock import SimulatedClock
from proarchiver.doubles import ScriptedClient
from proarchiver.scheduler import (
    EmptySet,
    RunBudget,
    StopReason,
    fisher_yates,
    run_submissions,
    shuffle,
)
from proarchiver.urls import normalize

LINKS = [normalize(f"https://school.example/p{i}") for i in range(100)]


def test_shuffle_singleton():
    assert shuffle(LINKS[:1], 7) == LINKS[:1]


def test_shuffle_fixed_seed_reproducible():
    abc = LINKS[:3]
    assert shuffle(abc, 42) == shuffle(abc, 42)


def test_shuffle_empty():
    with pytest.raises(EmptySet):
        shuffle([], 1)


def test_unseeded_shuffle_frequencies():
    abc = LINKS[:3]
    n = 60_000
    counts = Counter(tuple(shuffle(abc)) for _ in range(n))
    assert set(counts) == set(permutations(abc))
    for perm in permutations(abc):
        assert abs(counts[perm] / n - 1 / 6) <= 0.01


def test_fisher_yates_chi_squared():
    rng = random.Random(2026)
    n = 60_000
    counts = Counter(tuple(fisher_yates("abcd", rng)) for _ in range(n))
    expected = n / 24
    chi2 = sum((counts[p] - expected) ** 2 / expected for p in permutations("abcd"))
    # 23 degrees of freedom, 99.9th percentile
    assert chi2 < 49.73


@given(st.lists(st.integers(), max_size=50), st.integers())
def test_shuffle_is_permutation(items, seed):
    out = fisher_yates(items, random.Random(seed))
    assert sorted(out) == sorted(items)


def run(n_links, latency, cutoff, pacing=0.0, script=()):
    clock = SimulatedClock()
    client = ScriptedClient(script, clock, latency=latency)
    budget = RunBudget.start(clock, cutoff)
    report = run_submissions(LINKS[:n_links], client, budget, clock, pacing=pacing)
    return report, client


def test_budget_not_binding():
    report, _ = run(5, 1.0, 10)
    assert report.attempted == 5 and report.stopped_by is StopReason.LIST_EXHAUSTED


def test_budget_binds_after_exactly_ten():
    report, client = run(100, 1.0, 10)
    assert report.attempted == 10 == len(client.submitted)
    assert report.stopped_by is StopReason.BUDGET_EXHAUSTED
    assert report.budget_exhausted


def test_zero_cutoff_still_submits_once():
    report, _ = run(100, 1.0, 0)
    assert report.attempted == 1 and report.stopped_by is StopReason.BUDGET_EXHAUSTED


def test_connection_error_continues():
    report, _ = run(3, 1.0, 100, script=[Accepted(), ConnectionFailed("reset"), Accepted()])
    assert (report.attempted, report.accepted, report.connection_errors) == (3, 2, 1)
    assert report.stopped_by is StopReason.LIST_EXHAUSTED


def test_pacing_between_submissions_only():
    report, client = run(4, 1.0, 100, pacing=5.0)
    # 4 submissions of 1 s and 3 gaps of 5 s
    assert report.elapsed == 19.0
    assert [r.at for r in report.per_link][1] - report.per_link[0].at == (report.per_link[1].at - report.per_link[0].at)


def test_report_counts_other_failures():
    report, _ = run(4, 0.0, 100, script=[ServerError(502), RateLimited(None), Accepted(), ConnectionFailed("x")])
    assert report.summary()["other_failures"] == 1
    assert report.rate_limited == 1 and report.accepted == 1 and report.connection_errors == 1


def test_budget_validation():
    with pytest.raises(ValueError):
        RunBudget(cutoff=6 * 3600 + 1)
    with pytest.raises(ValueError):
        RunBudget(cutoff=-1)


def test_run_requires_links():
    clock = SimulatedClock()
    with pytest.raises(EmptySet):
        run_submissions([], ScriptedClient(), RunBudget.start(clock, 10), clock)


@given(
    latencies=st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=40),
    cutoff=st.floats(0, 200, allow_nan=False),
    pacing=st.floats(0, 10, allow_nan=False),
)
def test_budget_hard_stop_and_conservation(latencies, cutoff, pacing):
    clock = SimulatedClock()
    queue = list(latencies)

    def step(url):
        clock.advance(queue.pop(0))
        return Accepted()

    client = ScriptedClient([step] * len(latencies), clock)
    budget = RunBudget.start(clock, cutoff)
    report = run_submissions(LINKS[: len(latencies)], client, budget, clock, pacing=pacing)
    assert report.elapsed <= cutoff + max(latencies) + pacing + 1e-9
    assert report.attempted == len(report.per_link) <= len(latencies)
    assert report.attempted == report.accepted + report.connection_errors + report.rate_limited + report.other_failures
