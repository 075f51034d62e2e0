"""Shuffled, time-budgeted submission runs and the coverage model behind them."""

from __future__ import annotations

import enum
import logging
import math
import random
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Iterable, Protocol, Sequence, TypeVar

import numpy as np

from .client import (
    Accepted,
    BackoffPolicy,
    ConnectionFailed,
    RateLimited,
    SubmissionOutcome,
    outcome_name,
)
from .clock import Clock
from .discovery import DiscoveredSet
from .urls import NormalizedUrl

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 3 * 3600 + 55 * 60
PLATFORM_MAX_RUN = 6 * 3600
DEFAULT_PACING = 5.0
RUNS_PER_DAY = 6

T = TypeVar("T")


class EmptySet(ValueError):
    pass


class InvalidParams(ValueError):
    pass


class StopReason(str, enum.Enum):
    BUDGET_EXHAUSTED = "BudgetExhausted"
    LIST_EXHAUSTED = "ListExhausted"


class Submitter(Protocol):
    def submit(self, url: NormalizedUrl) -> SubmissionOutcome: ...


@dataclass(frozen=True)
class RunBudget:
    """Hard wall-time budget for one run, measured on an injected clock."""

    cutoff: float = DEFAULT_CUTOFF
    started_at: float = 0.0

    def __post_init__(self):
        # zero is allowed: the loop still makes one submission before checking
        if not 0 <= self.cutoff <= PLATFORM_MAX_RUN:
            raise ValueError(f"cutoff must be within [0, {PLATFORM_MAX_RUN}] seconds, got {self.cutoff}")

    @classmethod
    def start(cls, clock: Clock, cutoff: float = DEFAULT_CUTOFF) -> "RunBudget":
        return cls(cutoff=cutoff, started_at=clock.monotonic())

    def elapsed(self, clock: Clock) -> float:
        return clock.monotonic() - self.started_at

    def exhausted(self, clock: Clock) -> bool:
        return self.elapsed(clock) >= self.cutoff


@dataclass(frozen=True)
class LinkResult:
    url: NormalizedUrl
    outcome: SubmissionOutcome
    at: datetime


@dataclass(frozen=True)
class RunReport:
    attempted: int
    accepted: int
    connection_errors: int
    rate_limited: int
    other_failures: int
    elapsed: float
    stopped_by: StopReason
    per_link: tuple[LinkResult, ...] = ()
    cutoff: float = DEFAULT_CUTOFF
    # proactive passes only
    unchanged: int = 0
    fetch_failures: int = 0
    decisions: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.attempted != self.accepted + self.connection_errors + self.rate_limited + self.other_failures:
            raise ValueError("attempted must equal the sum of outcome counts")
        if self.attempted != len(self.per_link):
            raise ValueError("attempted must equal the number of per-link results")

    @property
    def budget_exhausted(self) -> bool:
        return self.stopped_by is StopReason.BUDGET_EXHAUSTED

    @classmethod
    def from_results(cls, results: Sequence[LinkResult], elapsed: float, stopped_by: StopReason, **extra) -> "RunReport":
        tally = {"accepted": 0, "connection_errors": 0, "rate_limited": 0, "other_failures": 0}
        for r in results:
            if isinstance(r.outcome, Accepted):
                tally["accepted"] += 1
            elif isinstance(r.outcome, ConnectionFailed):
                tally["connection_errors"] += 1
            elif isinstance(r.outcome, RateLimited):
                tally["rate_limited"] += 1
            else:
                tally["other_failures"] += 1
        return cls(
            attempted=len(results),
            elapsed=elapsed,
            stopped_by=stopped_by,
            per_link=tuple(results),
            **tally,
            **extra,
        )

    def summary(self) -> dict:
        out = {
            "attempted": self.attempted,
            "accepted": self.accepted,
            "connection_errors": self.connection_errors,
            "rate_limited": self.rate_limited,
            "other_failures": self.other_failures,
            "elapsed_s": round(self.elapsed, 3),
            "stopped_by": self.stopped_by.value,
            "budget_exhausted": self.budget_exhausted,
        }
        if self.decisions:
            out["unchanged"] = self.unchanged
            out["fetch_failures"] = self.fetch_failures
        return out


def fisher_yates(items: Iterable[T], rng: random.Random) -> list[T]:
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.randrange(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def shuffle(links: DiscoveredSet | Sequence[NormalizedUrl], rng_seed: int | None = None) -> list[NormalizedUrl]:
    """Uniformly permute the archival targets.

    A fixed ``rng_seed`` makes the order reproducible; ``None`` draws fresh
    OS entropy.
    """
    urls = links.urls if isinstance(links, DiscoveredSet) else list(links)
    if not urls:
        raise EmptySet("nothing to shuffle")
    return fisher_yates(urls, random.Random(rng_seed))


def run_submissions(
    links: Sequence[NormalizedUrl],
    client: Submitter,
    budget: RunBudget,
    clock: Clock,
    pacing: float = DEFAULT_PACING,
    backoff: BackoffPolicy | None = None,
    on_result: Callable[[LinkResult], None] | None = None,
) -> RunReport:
    """Submit ``links`` in order until the list or the budget runs out.

    The budget is checked after each submission, so a run can overshoot the
    cutoff by at most one submission. Errors are recorded and the loop
    moves on.
    """
    if not links:
        raise EmptySet("no links to submit")
    if pacing < 0:
        raise ValueError("pacing must be >= 0")

    results: list[LinkResult] = []
    stopped_by = StopReason.LIST_EXHAUSTED
    for i, url in enumerate(links):
        if backoff is not None and hasattr(client, "submit_with_backoff"):
            outcome = client.submit_with_backoff(url, backoff)
        else:
            outcome = client.submit(url)
        result = LinkResult(url, outcome, clock.now())
        results.append(result)
        if on_result is not None:
            on_result(result)
        if isinstance(outcome, ConnectionFailed):
            log.error("connection error on %s: %s", url, outcome.cause)
        elif not isinstance(outcome, Accepted):
            log.warning("%s: %s", url, outcome_name(outcome))

        last = i == len(links) - 1
        if budget.exhausted(clock) and not last:
            stopped_by = StopReason.BUDGET_EXHAUSTED
            log.info("budget of %.0fs used after %d submissions", budget.cutoff, len(results))
            break
        if not last:
            clock.sleep(pacing)

    return RunReport.from_results(results, budget.elapsed(clock), stopped_by, cutoff=budget.cutoff)


@dataclass(frozen=True)
class CoverageParams:
    n_links: int
    per_run_capacity: int
    n_runs: int

    def __post_init__(self):
        for name in ("n_links", "per_run_capacity", "n_runs"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidParams(f"{name} must be a positive integer, got {value!r}")
        if self.per_run_capacity > self.n_links:
            raise InvalidParams("per_run_capacity cannot exceed n_links")


def coverage_probability(params: CoverageParams) -> float:
    """Chance a given link is archived at least once across all runs,
    when each run archives a uniformly random subset of fixed size."""
    miss = 1.0 - params.per_run_capacity / params.n_links
    return 1.0 - miss**params.n_runs


def binomial_tolerance(p: float, trials: int, sigmas: float = 3.0) -> float:
    return sigmas * math.sqrt(p * (1.0 - p) / trials)


@dataclass(frozen=True)
class CoverageSimulation:
    params: CoverageParams
    trials: int
    shuffled: bool
    coverage: np.ndarray  # per link: fraction of trials archived at least once
    mean_submissions: np.ndarray  # per link: mean submissions over the runs

    @property
    def spread(self) -> float:
        return float(self.coverage.max() - self.coverage.min())


def simulate_coverage(
    params: CoverageParams,
    trials: int,
    rng_seed: int,
    shuffled: bool = True,
) -> CoverageSimulation:
    """Monte Carlo of repeated runs that each submit a prefix of a fresh
    permutation. With ``shuffled=False`` every run takes the same prefix."""
    if trials < 1:
        raise InvalidParams("trials must be >= 1")
    n, c, r = params.n_links, params.per_run_capacity, params.n_runs
    counts = np.zeros((trials, n), dtype=np.int32)
    if shuffled:
        rng = np.random.default_rng(rng_seed)
        rows = np.arange(trials)[:, None]
        for _ in range(r):
            order = np.argsort(rng.random((trials, n)), axis=1)
            counts[rows, order[:, :c]] += 1
    else:
        counts[:, :c] = r
    return CoverageSimulation(
        params=params,
        trials=trials,
        shuffled=shuffled,
        coverage=(counts > 0).mean(axis=0),
        mean_submissions=counts.mean(axis=0),
    )


def simulate_change_driven_submissions(
    n_links: int,
    mutation_rate: float,
    passes: int,
    rng_seed: int,
    capacity: int | None = None,
) -> float:
    """Mean submissions per pass when only changed pages are submitted.

    Each page changes independently with ``mutation_rate`` between passes;
    the first pass submits everything (first sight). Compare against
    ``capacity`` submissions per pass for blind resubmission.
    """
    if not 0 <= mutation_rate <= 1 or passes < 2 or n_links < 1:
        raise InvalidParams("need 0 <= mutation_rate <= 1, passes >= 2, n_links >= 1")
    cap = n_links if capacity is None else capacity
    rng = np.random.default_rng(rng_seed)
    changed = rng.random((passes - 1, n_links)) < mutation_rate
    return float(np.minimum(changed.sum(axis=1), cap).mean())
