"""Watch the archiver's own schedule for gaps before a platform disables it."""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Protocol, TextIO

from .store import RunLedgerEntry, StoreSnapshot, format_timestamp

log = logging.getLogger(__name__)


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ContinuityPolicy:
    expected_cadence: timedelta = timedelta(hours=4)
    warn_after: timedelta | None = None  # defaults to three missed cadences
    platform_disable_after: timedelta = timedelta(days=60)
    alarm_margin: timedelta = timedelta(days=7)

    def __post_init__(self):
        if self.warn_after is None:
            object.__setattr__(self, "warn_after", 3 * self.expected_cadence)
        if self.expected_cadence <= timedelta(0):
            raise ValueError("expected_cadence must be positive")
        if self.warn_after <= self.expected_cadence:
            raise ValueError("warn_after must exceed expected_cadence")
        if not timedelta(0) <= self.alarm_margin < self.platform_disable_after:
            raise ValueError("alarm_margin must be below platform_disable_after")

    @property
    def at_risk_after(self) -> timedelta:
        return self.platform_disable_after - self.alarm_margin


@dataclass(frozen=True)
class Healthy:
    last_run_at: datetime | None = None
    severity = 0


@dataclass(frozen=True)
class Stale:
    missed_runs: int
    gap: timedelta
    last_run_at: datetime | None = None
    severity = 1


@dataclass(frozen=True)
class AtRisk:
    days_until_disable: timedelta
    gap: timedelta
    last_run_at: datetime | None = None
    severity = 2


@dataclass(frozen=True)
class Lapsed:
    gap: timedelta | None  # None: no run has ever been recorded
    last_run_at: datetime | None = None
    severity = 3

    @property
    def unbounded(self) -> bool:
        return self.gap is None


ContinuityStatus = Healthy | Stale | AtRisk | Lapsed


def check(now: datetime, store: StoreSnapshot, policy: ContinuityPolicy | None = None) -> ContinuityStatus:
    """Classify the gap since the most recent run or heartbeat."""
    policy = policy or ContinuityPolicy()
    last = store.latest_started_at()
    if last is None:
        return Lapsed(gap=None)
    gap = now - last
    if gap >= policy.platform_disable_after:
        return Lapsed(gap=gap, last_run_at=last)
    if gap >= policy.at_risk_after:
        return AtRisk(policy.platform_disable_after - gap, gap, last)
    if gap >= policy.warn_after:
        return Stale(gap // policy.expected_cadence - 1, gap, last)
    return Healthy(last)


def record_heartbeat(now: datetime, store: StoreSnapshot) -> RunLedgerEntry:
    entry = RunLedgerEntry(
        run_id=store.next_run_id(),
        started_at=now,
        wall_duration=0.0,
        in_budget_duration=0.0,
        entry_kind="heartbeat",
    )
    store.append_run(entry)
    return entry


def status_payload(status: ContinuityStatus) -> dict:
    gap = getattr(status, "gap", None)
    remaining = getattr(status, "days_until_disable", None)
    return {
        "status": type(status).__name__,
        "severity": status.severity,
        "last_run_at": format_timestamp(status.last_run_at) if status.last_run_at else None,
        "gap_hours": round(gap.total_seconds() / 3600, 3) if gap is not None else None,
        "gap_unbounded": isinstance(status, Lapsed) and status.unbounded,
        "missed_runs": getattr(status, "missed_runs", None),
        "days_until_disable": round(remaining.total_seconds() / 86400, 3) if remaining is not None else None,
    }


def describe(status: ContinuityStatus) -> str:
    if isinstance(status, Healthy):
        return "healthy"
    if isinstance(status, Stale):
        return f"stale: {status.missed_runs} scheduled runs missed ({_days(status.gap)} since last run)"
    if isinstance(status, AtRisk):
        return (
            f"at risk: schedule may be disabled in {_days(status.days_until_disable)} "
            f"({_days(status.gap)} since last run)"
        )
    if status.gap is None:
        return "lapsed: no run has ever been recorded"
    return f"lapsed: {_days(status.gap)} since last run; the platform has likely disabled the schedule"


def _days(delta: timedelta) -> str:
    days = delta.total_seconds() / 86400
    return f"{days:g} days" if days >= 1 else f"{delta.total_seconds() / 3600:g} hours"


class AlertSink(Protocol):
    def deliver(self, payload: dict, message: str) -> None: ...


class StreamSink:
    def __init__(self, stream: TextIO | None = None):
        self.stream = stream

    def deliver(self, payload: dict, message: str) -> None:
        print(f"proarchiver ALERT: {message}", file=self.stream or sys.stderr)


class FileSink:
    """Appends one JSON line per alert."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def deliver(self, payload: dict, message: str) -> None:
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps({**payload, "message": message}) + "\n")


class ExitCodeSink:
    def __init__(self):
        self.code = 0

    def deliver(self, payload: dict, message: str) -> None:
        self.code = payload["severity"]


class AlertDeliveryError(OSError):
    def __init__(self, exit_code: int, failures: list[tuple[object, Exception]]):
        super().__init__(f"{len(failures)} alert sink(s) failed: " + "; ".join(str(e) for _, e in failures))
        self.exit_code = exit_code
        self.failures = failures


def emit_alert(status: ContinuityStatus, sinks: list[AlertSink], now: datetime | None = None) -> int:
    """Deliver an alert to every sink and return the severity exit code.

    A failing sink does not stop the others; failures are raised together
    afterwards as :class:`AlertDeliveryError`, which still carries the code.
    """
    if isinstance(status, Healthy):
        raise UsageError("nothing to alert on: status is healthy")
    payload = status_payload(status)
    if now is not None:
        payload["checked_at"] = format_timestamp(now)
    message = describe(status)
    failures = []
    for sink in sinks:
        try:
            sink.deliver(payload, message)
        except OSError as exc:
            log.error("alert sink %r failed: %s", sink, exc)
            failures.append((sink, exc))
    if failures:
        raise AlertDeliveryError(status.severity, failures)
    return status.severity
