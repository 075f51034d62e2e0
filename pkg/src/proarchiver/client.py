"""Client for a Wayback-style ``/save/`` capture endpoint."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from email.utils import parsedate_to_datetime
from typing import Callable

import requests

from .clock import Clock, SystemClock
from .discovery import DEFAULT_USER_AGENT
from .urls import NormalizedUrl

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://web.archive.org"
SUBMIT_TIMEOUT = 120.0
POLICY_REJECTIONS = frozenset({401, 403, 404, 451})


@dataclass(frozen=True)
class Accepted:
    snapshot_hint: str | None = None


@dataclass(frozen=True)
class RateLimited:
    retry_after: float | None = None


@dataclass(frozen=True)
class ServerError:
    status: int

    def __post_init__(self):
        if not 500 <= self.status <= 599:
            raise ValueError(f"ServerError needs a 5xx status, got {self.status}")


@dataclass(frozen=True)
class ConnectionFailed:
    cause: str


@dataclass(frozen=True)
class RejectedByPolicy:
    status: int

    def __post_init__(self):
        if self.status not in POLICY_REJECTIONS:
            raise ValueError(f"RejectedByPolicy needs one of {sorted(POLICY_REJECTIONS)}, got {self.status}")


@dataclass(frozen=True)
class UnexpectedStatus:
    """Any status the other outcomes do not cover (1xx, other 4xx)."""

    status: int


SubmissionOutcome = Accepted | RateLimited | ServerError | ConnectionFailed | RejectedByPolicy | UnexpectedStatus

OUTCOME_NAMES = {
    Accepted: "accepted",
    RateLimited: "rate_limited",
    ServerError: "server_error",
    ConnectionFailed: "connection_error",
    RejectedByPolicy: "rejected_by_policy",
    UnexpectedStatus: "unexpected_status",
}


def outcome_name(outcome: SubmissionOutcome) -> str:
    return OUTCOME_NAMES[type(outcome)]


def parse_retry_after(value: str | None, now: datetime | None = None) -> float | None:
    """Seconds to wait from a Retry-After header (delta-seconds or HTTP-date)."""
    if value is None:
        return None
    value = value.strip()
    if value.isdigit():
        return float(value)
    try:
        when = parsedate_to_datetime(value)
    except (TypeError, ValueError, IndexError):
        return None
    if when.tzinfo is None:
        when = when.replace(tzinfo=timezone.utc)
    now = now or datetime.now(timezone.utc)
    return max(0.0, (when - now).total_seconds())


def outcome_for_response(status: int, headers, now: datetime | None = None) -> SubmissionOutcome:
    if 200 <= status <= 299:
        return Accepted(headers.get("Content-Location"))
    if 300 <= status <= 399:
        # the save endpoint answers a finished capture with a redirect to it
        return Accepted(headers.get("Location") or headers.get("Content-Location"))
    if status == 429:
        return RateLimited(parse_retry_after(headers.get("Retry-After"), now))
    if 500 <= status <= 599:
        return ServerError(status)
    if status in POLICY_REJECTIONS:
        return RejectedByPolicy(status)
    return UnexpectedStatus(status)


@dataclass(frozen=True)
class BackoffPolicy:
    max_attempts: int = 3
    base_delay: float = 10.0
    multiplier: float = 2.0
    honor_retry_after: bool = True

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")
        if self.base_delay < 0:
            raise ValueError("base_delay must be >= 0")

    def delay(self, attempt: int, retry_after: float | None = None) -> float:
        """Wait before the attempt after ``attempt`` (1-based)."""
        computed = self.base_delay * self.multiplier ** (attempt - 1)
        if self.honor_retry_after and retry_after is not None:
            return max(computed, retry_after)
        return computed


class ArchiveClient:
    """Request captures with ``GET {endpoint}/save/{url}``.

    ``submit`` never raises: transport failures come back as
    :class:`ConnectionFailed` values.
    """

    def __init__(
        self,
        endpoint_base: str = DEFAULT_ENDPOINT,
        user_agent: str = DEFAULT_USER_AGENT,
        timeout: float = SUBMIT_TIMEOUT,
        clock: Clock | None = None,
        session: requests.Session | None = None,
    ):
        self.endpoint_base = endpoint_base.rstrip("/")
        self.timeout = timeout
        self.clock = clock or SystemClock()
        self.session = session or requests.Session()
        self.session.headers.update({"User-Agent": user_agent})
        self.attempts: list[tuple[float, str]] = []  # (monotonic time, request url)

    def save_url(self, url: NormalizedUrl | str) -> str:
        text = url.render() if isinstance(url, NormalizedUrl) else url
        return f"{self.endpoint_base}/save/{text}"

    def submit(self, url: NormalizedUrl) -> SubmissionOutcome:
        target = self.save_url(url)
        self.attempts.append((self.clock.monotonic(), target))
        try:
            resp = self.session.get(target, timeout=self.timeout, allow_redirects=False)
            resp.close()
        except requests.RequestException as exc:
            log.warning("connection error submitting %s: %s", url, exc)
            return ConnectionFailed(f"{type(exc).__name__}: {exc}")
        except Exception as exc:  # malformed responses surface as assorted errors
            log.warning("transport failure submitting %s: %r", url, exc)
            return ConnectionFailed(f"{type(exc).__name__}: {exc}")
        return outcome_for_response(resp.status_code, resp.headers, self.clock.now())

    def submit_with_backoff(self, url: NormalizedUrl, policy: BackoffPolicy) -> SubmissionOutcome:
        return retry_submit(self.submit, url, policy, self.clock)


def retry_submit(
    submit: Callable[[NormalizedUrl], SubmissionOutcome],
    url: NormalizedUrl,
    policy: BackoffPolicy,
    clock: Clock,
) -> SubmissionOutcome:
    """Retry rate-limit and server errors; everything else returns at once.

    Connection failures are not retried here: the next scheduled run is the
    retry.
    """
    outcome: SubmissionOutcome = ConnectionFailed("not attempted")
    for attempt in range(1, policy.max_attempts + 1):
        outcome = submit(url)
        if not isinstance(outcome, (RateLimited, ServerError)):
            return outcome
        if attempt == policy.max_attempts:
            break
        retry_after = outcome.retry_after if isinstance(outcome, RateLimited) else None
        wait = policy.delay(attempt, retry_after)
        log.info("%s on %s; retrying in %.1fs", outcome_name(outcome), url, wait)
        clock.sleep(wait)
    return outcome
