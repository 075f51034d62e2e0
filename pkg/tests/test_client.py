from datetime import datetime, timezone

import pytest
import requests
from hypothesis import given
from hypothesis import strategies as st

from proarchiver.client import (
    Accepted,
    ArchiveClient,
    BackoffPolicy,
    ConnectionFailed,
    RateLimited,
    RejectedByPolicy,
    ServerError,
    UnexpectedStatus,
    outcome_for_response,
    parse_retry_after,
)
from proarchiver.clock import SimulatedClock
from proarchiver.doubles import SaveEndpointDouble, ScriptedClient
from proarchiver.urls import normalize

URL = normalize("https://school.example/news?p=1&q=a%20b")


class FakeResponse:
    def __init__(self, status, headers=None):
        self.status_code = status
        self.headers = requests.structures.CaseInsensitiveDict(headers or {})

    def close(self):
        pass


class FakeSession:
    """requests.Session stand-in: replays statuses or raises."""

    def __init__(self, steps):
        self.steps = list(steps)
        self.headers = {}
        self.urls = []

    def get(self, url, **kw):
        self.urls.append(url)
        step = self.steps.pop(0)
        if isinstance(step, Exception):
            raise step
        if isinstance(step, tuple):
            return FakeResponse(*step)
        return FakeResponse(step)


def client_for(steps, clock=None):
    return ArchiveClient("http://double", clock=clock or SimulatedClock(), session=FakeSession(steps))


def test_accepted_with_hint(endpoint):
    client = ArchiveClient(endpoint.origin)
    outcome = client.submit(URL)
    assert isinstance(outcome, Accepted)
    assert outcome.snapshot_hint.startswith("/web/20260115")


def test_rate_limited_parses_retry_after():
    out = client_for([(429, {"Retry-After": "60"})]).submit(URL)
    assert out == RateLimited(60.0)


def test_unreachable_endpoint_is_connection_error():
    client = ArchiveClient("http://127.0.0.1:9", timeout=2)
    out = client.submit(URL)
    assert isinstance(out, ConnectionFailed)


@pytest.mark.parametrize(
    "status, expected",
    [
        (200, Accepted(None)),
        (201, Accepted(None)),
        (301, Accepted(None)),
        (302, Accepted(None)),
        (401, RejectedByPolicy(401)),
        (403, RejectedByPolicy(403)),
        (404, RejectedByPolicy(404)),
        (451, RejectedByPolicy(451)),
        (429, RateLimited(None)),
        (500, ServerError(500)),
        (503, ServerError(503)),
        (400, UnexpectedStatus(400)),
        (100, UnexpectedStatus(100)),
    ],
)
def test_status_mapping(status, expected):
    assert outcome_for_response(status, {}) == expected


def test_redirect_hint_comes_from_location():
    assert outcome_for_response(302, {"Location": "https://web.archive.org/web/2026/x"}) == Accepted(
        "https://web.archive.org/web/2026/x"
    )


def test_retry_after_http_date():
    now = datetime(2026, 1, 15, 12, 0, 0, tzinfo=timezone.utc)
    assert parse_retry_after("Thu, 15 Jan 2026 12:01:30 GMT", now) == 90.0
    assert parse_retry_after("Thu, 15 Jan 2026 11:00:00 GMT", now) == 0.0
    assert parse_retry_after("soon", now) is None
    assert parse_retry_after(None) is None


def test_outcome_invariants():
    with pytest.raises(ValueError):
        ServerError(404)
    with pytest.raises(ValueError):
        RejectedByPolicy(500)


@given(st.integers(100, 599))
def test_submit_total_over_statuses(status):
    out = client_for([status]).submit(URL)
    assert out is not None


@given(st.sampled_from([requests.ConnectionError("refused"), requests.Timeout("slow"), requests.TooManyRedirects(), ValueError("garbled")]))
def test_submit_total_over_transport_failures(exc):
    assert isinstance(client_for([exc]).submit(URL), ConnectionFailed)


def test_backoff_429_then_ok():
    client = client_for([429, 200])
    out = client.submit_with_backoff(URL, BackoffPolicy(max_attempts=3))
    assert isinstance(out, Accepted)
    assert len(client.session.urls) == 2


def test_backoff_exhaustion():
    clock = SimulatedClock()
    client = client_for([500, 500, 500], clock)
    out = client.submit_with_backoff(URL, BackoffPolicy(max_attempts=3, base_delay=10, multiplier=2))
    assert out == ServerError(500)
    assert len(client.session.urls) == 3
    # 10 s then 20 s, no sleep after the last attempt
    assert [t for t, _ in client.attempts] == [0.0, 10.0, 30.0]


def test_connection_errors_not_retried():
    client = client_for([requests.ConnectionError("down"), 200, 200])
    out = client.submit_with_backoff(URL, BackoffPolicy(max_attempts=3))
    assert isinstance(out, ConnectionFailed)
    assert len(client.session.urls) == 1


def test_policy_rejection_not_retried():
    client = client_for([403, 200])
    assert client.submit_with_backoff(URL, BackoffPolicy()) == RejectedByPolicy(403)
    assert len(client.session.urls) == 1


def test_retry_after_dominates_backoff():
    clock = SimulatedClock()
    client = client_for([(429, {"Retry-After": "120"}), 200], clock)
    client.submit_with_backoff(URL, BackoffPolicy(base_delay=10))
    times = [t for t, _ in client.attempts]
    assert times[1] - times[0] == 120.0


def test_retry_after_ignored_when_disabled():
    clock = SimulatedClock()
    client = client_for([(429, {"Retry-After": "120"}), 200], clock)
    client.submit_with_backoff(URL, BackoffPolicy(base_delay=10, honor_retry_after=False))
    times = [t for t, _ in client.attempts]
    assert times[1] - times[0] == 10.0


@given(
    st.lists(st.sampled_from([200, 429, 500, 503, 404, "conn"]), min_size=5, max_size=5),
    st.integers(1, 5),
)
def test_attempt_bound(script, max_attempts):
    steps = [requests.ConnectionError("x") if s == "conn" else s for s in script]
    client = client_for(steps)
    client.submit_with_backoff(URL, BackoffPolicy(max_attempts=max_attempts, base_delay=0))
    assert 1 <= len(client.session.urls) <= max_attempts


def test_backoff_policy_validation():
    with pytest.raises(ValueError):
        BackoffPolicy(max_attempts=0)
    with pytest.raises(ValueError):
        BackoffPolicy(multiplier=0.5)


def test_scripted_client_shares_retry_logic():
    clock = SimulatedClock()
    client = ScriptedClient([RateLimited(5.0), Accepted()], clock)
    assert isinstance(client.submit_with_backoff(URL, BackoffPolicy(base_delay=1)), Accepted)
    assert clock.monotonic() == 5.0


@pytest.mark.parametrize(
    "raw",
    [
        "https://school.example/news?p=1&q=a%20b",
        "https://school.example/%D9%85%D8%AF%D8%B1%D8%B3%D9%87/?lang=fa",
        "https://school.example/wp-content/uploads/2025/01/Photo%201.jpg",
        "http://school.example:8080/a;b?x=%2F&y=~",
    ],
)
def test_request_path_is_byte_exact(endpoint, raw):
    url = normalize(raw)
    assert url.render() == raw
    ArchiveClient(endpoint.origin).submit(url)
    assert endpoint.paths[-1].encode() == f"/save/{raw}".encode()


def test_live_double_covers_status_table():
    script = [200, 301, 404, 429, 451, 500, "drop"]
    with SaveEndpointDouble(script) as ep:
        client = ArchiveClient(ep.origin, timeout=5)
        outcomes = [client.submit(URL) for _ in script]
    assert [type(o) for o in outcomes] == [
        Accepted,
        Accepted,
        RejectedByPolicy,
        RateLimited,
        RejectedByPolicy,
        ServerError,
        ConnectionFailed,
    ]
