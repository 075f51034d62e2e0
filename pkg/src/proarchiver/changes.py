"""Archive pages when their content changes instead of on every run."""

from __future__ import annotations

import enum
import hashlib
import logging
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Pattern, Sequence

from .client import Accepted, BackoffPolicy, ConnectionFailed
from .clock import Clock
from .discovery import DiscoveredSet, Fetcher, FetchError
from .scheduler import DEFAULT_PACING, LinkResult, RunBudget, RunReport, StopReason, Submitter, shuffle
from .store import StoreSnapshot, record_submission
from .urls import LinkClass, NormalizedUrl

log = logging.getLogger(__name__)

DEFAULT_VOLATILE_PATTERNS = (
    r"""\snonce=(["'])[^"']*\1""",
    r"""<meta\b[^>]*csrf[^>]*>""",
    r"""<input\b[^>]*\bname=(["'])[^"']*(?:csrf|nonce|token)[^"']*\1[^>]*>""",
    r"""_wpnonce=[0-9a-fA-F]+""",
    r"""<meta\b[^>]*(?:modified_time|published_time|updated_time|timestamp|generated|\bdate\b)[^>]*>""",
)

_SCRIPT_STYLE = re.compile(r"<(script|style)\b[^>]*>.*?</\1\s*>", re.IGNORECASE | re.DOTALL)
_WHITESPACE = re.compile(r"\s+")


class DigestMode(str, enum.Enum):
    RAW = "raw"
    CANONICAL = "canonical"


def compile_patterns(patterns: Iterable[str | Pattern[str]]) -> list[Pattern[str]]:
    return [p if isinstance(p, re.Pattern) else re.compile(p, re.IGNORECASE) for p in patterns]


_DEFAULT_COMPILED = compile_patterns(DEFAULT_VOLATILE_PATTERNS)


def canonicalize(content: bytes, volatile: Sequence[Pattern[str]] | None = None) -> str:
    text = content.decode("utf-8", errors="replace")
    text = _SCRIPT_STYLE.sub(lambda m: f"<{m.group(1).lower()}>", text)
    for pattern in _DEFAULT_COMPILED if volatile is None else volatile:
        text = pattern.sub("", text)
    return _WHITESPACE.sub(" ", text).strip()


def digest(content: bytes, mode: DigestMode = DigestMode.RAW, volatile: Sequence[Pattern[str]] | None = None) -> str:
    """SHA-256 hex digest of the exact bytes, or of the canonical text.

    Canonical form drops script/style bodies and volatile fragments (nonces,
    CSRF tokens, timestamp meta tags) and collapses whitespace, so a CMS
    rotating its tokens does not count as a change.
    """
    if mode is DigestMode.RAW:
        return hashlib.sha256(content).hexdigest()
    return hashlib.sha256(canonicalize(content, volatile).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class New:
    pass


@dataclass(frozen=True)
class NoChange:
    pass


@dataclass(frozen=True)
class Changed:
    old_digest: str
    new_digest: str

    def __post_init__(self):
        if self.old_digest == self.new_digest:
            raise ValueError("Changed requires differing digests")


ChangeDecision = New | NoChange | Changed


def compare(stored: str | None, new: str) -> ChangeDecision:
    if stored is None:
        return New()
    if stored == new:
        return NoChange()
    return Changed(stored, new)


def decide(url: NormalizedUrl | str, new_digest: str, store: StoreSnapshot) -> ChangeDecision:
    rec = store.get(url)
    return compare(rec.last_digest if rec else None, new_digest)


def media_validator(headers) -> str | None:
    """Cheap change signal for media from HEAD metadata, if the server gives any."""
    length = headers.get("Content-Length")
    modified = headers.get("Last-Modified")
    etag = headers.get("ETag")
    if not (modified or etag):
        return None
    return f"length={length or ''};last-modified={modified or ''};etag={etag or ''}"


def proactive_pass(
    links: DiscoveredSet,
    fetcher: Fetcher,
    store: StoreSnapshot,
    client: Submitter,
    budget: RunBudget,
    clock: Clock,
    pacing: float = DEFAULT_PACING,
    rng_seed: int | None = None,
    volatile: Sequence[Pattern[str]] | None = None,
    backoff: BackoffPolicy | None = None,
    on_result: Callable[[LinkResult], None] | None = None,
) -> RunReport:
    """Submit only new or changed entries, in shuffled order, within budget.

    Stored digests move forward only after an Accepted submission, so a
    change whose capture failed is retried on the next pass.
    """
    kinds = dict(links.entries)
    order = shuffle(links, rng_seed)
    results: list[LinkResult] = []
    decisions: dict[str, str] = {}
    unchanged = fetch_failures = 0
    stopped_by = StopReason.LIST_EXHAUSTED

    for i, url in enumerate(order):
        link_class = kinds[url]
        rec = store.upsert(url, link_class, clock.now())
        new_digest = new_validator = None
        try:
            if link_class is LinkClass.MEDIA and hasattr(fetcher, "head"):
                head = fetcher.head(url)
                new_validator = media_validator(head.headers) if head.ok else None
            if new_validator is not None:
                decision = compare(rec.media_validator, new_validator)
            else:
                result = fetcher.fetch(url)
                if not result.ok:
                    raise FetchError(url, f"HTTP {result.status_code}")
                mode = DigestMode.CANONICAL if link_class is LinkClass.PAGE else DigestMode.RAW
                new_digest = digest(result.body, mode, volatile)
                decision = decide(url, new_digest, store)
        except FetchError as exc:
            log.warning("cannot check %s: %s", url, exc.cause)
            fetch_failures += 1
            decisions[url.render()] = "FetchFailed"
            decision = None

        if decision is not None:
            decisions[url.render()] = type(decision).__name__
        submitted = False
        if isinstance(decision, NoChange):
            unchanged += 1
        elif decision is not None:
            if backoff is not None and hasattr(client, "submit_with_backoff"):
                outcome = client.submit_with_backoff(url, backoff)
            else:
                outcome = client.submit(url)
            submitted = True
            result_entry = LinkResult(url, outcome, clock.now())
            results.append(result_entry)
            record_submission(store, url, outcome, result_entry.at)
            if isinstance(outcome, Accepted):
                if new_digest is not None:
                    rec.last_digest = new_digest
                if new_validator is not None:
                    rec.media_validator = new_validator
            elif isinstance(outcome, ConnectionFailed):
                log.error("connection error on %s: %s", url, outcome.cause)
            if on_result is not None:
                on_result(result_entry)

        last = i == len(order) - 1
        if budget.exhausted(clock) and not last:
            stopped_by = StopReason.BUDGET_EXHAUSTED
            break
        if submitted and not last:
            clock.sleep(pacing)

    return RunReport.from_results(
        results,
        budget.elapsed(clock),
        stopped_by,
        cutoff=budget.cutoff,
        unchanged=unchanged,
        fetch_failures=fetch_failures,
        decisions=decisions,
    )
