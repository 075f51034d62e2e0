"""Breadth-first discovery of a site's internal links."""

from __future__ import annotations

import html
import logging
import re
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Protocol
from urllib import robotparser

import requests

from . import __version__
from .clock import Clock, SystemClock
from .urls import CrawlPolicy, LinkClass, MalformedUrl, NormalizedUrl, UnsupportedScheme, classify, normalize

log = logging.getLogger(__name__)

DEFAULT_USER_AGENT = f"proarchiver/{__version__} (site preservation crawler)"
MAX_REDIRECTS = 10
REDIRECT_STATUSES = frozenset({301, 302, 303, 307, 308})

# a quoted string that starts like an absolute, scheme-relative or root-relative URL
_QUOTED_LINK = re.compile(r""""((?:https?://|/)[^"\n]*)"|'((?:https?://|/)[^'\n]*)'""")


class FetchError(Exception):
    """Transport-level failure: DNS, refused connection, timeout, redirect loop."""

    def __init__(self, url: NormalizedUrl, cause: str):
        super().__init__(f"{url}: {cause}")
        self.url = url
        self.cause = cause


class SeedUnreachable(Exception):
    pass


@dataclass(frozen=True)
class FetchResult:
    requested: NormalizedUrl
    final_url: NormalizedUrl
    status_code: int
    body: bytes
    fetched_at: datetime
    # URLs that answered with a redirect, in the order they were visited
    redirect_chain: tuple[NormalizedUrl, ...] = ()
    headers: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 100 <= self.status_code <= 599:
            raise ValueError(f"status code out of range: {self.status_code}")
        if bool(self.redirect_chain) != (self.requested != self.final_url):
            raise ValueError("redirect_chain must be empty exactly when no redirect happened")

    @property
    def ok(self) -> bool:
        return self.status_code < 400


class Fetcher(Protocol):
    def fetch(self, url: NormalizedUrl) -> FetchResult: ...


class HttpFetcher:
    """GET pages over HTTP with manual redirect tracking and per-host pacing."""

    def __init__(
        self,
        user_agent: str = DEFAULT_USER_AGENT,
        timeout: float = 30.0,
        politeness_delay: float = 1.0,
        max_redirects: int = MAX_REDIRECTS,
        clock: Clock | None = None,
        session: requests.Session | None = None,
    ):
        self.user_agent = user_agent
        self.timeout = timeout
        self.politeness_delay = politeness_delay
        self.max_redirects = max_redirects
        self.clock = clock or SystemClock()
        self.session = session or requests.Session()
        self.session.headers.update({"User-Agent": user_agent, "Accept-Encoding": "gzip, deflate"})
        self._next_slot: dict[str, float] = {}
        self._lock = threading.Lock()
        self.request_log: list[tuple[float, str, str]] = []  # (monotonic time, method, url)

    def _wait_turn(self, host: str) -> None:
        with self._lock:
            now = self.clock.monotonic()
            slot = max(now, self._next_slot.get(host, now))
            self._next_slot[host] = slot + self.politeness_delay
        self.clock.sleep(slot - now)

    def _request(self, method: str, url: NormalizedUrl) -> FetchResult:
        chain: list[NormalizedUrl] = []
        current = url
        deadline = self.clock.monotonic() + self.timeout
        while True:
            self._wait_turn(current.host)
            self.request_log.append((self.clock.monotonic(), method, current.render()))
            try:
                resp = self.session.request(
                    method,
                    current.render(),
                    allow_redirects=False,
                    timeout=self.timeout,
                    stream=True,
                )
                body = b""
                if method == "GET" and resp.status_code not in REDIRECT_STATUSES:
                    chunks = []
                    for chunk in resp.iter_content(64 * 1024):
                        chunks.append(chunk)
                        if self.clock.monotonic() > deadline:
                            raise FetchError(url, f"exceeded {self.timeout}s total timeout")
                    body = b"".join(chunks)
                resp.close()
            except requests.RequestException as exc:
                raise FetchError(url, f"{type(exc).__name__}: {exc}") from exc

            location = resp.headers.get("Location")
            if resp.status_code in REDIRECT_STATUSES and location:
                try:
                    target = normalize(location, current)
                except (MalformedUrl, UnsupportedScheme) as exc:
                    raise FetchError(url, f"bad redirect target {location!r}: {exc}") from exc
                chain.append(current)
                if len(chain) > self.max_redirects:
                    raise FetchError(url, f"more than {self.max_redirects} redirects")
                current = target
                continue

            return FetchResult(
                requested=url,
                final_url=current,
                status_code=resp.status_code,
                body=body,
                fetched_at=self.clock.now(),
                redirect_chain=tuple(chain) if current != url else (),
                headers=dict(resp.headers),
            )

    def fetch(self, url: NormalizedUrl) -> FetchResult:
        return self._request("GET", url)

    def head(self, url: NormalizedUrl) -> FetchResult:
        return self._request("HEAD", url)


def extract_candidate_links(page_source: bytes) -> list[str]:
    """Return quoted substrings that look like links, in order of appearance.

    This is deliberately not an HTML parse: anything between matching quotes
    that starts with ``http://``, ``https://``, ``//`` or ``/`` counts, so
    links inside inline scripts and styles are found as well.
    """
    if not page_source or b"\x00" in page_source[:1024]:
        return []
    text = page_source.decode("utf-8", errors="replace")
    return [m.group(1) if m.group(1) is not None else m.group(2) for m in _QUOTED_LINK.finditer(text)]


@dataclass(frozen=True)
class DiscoveredSet:
    seed: NormalizedUrl
    entries: tuple[tuple[NormalizedUrl, LinkClass], ...]
    discovered_at: datetime
    excluded: frozenset[NormalizedUrl] = frozenset()
    external: frozenset[NormalizedUrl] = frozenset()
    failures: tuple[tuple[NormalizedUrl, str], ...] = ()
    redirects: tuple[FetchResult, ...] = ()
    robots_disallowed: tuple[NormalizedUrl, ...] = ()
    fetch_count: int = 0
    truncated: bool = False
    elapsed: float = 0.0

    def __post_init__(self):
        urls = [u for u, _ in self.entries]
        if len(set(urls)) != len(urls):
            raise ValueError("duplicate entries in discovered set")
        if any(c in (LinkClass.EXCLUDED, LinkClass.EXTERNAL) for _, c in self.entries):
            raise ValueError("discovered set may only hold pages and media")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, url: object) -> bool:
        return any(u == url for u, _ in self.entries)

    @property
    def urls(self) -> list[NormalizedUrl]:
        return [u for u, _ in self.entries]

    def count(self, link_class: LinkClass) -> int:
        if link_class is LinkClass.EXCLUDED:
            return len(self.excluded)
        if link_class is LinkClass.EXTERNAL:
            return len(self.external)
        return sum(1 for _, c in self.entries if c is link_class)

    def of_class(self, link_class: LinkClass) -> list[NormalizedUrl]:
        return [u for u, c in self.entries if c is link_class]


class _Robots:
    """Lazily fetched robots.txt rules per host."""

    def __init__(self, fetcher: Fetcher, user_agent: str):
        self.fetcher = fetcher
        self.user_agent = user_agent
        self._parsers: dict[tuple[str, str, int | None], robotparser.RobotFileParser | None] = {}

    def allowed(self, url: NormalizedUrl) -> bool:
        key = (url.scheme, url.host, url.port)
        if key not in self._parsers:
            robots_url = NormalizedUrl(url.scheme, url.host, "/robots.txt", None, url.port)
            parser = None
            try:
                result = self.fetcher.fetch(robots_url)
                if result.status_code == 200:
                    parser = robotparser.RobotFileParser()
                    parser.parse(result.body.decode("utf-8", errors="replace").splitlines())
            except FetchError:
                pass
            self._parsers[key] = parser
        parser = self._parsers[key]
        return parser is None or parser.can_fetch(self.user_agent, url.render())


def _fetch(fetcher: Fetcher, url: NormalizedUrl) -> FetchResult | FetchError:
    try:
        return fetcher.fetch(url)
    except FetchError as exc:
        return exc


def discover(
    seed: NormalizedUrl,
    fetcher: Fetcher,
    policy: CrawlPolicy,
    clock: Clock | None = None,
    seed_attempts: int = 3,
) -> DiscoveredSet:
    """Collect the archival target set reachable from ``seed``.

    Pages are fetched in FIFO order and mined for quoted links. Media links
    go straight into the result without being fetched, stylesheets and
    scripts are dropped, and pages are queued unless already collected.
    Each fetched page joins the result after its links are processed.

    Only an unreachable seed is fatal; other fetch failures are logged and
    skipped.
    """
    clock = clock or SystemClock()
    started = clock.monotonic()
    if classify(seed, policy) is not LinkClass.PAGE:
        raise ValueError(f"seed {seed} is not a page under this policy")

    found: dict[NormalizedUrl, LinkClass] = {}
    excluded: set[NormalizedUrl] = set()
    external: set[NormalizedUrl] = set()
    failures: list[tuple[NormalizedUrl, str]] = []
    redirects: list[FetchResult] = []
    disallowed: list[NormalizedUrl] = []
    fetch_count = 0
    truncated = False
    robots = None
    if policy.robots != "ignore":
        robots = _Robots(fetcher, getattr(fetcher, "user_agent", "*"))

    def room(reserve: int = 0) -> bool:
        return len(found) + reserve < policy.max_pages

    # the seed is fetched on its own, with retries
    seed_result: FetchResult | FetchError = FetchError(seed, "not attempted")
    for attempt in range(1, seed_attempts + 1):
        seed_result = _fetch(fetcher, seed)
        fetch_count += 1
        if isinstance(seed_result, FetchResult) and seed_result.ok:
            break
        log.warning("seed fetch attempt %d/%d failed: %s", attempt, seed_attempts, _describe(seed_result))
    else:
        raise SeedUnreachable(f"{seed}: {_describe(seed_result)}")

    queue: deque[NormalizedUrl] = deque()
    pending: list[tuple[NormalizedUrl, FetchResult | FetchError]] = [(seed, seed_result)]
    executor = ThreadPoolExecutor(policy.concurrency) if policy.concurrency > 1 else None
    try:
        while pending:
            for u, result in pending:
                if not room():
                    truncated = True
                    break
                if isinstance(result, FetchError) or not result.ok:
                    cause = _describe(result)
                    log.warning("skipping %s: %s", u, cause)
                    failures.append((u, cause))
                    continue
                if result.redirect_chain:
                    redirects.append(result)
                final_class = classify(result.final_url, policy)
                if final_class is LinkClass.PAGE:
                    for raw in extract_candidate_links(result.body):
                        try:
                            v = normalize(html.unescape(raw), result.final_url)
                        except (MalformedUrl, UnsupportedScheme):
                            continue
                        cls = classify(v, policy)
                        if cls is LinkClass.MEDIA:
                            if v not in found:
                                if room(reserve=1):
                                    found[v] = cls
                                else:
                                    truncated = True
                        elif cls is LinkClass.PAGE:
                            if v not in found:
                                queue.append(v)
                        elif cls is LinkClass.EXCLUDED:
                            excluded.add(v)
                        else:
                            external.add(v)
                elif final_class is LinkClass.EXTERNAL:
                    log.info("%s redirects off-site to %s; branch ends", u, result.final_url)
                found.setdefault(u, LinkClass.PAGE)
                if final_class in (LinkClass.PAGE, LinkClass.MEDIA) and result.final_url not in found:
                    if room():
                        found[result.final_url] = final_class
                    else:
                        truncated = True
            pending = []
            if not room():
                truncated = truncated or bool(_unvisited(queue, found))
                break

            batch: list[NormalizedUrl] = []
            while queue and len(batch) < policy.concurrency:
                u = queue.popleft()
                if u in found or u in batch:
                    continue
                if robots is not None and not robots.allowed(u):
                    disallowed.append(u)
                    if policy.robots == "respect":
                        log.info("robots.txt disallows %s; skipped", u)
                        continue
                    log.warning("robots.txt disallows %s; fetching anyway", u)
                batch.append(u)
            if executor is not None and len(batch) > 1:
                results = list(executor.map(lambda x: _fetch(fetcher, x), batch))
            else:
                results = [_fetch(fetcher, u) for u in batch]
            fetch_count += len(batch)
            pending = list(zip(batch, results))
    finally:
        if executor is not None:
            executor.shutdown()

    if truncated:
        log.warning("discovery stopped at max_pages=%d; some links were not collected", policy.max_pages)
    return DiscoveredSet(
        seed=seed,
        entries=tuple(found.items()),
        discovered_at=clock.now(),
        excluded=frozenset(excluded),
        external=frozenset(external),
        failures=tuple(failures),
        redirects=tuple(redirects),
        robots_disallowed=tuple(disallowed),
        fetch_count=fetch_count,
        truncated=truncated,
        elapsed=clock.monotonic() - started,
    )


def _unvisited(queue: Iterable[NormalizedUrl], found: dict) -> list[NormalizedUrl]:
    return [u for u in queue if u not in found]


def _describe(result: FetchResult | FetchError) -> str:
    if isinstance(result, FetchError):
        return result.cause
    return f"HTTP {result.status_code}"
