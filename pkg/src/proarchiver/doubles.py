"""Hermetic stand-ins for the crawled site and the save endpoint.

``MemoryFetcher`` and ``ScriptedClient`` work on a simulated clock with no
sockets. ``LocalSite`` and ``SaveEndpointDouble`` are real HTTP servers on
127.0.0.1 for end-to-end runs (``--endpoint http://127.0.0.1:PORT``).
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterable

from .client import (
    Accepted,
    BackoffPolicy,
    ConnectionFailed,
    SubmissionOutcome,
    outcome_for_response,
    retry_submit,
)
from .clock import Clock, SimulatedClock
from .discovery import FetchError, FetchResult
from .urls import NormalizedUrl, normalize


@dataclass
class Resource:
    body: bytes = b""
    status: int = 200
    content_type: str = "text/html; charset=utf-8"
    headers: dict[str, str] = field(default_factory=dict)


@dataclass
class SiteFixture:
    """A site as a mapping of URL text to resource, plus redirects."""

    resources: dict[str, Resource] = field(default_factory=dict)
    redirects: dict[str, str] = field(default_factory=dict)
    unreachable: set[str] = field(default_factory=set)

    def page(self, url: str, html: str) -> None:
        self.resources[normalize(url).render()] = Resource(html.encode("utf-8"))

    def media(self, url: str, body: bytes = b"\x89PNG\r\n\x1a\n\x00\x00", content_type: str = "image/png", **headers) -> None:
        self.resources[normalize(url).render()] = Resource(body, content_type=content_type, headers=dict(headers))

    def lookup(self, url: str) -> Resource | None:
        return self.resources.get(url)


def micro_site(origin: str = "https://school.example") -> SiteFixture:
    """Twelve distinct URLs: 6 pages, 3 wp-content media, 2 css/js, 1 external.

    Every page links back to the seed. Links come in absolute, root-relative
    and scheme-relative form, some with fragments, all quoted.
    """
    o = origin.rstrip("/")
    host_part = o.split("://", 1)[1]
    site = SiteFixture()
    nav = '<a href="/">Home</a>'
    site.page(
        f"{o}/",
        f"""<html><head>
<link rel="stylesheet" href="/wp-content/themes/school/style.css">
<script src='{o}/wp-includes/js/site.js'></script>
</head><body>
<a href="/about">About</a>
<a href="{o}/news#latest">News</a>
<a href="//{host_part}/gallery">Gallery</a>
<a href='/staff'>Staff</a>
<a href="/contact">Contact</a>
<img src="/wp-content/uploads/2025/01/building.jpg">
<img src='{o}/wp-content/uploads/2025/01/principal.png'>
<a href="/wp-content/uploads/2024/prospectus.pdf">Prospectus</a>
<a href="https://other-site.example/page">Elsewhere</a>
<a href="mailto:office@example.org">Mail</a>
</body></html>""",
    )
    site.page(f"{o}/about", f"<html><body>{nav}<p>History of the school.</p></body></html>")
    site.page(f"{o}/news", f'<html><body>{nav}<a href="/news#top">Top</a> <a href="/gallery">Gallery</a></body></html>')
    site.page(f"{o}/gallery", f'<html><body>{nav}<img src="/wp-content/uploads/2025/01/building.jpg"></body></html>')
    site.page(f"{o}/staff", f'<html><body><a href="{o}/">Home</a><a href="/about">About</a></body></html>')
    site.page(f"{o}/contact", f"<html><body>{nav}<p>12 College Road</p></body></html>")
    site.media(f"{o}/wp-content/uploads/2025/01/building.jpg")
    site.media(f"{o}/wp-content/uploads/2025/01/principal.png")
    site.media(f"{o}/wp-content/uploads/2024/prospectus.pdf", b"%PDF-1.4\n", "application/pdf")
    site.resources[normalize(f"{o}/wp-content/themes/school/style.css").render()] = Resource(b"body{}", content_type="text/css")
    site.resources[normalize(f"{o}/wp-includes/js/site.js").render()] = Resource(b"var a;", content_type="text/javascript")
    return site


def flat_site(origin: str, n_pages: int, version: dict[int, int] | None = None) -> SiteFixture:
    """Seed plus ``n_pages - 1`` leaf pages; ``version`` bumps a page's content."""
    o = origin.rstrip("/")
    version = version or {}
    site = SiteFixture()
    links = "".join(f'<a href="/p{i}">p{i}</a>' for i in range(1, n_pages))
    site.page(f"{o}/", f"<html><body>{links}<p>v{version.get(0, 0)}</p></body></html>")
    for i in range(1, n_pages):
        site.page(f"{o}/p{i}", f'<html><body><a href="/">home</a><p>page {i} v{version.get(i, 0)}</p></body></html>')
    return site


class MemoryFetcher:
    """Serves a :class:`SiteFixture` without sockets and logs every request."""

    def __init__(self, site: SiteFixture, clock: Clock | None = None, latency: float = 0.0, politeness_delay: float = 0.0):
        self.site = site
        self.clock = clock or SimulatedClock()
        self.latency = latency
        self.politeness_delay = politeness_delay
        self.user_agent = "proarchiver-test"
        self.requests: list[str] = []
        self.request_times: list[tuple[str, float]] = []
        self._next_slot: dict[str, float] = {}
        self._lock = threading.Lock()

    def _wait_turn(self, host: str) -> None:
        with self._lock:
            now = self.clock.monotonic()
            slot = max(now, self._next_slot.get(host, now))
            self._next_slot[host] = slot + self.politeness_delay
        self.clock.sleep(slot - now)

    def _serve(self, url: NormalizedUrl, with_body: bool) -> FetchResult:
        chain: list[NormalizedUrl] = []
        current = url
        while True:
            text = current.render()
            self._wait_turn(current.host)
            with self._lock:
                self.requests.append(text)
                self.request_times.append((text, self.clock.monotonic()))
            self.clock.sleep(self.latency)
            if text in self.site.unreachable:
                raise FetchError(url, "connection refused")
            if text in self.site.redirects:
                chain.append(current)
                if len(chain) > 10:
                    raise FetchError(url, "too many redirects")
                current = normalize(self.site.redirects[text], current)
                continue
            res = self.site.lookup(text) or Resource(b"not found", status=404)
            headers = {"Content-Type": res.content_type, "Content-Length": str(len(res.body)), **res.headers}
            return FetchResult(
                requested=url,
                final_url=current,
                status_code=res.status,
                body=res.body if with_body else b"",
                fetched_at=self.clock.now(),
                redirect_chain=tuple(chain) if current != url else (),
                headers=headers,
            )

    def fetch(self, url: NormalizedUrl) -> FetchResult:
        return self._serve(url, True)

    def head(self, url: NormalizedUrl) -> FetchResult:
        return self._serve(url, False)


Step = SubmissionOutcome | Callable[[NormalizedUrl], SubmissionOutcome]


class ScriptedClient:
    """Archive client double: replays scripted outcomes, then a default.

    Each submit costs ``latency`` seconds on the clock.
    """

    def __init__(
        self,
        script: Iterable[Step] = (),
        clock: Clock | None = None,
        latency: float = 0.0,
        default: Step | None = None,
    ):
        self.script: deque[Step] = deque(script)
        self.clock = clock or SimulatedClock()
        self.latency = latency
        self.default = default if default is not None else Accepted("/web/20260115000000/")
        self.submitted: list[NormalizedUrl] = []

    def submit(self, url: NormalizedUrl) -> SubmissionOutcome:
        self.submitted.append(url)
        self.clock.sleep(self.latency)
        step = self.script.popleft() if self.script else self.default
        return step(url) if callable(step) else step

    def submit_with_backoff(self, url: NormalizedUrl, policy: BackoffPolicy) -> SubmissionOutcome:
        return retry_submit(self.submit, url, policy, self.clock)


def status_client(statuses: Iterable[int | str], **kwargs) -> ScriptedClient:
    """Scripted client from raw HTTP statuses, mapped like the real client."""
    steps: list[Step] = []
    for s in statuses:
        if s == "connection-error":
            steps.append(ConnectionFailed("scripted connection error"))
        else:
            steps.append(outcome_for_response(int(s), {}))
    return ScriptedClient(steps, **kwargs)


class _QuietServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True


class _ServerBase:
    def __init__(self):
        self.server: _QuietServer | None = None
        self.thread: threading.Thread | None = None

    def _handler(self) -> type[BaseHTTPRequestHandler]:
        raise NotImplementedError

    @property
    def port(self) -> int:
        assert self.server is not None
        return self.server.server_address[1]

    @property
    def origin(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self):
        self.server = _QuietServer(("127.0.0.1", 0), self._handler())
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        return self

    def stop(self) -> None:
        if self.server is not None:
            self.server.shutdown()
            self.server.server_close()
            self.server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class LocalSite(_ServerBase):
    """Serve a fixture over HTTP; resources are keyed by path and query."""

    def __init__(self, build: Callable[[str], SiteFixture]):
        super().__init__()
        self.build = build
        self.site: SiteFixture | None = None
        self.request_log: list[tuple[str, str]] = []  # (method, raw request target)

    def start(self):
        super().start()
        self.site = self.build(self.origin)
        return self

    def _handler(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _respond(self, with_body: bool):
                outer.request_log.append((self.command, self.path))
                url = normalize(outer.origin + self.path).render()
                site = outer.site
                if url in site.redirects:
                    self.send_response(301)
                    self.send_header("Location", site.redirects[url])
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                    return
                res = site.lookup(url) or Resource(b"not found", status=404, content_type="text/plain")
                self.send_response(res.status)
                self.send_header("Content-Type", res.content_type)
                self.send_header("Content-Length", str(len(res.body)))
                for k, v in res.headers.items():
                    self.send_header(k, v)
                self.end_headers()
                if with_body:
                    self.wfile.write(res.body)

            def do_GET(self):
                self._respond(True)

            def do_HEAD(self):
                self._respond(False)

        return Handler


class SaveEndpointDouble(_ServerBase):
    """Local ``/save/`` endpoint that logs raw request targets.

    ``script`` entries are consumed one per request: an int status, a
    ``(status, headers)`` pair, or ``"drop"`` to close the socket without
    answering. After the script runs out every request gets 200.
    """

    def __init__(self, script: Iterable[int | tuple[int, dict] | str] = ()):
        super().__init__()
        self.script = deque(script)
        self.paths: list[str] = []
        self._lock = threading.Lock()

    @property
    def saved_urls(self) -> list[str]:
        return [p[len("/save/") :] for p in self.paths if p.startswith("/save/")]

    def _handler(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_GET(self):
                with outer._lock:
                    outer.paths.append(self.path)
                    step = outer.script.popleft() if outer.script else 200
                if step == "drop":
                    self.close_connection = True
                    self.wfile.flush()
                    self.connection.shutdown(2)
                    return
                status, headers = step if isinstance(step, tuple) else (step, {})
                if 200 <= status < 300 and "Content-Location" not in headers:
                    headers = {**headers, "Content-Location": "/web/20260115000000/" + self.path[len("/save/") :]}
                body = b"" if status < 200 or status in (204, 304) else b"ok"
                self.send_response(status)
                for k, v in headers.items():
                    self.send_header(k, v)
                if body or status >= 200:
                    self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                if body:
                    self.wfile.write(body)

        return Handler
