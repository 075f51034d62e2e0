"""URL canonicalization and link classification."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from urllib.parse import urljoin, urlsplit


class MalformedUrl(ValueError):
    pass


class UnsupportedScheme(ValueError):
    pass


class LinkClass(str, enum.Enum):
    PAGE = "page"
    MEDIA = "media"
    EXCLUDED = "excluded"
    EXTERNAL = "external"


_UNRESERVED = frozenset("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-._~")
_PATH_SAFE = _UNRESERVED | frozenset("/:@!$&'()*+,;=")
_QUERY_SAFE = _PATH_SAFE | frozenset("?")
_HEX = frozenset("0123456789abcdefABCDEF")
_HOST_RE = re.compile(r"^[a-z0-9_\-.]+$")
_DEFAULT_PORTS = {"http": 80, "https": 443}


def _normalize_escapes(text: str, safe: frozenset[str]) -> str:
    """Put percent-encoding in a canonical form.

    Escapes of unreserved characters are decoded, remaining escapes are
    upper-cased, and any character outside ``safe`` is encoded as UTF-8.
    A stray ``%`` becomes ``%25``.
    """
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "%" and i + 2 < n and text[i + 1] in _HEX and text[i + 2] in _HEX:
            decoded = chr(int(text[i + 1 : i + 3], 16))
            if decoded in _UNRESERVED:
                out.append(decoded)
            else:
                out.append("%" + text[i + 1 : i + 3].upper())
            i += 3
            continue
        if ch in safe:
            out.append(ch)
        else:
            out.extend(f"%{b:02X}" for b in ch.encode("utf-8", "surrogatepass"))
        i += 1
    return "".join(out)


def remove_dot_segments(path: str) -> str:
    """Collapse ``.`` and ``..`` segments (RFC 3986, 5.2.4)."""
    output: list[str] = []
    inp = path
    while inp:
        if inp.startswith("../"):
            inp = inp[3:]
        elif inp.startswith("./"):
            inp = inp[2:]
        elif inp.startswith("/./"):
            inp = "/" + inp[3:]
        elif inp == "/.":
            inp = "/"
        elif inp.startswith("/../"):
            inp = "/" + inp[4:]
            if output:
                output.pop()
        elif inp == "/..":
            inp = "/"
            if output:
                output.pop()
        elif inp in (".", ".."):
            inp = ""
        else:
            start = 1 if inp.startswith("/") else 0
            nxt = inp.find("/", start)
            if nxt == -1:
                nxt = len(inp)
            output.append(inp[:nxt])
            inp = inp[nxt:]
    return "".join(output)


@dataclass(frozen=True)
class NormalizedUrl:
    scheme: str
    host: str
    path: str = "/"
    query: str | None = None
    port: int | None = None

    def __str__(self) -> str:
        return self.render()

    def render(self) -> str:
        host = f"[{self.host}]" if ":" in self.host else self.host
        netloc = host if self.port is None else f"{host}:{self.port}"
        text = f"{self.scheme}://{netloc}{self.path}"
        if self.query is not None:
            text += "?" + self.query
        return text

    @property
    def extension(self) -> str:
        """Lower-cased suffix of the final path segment, or ``""``."""
        segment = self.path.rsplit("/", 1)[-1]
        if "." not in segment:
            return ""
        return segment.rsplit(".", 1)[-1].lower()

    @classmethod
    def parse(cls, text: str) -> "NormalizedUrl":
        """Normalize an absolute URL string."""
        return normalize(text, None)


def normalize(raw: str, base: NormalizedUrl | str | None = None) -> NormalizedUrl:
    """Resolve ``raw`` against ``base`` and canonicalize it.

    Fragments are dropped, scheme and host lower-cased, dot segments
    collapsed, default ports removed. Query strings are kept. Scheme-relative
    links inherit the scheme of ``base``.
    """
    raw = (raw or "").split("#", 1)[0].strip()
    if not raw:
        raise MalformedUrl("empty URL")
    try:
        scheme = urlsplit(raw).scheme.lower()
    except ValueError as exc:
        raise MalformedUrl(f"{raw!r}: {exc}") from exc
    if scheme and scheme not in _DEFAULT_PORTS:
        raise UnsupportedScheme(f"{scheme}: {raw!r}")

    if base is not None:
        base_text = base.render() if isinstance(base, NormalizedUrl) else base
        try:
            joined = urljoin(base_text, raw)
        except ValueError as exc:
            raise MalformedUrl(f"{raw!r}: {exc}") from exc
    else:
        joined = raw

    try:
        parts = urlsplit(joined)
        port = parts.port
    except ValueError as exc:
        raise MalformedUrl(f"{raw!r}: {exc}") from exc

    scheme = parts.scheme.lower()
    if not scheme:
        raise MalformedUrl(f"relative URL without base: {raw!r}")
    if scheme not in _DEFAULT_PORTS:
        raise UnsupportedScheme(f"{scheme}: {raw!r}")

    host = (parts.hostname or "").lower()
    if not host:
        raise MalformedUrl(f"no host in {raw!r}")
    if ":" not in host and not _HOST_RE.match(host):
        raise MalformedUrl(f"unsupported host {host!r}")
    if port == _DEFAULT_PORTS[scheme]:
        port = None

    path = remove_dot_segments(_normalize_escapes(parts.path or "/", _PATH_SAFE))
    if not path.startswith("/"):
        path = "/" + path

    query: str | None = None
    if parts.query:
        query = _normalize_escapes(parts.query, _QUERY_SAFE)

    return NormalizedUrl(scheme=scheme, host=host, path=path, query=query, port=port)


@dataclass(frozen=True)
class CrawlPolicy:
    internal_hosts: frozenset[str]
    media_path_markers: tuple[str, ...] = ("/wp-content/",)
    media_extensions: frozenset[str] = frozenset(
        {"jpg", "jpeg", "png", "gif", "webp", "pdf", "doc", "docx", "ppt", "pptx", "mp4"}
    )
    excluded_extensions: frozenset[str] = frozenset({"css", "js", "mjs", "map"})
    max_pages: int = 50_000
    politeness_delay: float = 1.0
    robots: str = "warn"  # ignore | warn | respect
    concurrency: int = 1
    _expanded_hosts: frozenset[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        hosts = frozenset(h.strip().lower() for h in self.internal_hosts if h.strip())
        if not hosts:
            raise ValueError("internal_hosts must not be empty")
        media = frozenset(e.lower().lstrip(".") for e in self.media_extensions)
        excluded = frozenset(e.lower().lstrip(".") for e in self.excluded_extensions)
        if media & excluded:
            raise ValueError(f"extensions both media and excluded: {sorted(media & excluded)}")
        if self.max_pages < 1:
            raise ValueError("max_pages must be positive")
        if self.politeness_delay < 0:
            raise ValueError("politeness_delay must be >= 0")
        if self.robots not in ("ignore", "warn", "respect"):
            raise ValueError(f"robots must be ignore, warn or respect, not {self.robots!r}")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        expanded = set(hosts)
        for h in hosts:
            expanded.add(h[4:] if h.startswith("www.") else "www." + h)
        object.__setattr__(self, "internal_hosts", hosts)
        object.__setattr__(self, "media_extensions", media)
        object.__setattr__(self, "excluded_extensions", excluded)
        object.__setattr__(self, "media_path_markers", tuple(self.media_path_markers))
        object.__setattr__(self, "_expanded_hosts", frozenset(expanded))


def classify(url: NormalizedUrl, policy: CrawlPolicy) -> LinkClass:
    # precedence: External > ExcludedResource > Media > Page
    if url.host not in policy._expanded_hosts:
        return LinkClass.EXTERNAL
    ext = url.extension
    if ext in policy.excluded_extensions:
        return LinkClass.EXCLUDED
    if ext in policy.media_extensions or any(m in url.path for m in policy.media_path_markers):
        return LinkClass.MEDIA
    return LinkClass.PAGE


def is_internal(url: NormalizedUrl, policy: CrawlPolicy) -> bool:
    return classify(url, policy) is not LinkClass.EXTERNAL
