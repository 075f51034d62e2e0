"""Configuration: defaults < config file < environment < command-line flags.

The config file is flat ``key = value`` text, one setting per line, with
comma-separated lists and ``#`` comments. Environment variables use the
``PROARCHIVER_`` prefix and the upper-cased key, e.g. ``PROARCHIVER_CUTOFF``.
"""

from __future__ import annotations

import dataclasses
import fcntl
import os
import re
from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path
from typing import Any, Callable, Mapping

from .changes import DEFAULT_VOLATILE_PATTERNS, compile_patterns
from .client import DEFAULT_ENDPOINT, BackoffPolicy
from .continuity import ContinuityPolicy
from .discovery import DEFAULT_USER_AGENT
from .scheduler import DEFAULT_CUTOFF, DEFAULT_PACING, PLATFORM_MAX_RUN
from .urls import CrawlPolicy, MalformedUrl, NormalizedUrl, UnsupportedScheme, normalize

ENV_PREFIX = "PROARCHIVER_"
_DURATION_PART = re.compile(r"(\d+(?:\.\d*)?|\.\d+)\s*(d|h|m|s)")


class ConfigError(ValueError):
    pass


class AlreadyRunning(RuntimeError):
    pass


def parse_duration(text: str | float | int) -> float:
    """Seconds from ``"3h55m"``, ``"10s"``, ``"60d"`` or a bare number of seconds."""
    if isinstance(text, (int, float)):
        return float(text)
    s = text.strip().lower()
    try:
        return float(s)
    except ValueError:
        pass
    pos, total = 0, 0.0
    units = {"d": 86400, "h": 3600, "m": 60, "s": 1}
    for m in _DURATION_PART.finditer(s):
        if s[pos : m.start()].strip():
            break
        total += float(m.group(1)) * units[m.group(2)]
        pos = m.end()
    if pos == 0 or s[pos:].strip():
        raise ConfigError(f"cannot parse duration {text!r}")
    return total


def format_duration(seconds: float) -> str:
    seconds = int(round(seconds))
    parts = []
    for unit, size in (("d", 86400), ("h", 3600), ("m", 60)):
        if seconds >= size:
            parts.append(f"{seconds // size}{unit}")
            seconds %= size
    if seconds or not parts:
        parts.append(f"{seconds}s")
    return "".join(parts)


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _list(text: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in text.split(",") if item.strip())


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


def _optional_str(text: str) -> str | None:
    return text.strip() or None


@dataclass(frozen=True)
class Config:
    seed_url: str = ""
    internal_hosts: tuple[str, ...] = ()
    endpoint_base: str = DEFAULT_ENDPOINT
    user_agent: str = DEFAULT_USER_AGENT
    cutoff: float = DEFAULT_CUTOFF
    pacing: float = DEFAULT_PACING
    mode: str = "blind"
    state_path: str = "proarchiver-state.jsonl"
    lock_path: str | None = None
    rng_seed: int | None = None
    # crawl
    media_path_markers: tuple[str, ...] = ("/wp-content/",)
    media_extensions: tuple[str, ...] = tuple(sorted(CrawlPolicy.__dataclass_fields__["media_extensions"].default))
    excluded_extensions: tuple[str, ...] = ("css", "js", "map", "mjs")
    max_pages: int = 50_000
    politeness_delay: float = 1.0
    fetch_timeout: float = 30.0
    robots: str = "warn"
    concurrency: int = 1
    # submission retries
    max_attempts: int = 3
    base_delay: float = 10.0
    multiplier: float = 2.0
    honor_retry_after: bool = True
    # change detection
    volatile_patterns: tuple[str, ...] = DEFAULT_VOLATILE_PATTERNS
    # continuity
    expected_cadence: float = 4 * 3600
    warn_after: float | None = None
    platform_disable_after: float = 60 * 86400
    alarm_margin: float = 7 * 86400
    alert_file: str | None = None

    def __post_init__(self):
        if self.mode not in ("blind", "proactive"):
            raise ConfigError(f"mode must be blind or proactive, not {self.mode!r}")
        if not 0 <= self.cutoff <= PLATFORM_MAX_RUN:
            raise ConfigError(f"cutoff must be between 0 and 6h, got {format_duration(self.cutoff)}")
        if self.pacing < 0:
            raise ConfigError("pacing must be >= 0")
        if self.seed_url:
            try:
                self.seed()
            except (MalformedUrl, UnsupportedScheme) as exc:
                raise ConfigError(f"bad seed_url: {exc}") from exc
        try:
            self.continuity_policy()
            self.backoff_policy()
            compile_patterns(self.volatile_patterns)
            if self.seed_url:
                self.crawl_policy()
        except (ValueError, re.error) as exc:
            raise ConfigError(str(exc)) from exc

    def seed(self) -> NormalizedUrl:
        if not self.seed_url:
            raise ConfigError("seed_url is not configured")
        return normalize(self.seed_url)

    @property
    def hosts(self) -> tuple[str, ...]:
        return self.internal_hosts or (self.seed().host,)

    @property
    def lock(self) -> str:
        return self.lock_path or self.state_path + ".lock"

    def crawl_policy(self) -> CrawlPolicy:
        return CrawlPolicy(
            internal_hosts=frozenset(self.hosts),
            media_path_markers=self.media_path_markers,
            media_extensions=frozenset(self.media_extensions),
            excluded_extensions=frozenset(self.excluded_extensions),
            max_pages=self.max_pages,
            politeness_delay=self.politeness_delay,
            robots=self.robots,
            concurrency=self.concurrency,
        )

    def backoff_policy(self) -> BackoffPolicy:
        return BackoffPolicy(self.max_attempts, self.base_delay, self.multiplier, self.honor_retry_after)

    def continuity_policy(self) -> ContinuityPolicy:
        return ContinuityPolicy(
            expected_cadence=timedelta(seconds=self.expected_cadence),
            warn_after=None if self.warn_after is None else timedelta(seconds=self.warn_after),
            platform_disable_after=timedelta(seconds=self.platform_disable_after),
            alarm_margin=timedelta(seconds=self.alarm_margin),
        )


_CONVERTERS: dict[str, Callable[[str], Any]] = {
    "seed_url": str.strip,
    "internal_hosts": _list,
    "endpoint_base": str.strip,
    "user_agent": str.strip,
    "cutoff": parse_duration,
    "pacing": parse_duration,
    "mode": lambda s: s.strip().lower(),
    "state_path": str.strip,
    "lock_path": _optional_str,
    "rng_seed": _optional_int,
    "media_path_markers": _list,
    "media_extensions": _list,
    "excluded_extensions": _list,
    "max_pages": int,
    "politeness_delay": parse_duration,
    "fetch_timeout": parse_duration,
    "robots": lambda s: s.strip().lower(),
    "concurrency": int,
    "max_attempts": int,
    "base_delay": parse_duration,
    "multiplier": float,
    "honor_retry_after": _bool,
    "volatile_patterns": _list,
    "expected_cadence": parse_duration,
    "warn_after": lambda s: None if s.strip().lower() in ("", "none") else parse_duration(s),
    "platform_disable_after": parse_duration,
    "alarm_margin": parse_duration,
    "alert_file": _optional_str,
}
assert set(_CONVERTERS) == {f.name for f in dataclasses.fields(Config)}


def convert(key: str, raw: str) -> Any:
    if key not in _CONVERTERS:
        raise ConfigError(f"unknown setting {key!r}")
    try:
        return _CONVERTERS[key](raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc


def parse_config_text(text: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip().replace("-", "_")
        values[key] = convert(key, raw)
    return values


def env_values(env: Mapping[str, str]) -> dict[str, Any]:
    out = {}
    for key in _CONVERTERS:
        name = ENV_PREFIX + key.upper()
        if name in env:
            out[key] = convert(key, env[name])
    return out


def load_config(
    config_path: str | os.PathLike | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> Config:
    """Merge every source, highest precedence last, and validate once."""
    values: dict[str, Any] = {}
    if config_path is not None:
        try:
            values.update(parse_config_text(Path(config_path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    values.update(env_values(os.environ if env is None else env))
    for key, value in (overrides or {}).items():
        values[key] = convert(key, value) if isinstance(value, str) else value
    try:
        return Config(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


class RunLock:
    """Exclusive non-blocking ``flock`` on a lock file; released on exit or crash."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._fd: int | None = None

    def acquire(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd = os.open(self.path, os.O_RDWR | os.O_CREAT, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            os.close(fd)
            raise AlreadyRunning(f"another run holds {self.path}") from None
        os.ftruncate(fd, 0)
        os.write(fd, f"{os.getpid()}\n".encode())
        self._fd = fd

    def release(self) -> None:
        if self._fd is not None:
            fcntl.flock(self._fd, fcntl.LOCK_UN)
            os.close(self._fd)
            self._fd = None

    def __enter__(self) -> "RunLock":
        self.acquire()
        return self

    def __exit__(self, *exc) -> None:
        self.release()
