"""Line-oriented JSON store for per-URL history and the run ledger.

Layout, one JSON object per line, UTF-8, LF endings::

    {"kind": "header", "schema_version": 1}
    {"kind": "record", "url": ..., "class": ..., ...}
    {"kind": "run", "run_id": 1, ...}
"""

from __future__ import annotations

import json
import os
import tempfile
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .client import Accepted, SubmissionOutcome, outcome_name
from .urls import LinkClass, NormalizedUrl

SCHEMA_VERSION = 1
DIGEST_ALGORITHM = "sha-256"
REDUNDANCY_BUCKETS = ("0", "1-9", "10-49", "50+")


class CorruptStore(Exception):
    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.offset = offset


class IoFailure(OSError):
    pass


class UnknownUrl(KeyError):
    pass


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is None:
        raise ValueError("timestamps must be timezone-aware")
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp without offset: {text}")
    return ts.astimezone(timezone.utc)


@dataclass
class UrlRecord:
    url: str
    link_class: LinkClass
    first_seen: datetime
    last_submitted: datetime | None = None
    submit_count: int = 0
    last_digest: str | None = None
    digest_algorithm: str = DIGEST_ALGORITHM
    media_validator: str | None = None
    error_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.submit_count < 0:
            raise ValueError("submit_count must be >= 0")
        if (self.last_submitted is None) != (self.submit_count == 0):
            raise ValueError("last_submitted must be set exactly when submit_count > 0")

    def to_json(self) -> dict:
        return {
            "kind": "record",
            "url": self.url,
            "class": self.link_class.value,
            "first_seen": format_timestamp(self.first_seen),
            "last_submitted": format_timestamp(self.last_submitted) if self.last_submitted else None,
            "submit_count": self.submit_count,
            "last_digest": self.last_digest,
            "digest_algorithm": self.digest_algorithm,
            "media_validator": self.media_validator,
            "error_counts": dict(sorted(self.error_counts.items())),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UrlRecord":
        return cls(
            url=obj["url"],
            link_class=LinkClass(obj["class"]),
            first_seen=parse_timestamp(obj["first_seen"]),
            last_submitted=parse_timestamp(obj["last_submitted"]) if obj.get("last_submitted") else None,
            submit_count=int(obj["submit_count"]),
            last_digest=obj.get("last_digest"),
            digest_algorithm=obj.get("digest_algorithm", DIGEST_ALGORITHM),
            media_validator=obj.get("media_validator"),
            error_counts={k: int(v) for k, v in obj.get("error_counts", {}).items()},
        )


@dataclass(frozen=True)
class RunLedgerEntry:
    run_id: int
    started_at: datetime
    wall_duration: float  # seconds, whole invocation
    in_budget_duration: float  # seconds spent inside the submission budget
    attempted: int = 0
    accepted: int = 0
    errors: int = 0
    stopped_by: str = ""
    entry_kind: str = "run"  # run | heartbeat
    mode: str = ""

    def __post_init__(self):
        if self.wall_duration < 0 or self.in_budget_duration < 0:
            raise ValueError("durations must be non-negative")

    @property
    def is_heartbeat(self) -> bool:
        return self.entry_kind == "heartbeat"

    def to_json(self) -> dict:
        return {
            "kind": "run",
            "run_id": self.run_id,
            "entry_kind": self.entry_kind,
            "mode": self.mode,
            "started_at": format_timestamp(self.started_at),
            "wall_duration": self.wall_duration,
            "in_budget_duration": self.in_budget_duration,
            "attempted": self.attempted,
            "accepted": self.accepted,
            "errors": self.errors,
            "stopped_by": self.stopped_by,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunLedgerEntry":
        return cls(
            run_id=int(obj["run_id"]),
            started_at=parse_timestamp(obj["started_at"]),
            wall_duration=float(obj["wall_duration"]),
            in_budget_duration=float(obj["in_budget_duration"]),
            attempted=int(obj.get("attempted", 0)),
            accepted=int(obj.get("accepted", 0)),
            errors=int(obj.get("errors", 0)),
            stopped_by=obj.get("stopped_by", ""),
            entry_kind=obj.get("entry_kind", "run"),
            mode=obj.get("mode", ""),
        )


@dataclass
class StoreSnapshot:
    records: dict[str, UrlRecord] = field(default_factory=dict)
    ledger: list[RunLedgerEntry] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def get(self, url: NormalizedUrl | str) -> UrlRecord | None:
        return self.records.get(_key(url))

    def upsert(self, url: NormalizedUrl | str, link_class: LinkClass, seen_at: datetime) -> UrlRecord:
        key = _key(url)
        rec = self.records.get(key)
        if rec is None:
            rec = self.records[key] = UrlRecord(url=key, link_class=link_class, first_seen=seen_at)
        else:
            rec.link_class = link_class
        return rec

    def next_run_id(self) -> int:
        return max((e.run_id for e in self.ledger), default=0) + 1

    def append_run(self, entry: RunLedgerEntry) -> None:
        if self.ledger and entry.run_id <= self.ledger[-1].run_id:
            raise ValueError(f"run_id {entry.run_id} does not increase past {self.ledger[-1].run_id}")
        self.ledger.append(entry)

    def latest_started_at(self) -> datetime | None:
        return max((e.started_at for e in self.ledger), default=None)


def _key(url: NormalizedUrl | str) -> str:
    return url.render() if isinstance(url, NormalizedUrl) else url


def dumps(snapshot: StoreSnapshot) -> str:
    lines = [json.dumps({"kind": "header", "schema_version": snapshot.schema_version})]
    lines.extend(json.dumps(rec.to_json(), ensure_ascii=False) for rec in snapshot.records.values())
    lines.extend(json.dumps(entry.to_json()) for entry in snapshot.ledger)
    return "\n".join(lines) + "\n"


def loads(text: str) -> StoreSnapshot:
    """Parse store text; any malformed line raises :class:`CorruptStore`."""
    if not text:
        return StoreSnapshot()
    snapshot: StoreSnapshot | None = None
    offset = 0
    # split on LF only: str.splitlines also breaks on U+0085 and friends
    lines = [piece + "\n" for piece in text.split("\n")]
    lines[-1] = lines[-1][:-1]
    if not lines[-1]:
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if not line.endswith("\n"):
            raise CorruptStore("truncated final line", lineno, offset)
        body = line[:-1]
        try:
            obj = json.loads(body)
            if not isinstance(obj, dict):
                raise ValueError("not a JSON object")
            kind = obj.get("kind")
            if lineno == 1:
                if kind != "header":
                    raise ValueError("first line must be the header")
                version = int(obj["schema_version"])
                if version > SCHEMA_VERSION:
                    raise ValueError(f"schema_version {version} is newer than supported {SCHEMA_VERSION}")
                snapshot = StoreSnapshot(schema_version=version)
            elif kind == "record":
                rec = UrlRecord.from_json(obj)
                if rec.url in snapshot.records:
                    raise ValueError(f"duplicate record for {rec.url}")
                snapshot.records[rec.url] = rec
            elif kind == "run":
                snapshot.append_run(RunLedgerEntry.from_json(obj))
            else:
                raise ValueError(f"unknown line kind {kind!r}")
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptStore(f"cannot parse store: {exc}", lineno, offset) from exc
        offset += len(line.encode("utf-8"))
    return snapshot


def load(path: str | os.PathLike) -> StoreSnapshot:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        return StoreSnapshot()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptStore(f"not UTF-8: {exc.reason}", offset=exc.start) from exc
    return loads(text)


def _replace(src: str, dst: Path) -> None:
    os.replace(src, dst)


def save(snapshot: StoreSnapshot, path: str | os.PathLike) -> None:
    """Write the store atomically: temp file in the same directory, fsync, rename."""
    path = Path(path)
    data = dumps(snapshot).encode("utf-8")
    tmp = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        _replace(tmp, path)
        tmp = None
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    finally:
        if tmp is not None:
            try:
                os.unlink(tmp)
            except OSError:
                pass


def record_discovery(store: StoreSnapshot, entries: Iterable[tuple[NormalizedUrl, LinkClass]], at: datetime) -> None:
    for url, link_class in entries:
        store.upsert(url, link_class, at)


def record_submission(store: StoreSnapshot, url: NormalizedUrl | str, outcome: SubmissionOutcome, at: datetime) -> UrlRecord:
    """Count an archival on Accepted; tally anything else as an error."""
    rec = store.get(url)
    if rec is None:
        raise UnknownUrl(_key(url))
    if isinstance(outcome, Accepted):
        rec.submit_count += 1
        rec.last_submitted = at
    else:
        name = outcome_name(outcome)
        rec.error_counts[name] = rec.error_counts.get(name, 0) + 1
    return rec


def redundancy_bucket(submit_count: int) -> str:
    if submit_count == 0:
        return "0"
    if submit_count < 10:
        return "1-9"
    if submit_count < 50:
        return "10-49"
    return "50+"


@dataclass(frozen=True)
class LedgerTotals:
    """Sums over ledger entries. Combine parts with ``+``."""

    runs: int = 0
    heartbeats: int = 0
    wall_seconds: float = 0.0
    in_budget_seconds: float = 0.0
    attempted: int = 0
    accepted: int = 0
    errors: int = 0

    def __add__(self, other: "LedgerTotals") -> "LedgerTotals":
        return LedgerTotals(
            self.runs + other.runs,
            self.heartbeats + other.heartbeats,
            self.wall_seconds + other.wall_seconds,
            self.in_budget_seconds + other.in_budget_seconds,
            self.attempted + other.attempted,
            self.accepted + other.accepted,
            self.errors + other.errors,
        )

    @classmethod
    def of(cls, ledger: Iterable[RunLedgerEntry]) -> "LedgerTotals":
        total = cls()
        for e in ledger:
            if e.is_heartbeat:
                total += cls(heartbeats=1)
            else:
                total += cls(1, 0, e.wall_duration, e.in_budget_duration, e.attempted, e.accepted, e.errors)
        return total

    @property
    def total_wall_hours(self) -> float:
        return self.wall_seconds / 3600

    @property
    def mean_run_hours(self) -> float:
        return self.total_wall_hours / self.runs if self.runs else 0.0


def mean_daily_hours(ledger: Iterable[RunLedgerEntry]) -> float:
    """Average wall hours per UTC calendar day that had at least one run."""
    per_day: dict = defaultdict(float)
    for e in ledger:
        if not e.is_heartbeat:
            per_day[e.started_at.astimezone(timezone.utc).date()] += e.wall_duration / 3600
    return sum(per_day.values()) / len(per_day) if per_day else 0.0


def aggregate_stats(store: StoreSnapshot) -> dict:
    totals = LedgerTotals.of(store.ledger)
    classes = Counter(rec.link_class.value for rec in store.records.values())
    histogram = Counter(redundancy_bucket(rec.submit_count) for rec in store.records.values())
    return {
        "total_runs": totals.runs,
        "heartbeats": totals.heartbeats,
        "total_wall_hours": totals.total_wall_hours,
        "total_in_budget_hours": totals.in_budget_seconds / 3600,
        "mean_run_hours": totals.mean_run_hours,
        "mean_daily_hours": mean_daily_hours(store.ledger),
        "attempted": totals.attempted,
        "accepted": totals.accepted,
        "errors": totals.errors,
        "urls_by_class": {c.value: classes.get(c.value, 0) for c in (LinkClass.PAGE, LinkClass.MEDIA)},
        "redundancy_histogram": {b: histogram.get(b, 0) for b in REDUNDANCY_BUCKETS},
        "over_fifty": sorted(rec.url for rec in store.records.values() if rec.submit_count > 50),
    }
