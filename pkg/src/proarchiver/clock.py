"""Injectable clocks so every timing rule can be tested without sleeping."""

from __future__ import annotations

import threading
import time
from datetime import datetime, timedelta, timezone
from typing import Protocol


class Clock(Protocol):
    def monotonic(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...

    def now(self) -> datetime: ...


class SystemClock:
    def monotonic(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class SimulatedClock:
    """A clock that only moves when told to.

    ``sleep`` advances time instantly, which is how the test doubles model
    network latency.
    """

    def __init__(self, start: datetime | None = None):
        self.start = start or datetime(2026, 1, 15, tzinfo=timezone.utc)
        self._t = 0.0
        self._lock = threading.Lock()

    def monotonic(self) -> float:
        return self._t

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            self.advance(seconds)

    def advance(self, seconds: float) -> None:
        with self._lock:
            self._t += seconds

    def now(self) -> datetime:
        return self.start + timedelta(seconds=self._t)
