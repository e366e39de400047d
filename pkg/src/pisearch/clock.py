"""Injectable clocks so steering/timeout behavior is testable in milliseconds."""

from __future__ import annotations

import time


class SystemClock:
    """Wall clock, seconds since the epoch."""

    def now(self) -> float:
        return time.time()


class SimulatedClock:
    """Manually advanced clock for deterministic runs and tests."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        self._now += seconds

    def set(self, value: float) -> None:
        if value < self._now:
            raise ValueError("cannot move a clock backwards")
        self._now = float(value)
