"""Deterministic discrete-event core.

Time is integer nanoseconds. Events execute in (time, seq) order where seq
is a global admission counter, so equal-time events run in scheduling order
and two runs of the same scenario replay identically.
"""

from __future__ import annotations

import heapq
from typing import Callable


class SimulationError(AssertionError):
    """Internal consistency violation; aborts the run."""


class Engine:
    def __init__(self) -> None:
        self.now = 0
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0
        self.executed = 0

    def at(self, time_ns: int, action: Callable[[], None]) -> None:
        if time_ns < self.now:
            raise SimulationError(f"event scheduled in the past: {time_ns} < {self.now}")
        heapq.heappush(self._heap, (time_ns, self._seq, action))
        self._seq += 1

    def after(self, delay_ns: int, action: Callable[[], None]) -> None:
        self.at(self.now + int(delay_ns), action)

    def run(self, max_events: int | None = None) -> int:
        """Drain the event heap; returns the number of events executed."""
        heap = self._heap
        count = 0
        while heap:
            time_ns, _, action = heapq.heappop(heap)
            self.now = time_ns
            action()
            count += 1
            if max_events is not None and count >= max_events:
                break
        self.executed += count
        return count

    @property
    def pending(self) -> int:
        return len(self._heap)
