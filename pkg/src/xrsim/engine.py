"""Deterministic event-driven simulation core with a slot-granular TDD clock.

Time is kept in microseconds. Slot boundaries are integers; event times may
be exact rationals (fractions.Fraction) so that fractional traffic and DRX
periods never accumulate float drift.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Union

import numpy as np

Time = Union[int, Fraction]

SLOT_US = 500  # 30 kHz subcarrier spacing -> 0.5 ms slots

DOWNLINK = "D"
SPECIAL = "S"
UPLINK = "U"

# DDDSU repeating pattern, period 5
_TDD_PATTERN = (DOWNLINK, DOWNLINK, DOWNLINK, SPECIAL, UPLINK)


def slot_type(slot_index: int) -> str:
    if slot_index < 0:
        raise ValueError("slot_index must be >= 0")
    return _TDD_PATTERN[slot_index % 5]


def slot_start_us(slot_index: int) -> int:
    return slot_index * SLOT_US


def slot_of(time_us: Time) -> int:
    return int(time_us // SLOT_US)


class SchedulingInPastError(Exception):
    """An event was scheduled before the current simulation time."""


@dataclass
class SimClock:
    slot_duration: int = SLOT_US
    now: Time = 0

    @property
    def slot_index(self) -> int:
        return int(self.now // self.slot_duration)


@dataclass(frozen=True)
class Event:
    time: Time
    sequence: int
    kind: str
    callback: Callable[[], None] = field(compare=False)


@dataclass
class SimStats:
    events_processed: int = 0
    by_kind: dict = field(default_factory=dict)

    def count(self, kind: str):
        self.events_processed += 1
        self.by_kind[kind] = self.by_kind.get(kind, 0) + 1


class RngStreams:
    """Named, independent random sub-streams derived from one root seed.

    Streams are keyed by name so adding a consumer never perturbs the draws
    of an existing one.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            entropy = [self.seed] + list(name.encode("utf-8"))
            gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
            self._streams[name] = gen
        return gen


class Engine:
    """Min-heap event queue ordered by (time, insertion sequence)."""

    def __init__(self, seed: int = 0):
        self.clock = SimClock()
        self.rng = RngStreams(seed)
        self.stats = SimStats()
        self._heap: list[tuple[Time, int, Event]] = []
        self._seq = 0

    def schedule_event(self, time: Time, kind: str, callback: Callable[[], None]) -> int:
        if time < self.clock.now:
            raise SchedulingInPastError(
                f"event {kind!r} at t={time} us is before now={self.clock.now} us"
            )
        self._seq += 1
        ev = Event(time=time, sequence=self._seq, kind=kind, callback=callback)
        heapq.heappush(self._heap, (time, self._seq, ev))
        return self._seq

    def peek_time(self) -> Time | None:
        return self._heap[0][0] if self._heap else None

    def run_until(self, t_end: Time) -> SimStats:
        if t_end < self.clock.now:
            raise SchedulingInPastError(f"t_end={t_end} is before now={self.clock.now}")
        while self._heap and self._heap[0][0] <= t_end:
            time, _, ev = heapq.heappop(self._heap)
            assert time >= self.clock.now
            self.clock.now = time
            self.stats.count(ev.kind)
            ev.callback()
        self.clock.now = t_end
        return self.stats

    def every_slot(self, handler: Callable[[int], None], kind: str = "slot"):
        """Register a handler fired at each slot boundary, self-rescheduling."""

        def fire():
            slot = self.clock.slot_index
            handler(slot)
            self.schedule_event((slot + 1) * SLOT_US, kind, fire)

        first_slot = int(-(-self.clock.now // SLOT_US))  # ceil to next boundary
        self.schedule_event(first_slot * SLOT_US, kind, fire)
