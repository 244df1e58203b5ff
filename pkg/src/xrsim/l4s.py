"""Low-latency congestion marking and rate-adaptive sources.

A shallow per-flow queue tracks the sojourn time of each packet.  The
marking probability rises linearly between two sojourn thresholds, and
congestion-experienced marks either get applied right where the queue
drains (method 1) or downstream after a signaling delay (method 2).
Sources react to the marked fraction of each feedback interval by
multiplicative decrease / additive increase.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Tuple

from numpy.random import Generator

T_LOW_MS = 2.0
T_HIGH_MS = 10.0


def marking_probability(sojourn_ms: float, t_low_ms: float = T_LOW_MS,
                        t_high_ms: float = T_HIGH_MS) -> float:
    """Linear ramp from 0 at t_low to 1 at t_high, clamped outside."""
    if not 0 <= t_low_ms < t_high_ms:
        raise ValueError("thresholds must satisfy 0 <= t_low < t_high")
    p = (sojourn_ms - t_low_ms) / (t_high_ms - t_low_ms)
    return min(1.0, max(0.0, p))


@dataclass
class L4sQueueState:
    """Per-flow bottleneck queue with sojourn-time tracking.

    Packets are opaque byte counts; the queue never mixes flows, so one
    flow's backlog cannot influence another's sojourn or marking.
    """

    flow_id: object
    t_low_ms: float = T_LOW_MS
    t_high_ms: float = T_HIGH_MS
    queue: Deque[Tuple[float, int]] = field(default_factory=deque)
    backlog_bytes: int = 0

    def __post_init__(self):
        if not 0 <= self.t_low_ms < self.t_high_ms:
            raise ValueError("thresholds must satisfy 0 <= t_low < t_high")

    def enqueue(self, now_ms: float, byte_size: int) -> None:
        if byte_size <= 0:
            raise ValueError("byte_size must be positive")
        self.queue.append((now_ms, byte_size))
        self.backlog_bytes += byte_size

    def head_sojourn_ms(self, now_ms: float) -> float:
        if not self.queue:
            return 0.0
        return now_ms - self.queue[0][0]

    def current_p(self, now_ms: float) -> float:
        return marking_probability(self.head_sojourn_ms(now_ms),
                                   self.t_low_ms, self.t_high_ms)

    def dequeue(self, now_ms: float) -> Optional[Tuple[float, int]]:
        """Pop the head packet, returning (sojourn_ms, byte_size)."""
        if not self.queue:
            return None
        enq_ms, size = self.queue.popleft()
        self.backlog_bytes -= size
        return now_ms - enq_ms, size


def mark_method1(p: float, rng: Generator, is_l4s: bool = True) -> bool:
    """Bernoulli CE mark applied at the dequeue point."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if not is_l4s:
        return False
    return bool(rng.random() < p)


class Method2Marker:
    """Delayed-probability marker for a downstream marking stage.

    The queue owner publishes its marking probability as it evolves;
    the downstream stage applies whatever value was current one
    signaling delay ago.  A zero delay reproduces method 1 exactly.
    """

    def __init__(self, signaling_delay_ms: float = 0.0):
        if signaling_delay_ms < 0:
            raise ValueError("signaling_delay_ms must be >= 0")
        self.signaling_delay_ms = signaling_delay_ms
        self._history: List[Tuple[float, float]] = [(-math.inf, 0.0)]

    def publish(self, now_ms: float, p: float) -> None:
        if not 0 <= p <= 1:
            raise ValueError("p must lie in [0, 1]")
        if now_ms < self._history[-1][0]:
            raise ValueError("publish times must be non-decreasing")
        self._history.append((now_ms, p))

    def delayed_p(self, now_ms: float) -> float:
        cutoff = now_ms - self.signaling_delay_ms
        # linear scan from the tail: feedback lag spans few entries
        for t, p in reversed(self._history):
            if t <= cutoff:
                return p
        return 0.0

    def mark(self, now_ms: float, rng: Generator, is_l4s: bool = True) -> bool:
        return mark_method1(self.delayed_p(now_ms), rng, is_l4s)


@dataclass
class AdaptiveSource:
    """Rate-adaptive sender driven by per-interval mark feedback."""

    rate_bps: float
    min_bps: float
    max_bps: float
    step_bps: float
    feedback_delay_ms: float = 20.0

    def __post_init__(self):
        if not 0 < self.min_bps <= self.max_bps:
            raise ValueError("need 0 < min_bps <= max_bps")
        if self.step_bps <= 0:
            raise ValueError("step_bps must be positive")
        if not self.min_bps <= self.rate_bps <= self.max_bps:
            raise ValueError("rate_bps outside [min_bps, max_bps]")

    def adapt(self, marked_fraction: float) -> float:
        self.rate_bps = source_adapt(self.rate_bps, marked_fraction,
                                     self.min_bps, self.max_bps,
                                     self.step_bps)
        return self.rate_bps


def source_adapt(rate_bps: float, marked_fraction: float, min_bps: float,
                 max_bps: float, step_bps: float) -> float:
    """One feedback-interval rate update, clamped to [min, max]."""
    if not 0 <= marked_fraction <= 1:
        raise ValueError("marked_fraction must lie in [0, 1]")
    if marked_fraction > 0:
        rate = rate_bps * (1 - marked_fraction / 2)
    else:
        rate = rate_bps + step_bps
    return min(max_bps, max(min_bps, rate))


@dataclass
class LoopResult:
    times_ms: List[float]
    rates_bps: List[float]
    mark_fractions: List[float]
    sojourns_ms: List[float]
    marked_total: int
    dequeued_total: int

    def p95_sojourn_ms(self) -> float:
        if not self.sojourns_ms:
            return 0.0
        ordered = sorted(self.sojourns_ms)
        rank = max(0, math.ceil(0.95 * len(ordered)) - 1)
        return ordered[rank]


def closed_loop_run(source: AdaptiveSource, capacity_bps: float,
                    duration_ms: float, rng: Generator, method: int = 1,
                    signaling_delay_ms: float = 0.0,
                    t_low_ms: float = T_LOW_MS, t_high_ms: float = T_HIGH_MS,
                    marking_enabled: bool = True, pkt_bytes: int = 1500,
                    tick_ms: float = 1.0) -> LoopResult:
    """Drive one source through a constant-capacity bottleneck.

    The source emits fixed-size packets at its current rate, the queue
    drains at the link capacity, dequeued packets are CE-marked from
    the sojourn ramp, and once per feedback interval the marked
    fraction is fed back into the rate update.
    """
    if capacity_bps <= 0:
        raise ValueError("capacity_bps must be positive")
    if method not in (1, 2):
        raise ValueError("method must be 1 or 2")
    queue = L4sQueueState("flow", t_low_ms=t_low_ms, t_high_ms=t_high_ms)
    marker = Method2Marker(signaling_delay_ms)
    result = LoopResult([], [], [], [], 0, 0)

    emit_carry = 0.0
    serve_carry = 0.0
    interval_marked = 0
    interval_total = 0
    next_feedback_ms = source.feedback_delay_ms

    n_ticks = int(round(duration_ms / tick_ms))
    for tick in range(n_ticks):
        now = (tick + 1) * tick_ms

        emit_carry += source.rate_bps * tick_ms / 8000.0
        while emit_carry >= pkt_bytes:
            queue.enqueue(now, pkt_bytes)
            emit_carry -= pkt_bytes

        marker.publish(now, queue.current_p(now))

        serve_carry += capacity_bps * tick_ms / 8000.0
        while queue.queue and serve_carry >= queue.queue[0][1]:
            sojourn, size = queue.dequeue(now)
            serve_carry -= size
            result.sojourns_ms.append(sojourn)
            if marking_enabled:
                if method == 1:
                    p = marking_probability(sojourn, t_low_ms, t_high_ms)
                    marked = mark_method1(p, rng)
                else:
                    marked = marker.mark(now, rng)
            else:
                marked = False
            interval_total += 1
            interval_marked += int(marked)
            result.marked_total += int(marked)
            result.dequeued_total += 1
        if not queue.queue:
            serve_carry = 0.0

        if now + 1e-9 >= next_feedback_ms:
            f = interval_marked / interval_total if interval_total else 0.0
            source.adapt(f)
            result.times_ms.append(now)
            result.rates_bps.append(source.rate_bps)
            result.mark_fractions.append(f)
            interval_marked = 0
            interval_total = 0
            next_feedback_ms += source.feedback_delay_ms

    return result
