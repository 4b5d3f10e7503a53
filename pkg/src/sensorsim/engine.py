"""Discrete-event core: integer clock, totally ordered event queue, random variates.

Time is an integer count of modeling units (1 unit = 10 ms). Events are
ordered by ``(time, seq)`` where ``seq`` is a global insertion counter, so
simultaneous events pop in the order they were scheduled.

Random streams are SplitMix64 generators keyed by ``(seed, *labels)``. One
stream is cheap (a single 64-bit integer of state), which lets every resource
own its own change and request streams even at 200,000 resources.
"""

from __future__ import annotations

import heapq
import math
from enum import IntEnum
from typing import NamedTuple, Optional

__all__ = [
    "ContractViolation",
    "EventKind",
    "Event",
    "EventQueue",
    "RngStream",
    "ScriptedStream",
    "derive_seed",
    "uniform_int",
    "exp_delay",
]

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_TWO_POW_M53 = 2.0 ** -53


class ContractViolation(ValueError):
    """A caller broke an operation's precondition; the run must abort."""


class EventKind(IntEnum):
    CHANGE = 0
    REQUEST = 1
    NOTIFICATION = 2
    DOWNLOAD_COMPLETE = 3
    MEASUREMENT_TICK = 4
    ROBOT_DISPATCH = 5


class Event(NamedTuple):
    time: int
    seq: int
    kind: int
    subject: int = 0
    detail: int = 0


class EventQueue:
    """Binary-heap event list with a simulation clock.

    >>> q = EventQueue()
    >>> _ = q.schedule(5, EventKind.CHANGE, 1)
    >>> _ = q.schedule(3, EventKind.CHANGE, 2)
    >>> [q.next_event().time, q.next_event().time, q.next_event()]
    [3, 5, None]
    """

    def __init__(self, start: int = 0):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = start
        self.popped = 0

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

    @property
    def scheduled(self) -> int:
        return self._seq

    def schedule(self, time: int, kind: int, subject: int = 0, detail: int = 0) -> Event:
        if time < self.now:
            raise ContractViolation(
                f"cannot schedule {EventKind(kind).name} at t={time} before clock t={self.now}"
            )
        ev = Event(time, self._seq, kind, subject, detail)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def push(self, ev: Event) -> None:
        """Insert a pre-built event, keeping its seq (used by scripted schedules)."""
        if ev.time < self.now:
            raise ContractViolation(f"event at t={ev.time} precedes clock t={self.now}")
        self._seq = max(self._seq, ev.seq + 1)
        heapq.heappush(self._heap, ev)

    def peek_time(self) -> Optional[int]:
        return self._heap[0].time if self._heap else None

    def next_event(self) -> Optional[Event]:
        if not self._heap:
            return None
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        self.popped += 1
        return ev


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *labels: int) -> int:
    """Fold integer labels into a 64-bit seed; distinct label paths give unrelated seeds."""
    s = _mix64((seed + _GAMMA) & MASK64)
    for label in labels:
        s = _mix64(((s ^ (label & MASK64)) + _GAMMA) & MASK64)
    return s


class RngStream:
    """SplitMix64 stream of uniforms on [0, 1) with 53-bit resolution.

    The same ``(seed, stream_id)`` always yields the same sequence.
    ``stream_id`` is a tuple of non-negative integers naming the purpose
    (and resource, for per-resource streams).
    """

    __slots__ = ("seed", "stream_id", "_state")

    def __init__(self, seed: int, stream_id: tuple[int, ...] = ()):
        if not 0 <= seed <= MASK64:
            raise ContractViolation(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.stream_id = tuple(stream_id)
        self._state = derive_seed(seed, *self.stream_id)

    def random(self) -> float:
        s = (self._state + _GAMMA) & MASK64
        self._state = s
        z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return ((z ^ (z >> 31)) >> 11) * _TWO_POW_M53

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


class ScriptedStream:
    """Stream that replays fixed uniforms; for hand-traced schedules and tests."""

    def __init__(self, draws=(), name: str = "scripted"):
        self._draws = list(draws)
        self._pos = 0
        self.name = name

    def extend(self, draws) -> None:
        self._draws.extend(draws)

    @property
    def remaining(self) -> int:
        return len(self._draws) - self._pos

    def random(self) -> float:
        if self._pos >= len(self._draws):
            raise ContractViolation(f"{self.name}: scripted draws exhausted after {self._pos}")
        u = self._draws[self._pos]
        self._pos += 1
        if not 0.0 <= u < 1.0:
            raise ContractViolation(f"{self.name}: scripted draw {u!r} outside [0, 1)")
        return u


def uniform_int(rng, lo: int, hi: int) -> int:
    """``lo + floor(u * (hi - lo + 1))``, one draw, inclusive on both ends."""
    if lo > hi:
        raise ContractViolation(f"uniform_int: lo={lo} > hi={hi}")
    r = lo + int(rng.random() * (hi - lo + 1))
    # u*(span) can round up to span when u is within one ulp of 1
    return r if r <= hi else hi


def exp_delay(rng, mean: float) -> int:
    """Exponential delay in whole units: ``max(1, round(-mean * ln(1 - u)))``.

    Rounding is half-up. The clamp keeps every delay strictly positive so a
    cause always precedes its effect on the integer clock.
    """
    if not mean > 0:
        raise ContractViolation(f"exp_delay: mean must be positive, got {mean}")
    d = math.floor(-mean * math.log1p(-rng.random()) + 0.5)
    return d if d >= 1 else 1
