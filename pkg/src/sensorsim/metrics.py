"""The monitoring system's index and its two performance criteria."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .engine import ContractViolation
from .world import Snapshot, Status, World

__all__ = [
    "IndexEntry",
    "Index",
    "MetricsSample",
    "freshness",
    "record_download",
    "transferred_bytes",
    "measure",
    "sample_times",
    "GIB",
]

GIB = 2 ** 30  # "Gb" in every report means 2^30 bytes


@dataclass(frozen=True, slots=True)
class IndexEntry:
    resource_id: int
    status: Status
    version: int
    size: int
    downloaded_at: int

    @classmethod
    def from_snapshot(cls, snap: Snapshot, downloaded_at: int) -> "IndexEntry":
        return cls(snap.resource_id, snap.status, snap.version, snap.size, downloaded_at)


class Index:
    """Last-downloaded view of each resource; at most one entry per id."""

    def __init__(self, n_resources: int):
        self.entries: list[Optional[IndexEntry]] = [None] * n_resources

    @classmethod
    def warm(cls, world: World, at: int = 0) -> "Index":
        idx = cls(len(world))
        idx.entries = [IndexEntry(r.id, r.status, r.version, r.size, at) for r in world.resources]
        return idx

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, rid: int) -> Optional[IndexEntry]:
        return self.entries[rid]

    def version_of(self, rid: int) -> int:
        e = self.entries[rid]
        return -1 if e is None else e.version

    def replace(self, snap: Snapshot, now: int) -> bool:
        """Unconditional write. Returns True (the entry always changes hands)."""
        self.entries[snap.resource_id] = IndexEntry.from_snapshot(snap, now)
        return True

    def apply(self, snap: Snapshot, now: int) -> bool:
        """Write only if ``snap`` is at least as new as the indexed version."""
        cur = self.entries[snap.resource_id]
        if cur is not None and snap.version < cur.version:
            return False
        self.entries[snap.resource_id] = IndexEntry.from_snapshot(snap, now)
        return True


class MetricsSample(NamedTuple):
    t: int
    freshness_pct: float
    bytes_cumulative: int


def freshness(index: Index, world: World) -> float:
    """Percent of resources whose indexed (status, version) equals the live one."""
    n = len(world)
    if n == 0:
        raise ContractViolation("freshness of an empty world is undefined")
    fresh = 0
    for r, e in zip(world.resources, index.entries):
        if e is not None and e.version == r.version and e.status == r.status:
            fresh += 1
    return 100.0 * fresh / n


def transferred_bytes(snap: Snapshot, zero_byte_errors: bool = False) -> int:
    if zero_byte_errors and snap.status != Status.OK:
        return 0
    return snap.size


def record_download(counter: int, snap: Snapshot, zero_byte_errors: bool = False) -> int:
    return counter + transferred_bytes(snap, zero_byte_errors)


def measure(t: int, index: Index, world: World, counter: int) -> MetricsSample:
    """Full O(N) measurement; the simulation loop keeps an incremental equivalent."""
    return MetricsSample(t, freshness(index, world), counter)


def sample_times(horizon: int, interval: int) -> list[int]:
    return list(range(interval, horizon + 1, interval))
