"""The "sensors" concept: server-side change detection pushing to the robot."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .engine import Event, EventKind, uniform_int
from .metrics import Index
from .world import Resource, Snapshot, Status, World, snapshot

__all__ = [
    "DetectionMode",
    "SensorState",
    "ActiveDownloads",
    "SensorsStrategy",
    "sensor_on_change",
    "sensor_on_request",
    "notify_robot",
    "index_apply",
]


class DetectionMode(str, Enum):
    # sensor sees the change locally; only delivery takes 1..3 units
    CHANGE_TRIGGERED = "change"
    # sensor only notices a change when a user request exposes the new response
    REQUEST_TRIGGERED = "request"


@dataclass(slots=True)
class SensorState:
    resource_id: int
    last_observed_version: int = 0
    last_observed_status: Status = Status.OK


class ActiveDownloads:
    """In-flight downloads keyed by id. No cap and no per-resource coalescing."""

    def __init__(self):
        self._items: dict[int, tuple[Snapshot, int]] = {}
        self._next_id = 0
        self.peak = 0

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, download_id: int) -> bool:
        return download_id in self._items

    def add(self, snap: Snapshot, completion: int) -> int:
        did = self._next_id
        self._next_id += 1
        self._items[did] = (snap, completion)
        if len(self._items) > self.peak:
            self.peak = len(self._items)
        return did

    def pop(self, download_id: int) -> tuple[Snapshot, int]:
        return self._items.pop(download_id)

    def for_resource(self, rid: int) -> list[Snapshot]:
        return [s for s, _ in self._items.values() if s.resource_id == rid]


def sensor_on_change(r: Resource, now: int, rng, mode: DetectionMode, queue=None,
                     notify_min: int = 1, notify_max: int = 3) -> Optional[Event]:
    """Call after an observable change to ``r``. In change-triggered mode,
    returns the NotificationArrival event (scheduled on ``queue`` if given)."""
    if mode is not DetectionMode.CHANGE_TRIGGERED:
        return None
    at = now + uniform_int(rng, notify_min, notify_max)
    if queue is not None:
        return queue.schedule(at, EventKind.NOTIFICATION, r.id, r.version)
    return Event(at, -1, EventKind.NOTIFICATION, r.id, r.version)


def sensor_on_request(r: Resource, s: SensorState, now: int, rng, mode: DetectionMode,
                      queue=None, notify_min: int = 1, notify_max: int = 3) -> Optional[Event]:
    """Call when a user request for ``r`` is served. Requests always refresh
    the sensor's record; only request-triggered mode turns a difference into
    a notification."""
    seen_new = r.version > s.last_observed_version
    s.last_observed_version = r.version
    s.last_observed_status = r.status
    if not seen_new or mode is not DetectionMode.REQUEST_TRIGGERED:
        return None
    at = now + uniform_int(rng, notify_min, notify_max)
    if queue is not None:
        return queue.schedule(at, EventKind.NOTIFICATION, r.id, r.version)
    return Event(at, -1, EventKind.NOTIFICATION, r.id, r.version)


def notify_robot(world: World, rid: int, downloads: ActiveDownloads, now: int, rng,
                 queue=None) -> ActiveDownloads:
    """Start a fresh download of ``rid`` no matter what is already in flight."""
    cfg = world.config
    snap = snapshot(world.resources[rid], now)
    completion = now + uniform_int(rng, cfg.download_min, cfg.download_max)
    did = downloads.add(snap, completion)
    if queue is not None:
        queue.schedule(completion, EventKind.DOWNLOAD_COMPLETE, did)
    return downloads


def index_apply(index: Index, snap: Snapshot, now: Optional[int] = None) -> Index:
    """Monotonic write: an older snapshot never overwrites a newer one."""
    index.apply(snap, snap.taken_at if now is None else now)
    return index


class SensorsStrategy:
    name = "sensors"

    def __init__(self, n_resources: int, mode: DetectionMode = DetectionMode.CHANGE_TRIGGERED):
        self.mode = DetectionMode(mode)
        self.sensors = [SensorState(i) for i in range(n_resources)]
        self.downloads = ActiveDownloads()
        self.notifications_sent = 0

    @property
    def wants_requests(self) -> bool:
        return self.mode is DetectionMode.REQUEST_TRIGGERED

    def start(self, sim) -> None:
        pass

    def on_change(self, sim, resource: Resource) -> None:
        cfg = sim.config
        if sensor_on_change(resource, sim.queue.now, sim.notify_rng, self.mode, sim.queue,
                            cfg.notify_min, cfg.notify_max) is not None:
            self.notifications_sent += 1

    def on_request(self, sim, rid: int) -> None:
        cfg = sim.config
        if sensor_on_request(sim.world.resources[rid], self.sensors[rid], sim.queue.now,
                             sim.notify_rng, self.mode, sim.queue,
                             cfg.notify_min, cfg.notify_max) is not None:
            self.notifications_sent += 1

    def on_dispatch(self, sim, ev) -> None:
        pass

    def on_notification(self, sim, ev) -> None:
        notify_robot(sim.world, ev.subject, self.downloads, ev.time, sim.download_rng, sim.queue)

    def on_download_complete(self, sim, ev) -> None:
        snap, _ = self.downloads.pop(ev.subject)
        sim.complete_download(snap, guarded=True)
