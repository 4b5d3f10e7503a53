"""The "robot" concept: one crawler making endless sequential rounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .engine import ContractViolation, EventKind, uniform_int
from .metrics import Index
from .world import Snapshot, World, snapshot

__all__ = ["RobotState", "RobotStrategy", "robot_begin_download", "robot_finish", "robot_on_complete"]


@dataclass
class RobotState:
    n_resources: int
    cursor: int = 0
    rounds_completed: int = 0
    # (snapshot, completion time) of the single in-flight download
    active: Optional[tuple[Snapshot, int]] = None
    downloads_started: int = 0


def robot_begin_download(world: World, state: RobotState, now: int, rng,
                         queue=None) -> tuple[Snapshot, int]:
    """Snapshot the resource under the cursor and start fetching it.

    The snapshot is taken at ``now``; anything that changes on the resource
    while the download is in flight is not reflected in what gets indexed.
    """
    if state.active is not None:
        raise ContractViolation("robot already has a download in flight")
    cfg = world.config
    snap = snapshot(world.resources[state.cursor], now)
    completion = now + uniform_int(rng, cfg.download_min, cfg.download_max)
    state.active = (snap, completion)
    if queue is not None:
        queue.schedule(completion, EventKind.DOWNLOAD_COMPLETE, state.downloads_started)
    state.downloads_started += 1
    return snap, completion


def robot_finish(state: RobotState, now: int) -> Snapshot:
    """Retire the in-flight download and advance the cursor (wrapping = one round)."""
    if state.active is None:
        raise ContractViolation("robot has no download in flight")
    snap, completion = state.active
    if now != completion:
        raise ContractViolation(f"completion at t={now}, expected t={completion}")
    state.active = None
    state.cursor += 1
    if state.cursor == state.n_resources:
        state.cursor = 0
        state.rounds_completed += 1
    return snap


def robot_on_complete(index: Index, state: RobotState, now: int) -> RobotState:
    snap = robot_finish(state, now)
    index.replace(snap, now)
    return state


class RobotStrategy:
    name = "robot"
    wants_requests = False

    def __init__(self, n_resources: int):
        self.state = RobotState(n_resources)
        self.round_bytes: list[int] = []

    @property
    def rounds_completed(self) -> int:
        return self.state.rounds_completed

    def start(self, sim) -> None:
        sim.queue.schedule(0, EventKind.ROBOT_DISPATCH)

    def on_change(self, sim, resource) -> None:
        pass

    def on_request(self, sim, rid: int) -> None:
        pass

    def on_dispatch(self, sim, ev) -> None:
        robot_begin_download(sim.world, self.state, ev.time, sim.download_rng, sim.queue)

    def on_notification(self, sim, ev) -> None:
        raise ContractViolation("robot strategy received a sensor notification")

    def on_download_complete(self, sim, ev) -> None:
        rounds = self.state.rounds_completed
        snap = robot_finish(self.state, ev.time)
        # single robot: completions are totally ordered, no version guard
        sim.complete_download(snap, guarded=False)
        if self.state.rounds_completed != rounds:
            self.round_bytes.append(sim.bytes_cumulative)
        robot_begin_download(sim.world, self.state, ev.time, sim.download_rng, sim.queue)
