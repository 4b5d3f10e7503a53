"""The monitored environment: resources, their arrival processes, status changes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

from .engine import ContractViolation, exp_delay, uniform_int

__all__ = [
    "Status",
    "ChangeKind",
    "Resource",
    "RateSpec",
    "WorldConfig",
    "Snapshot",
    "World",
    "init_world",
    "next_arrival",
    "draw_change_kind",
    "apply_change",
    "snapshot",
    "SIZE_MIN",
    "SIZE_MAX",
    "FULL_HORIZON",
]

SIZE_MIN = 65
SIZE_MAX = 122880
FULL_HORIZON = 8_640_000  # 10 days at 10 ms per unit
FULL_RESOURCES = 200_000


class Status(IntEnum):
    OK = 200
    FORBIDDEN = 403
    NOT_FOUND = 404
    SERVER_ERROR = 500


class ChangeKind(IntEnum):
    ERR403 = 0
    ERR404 = 1
    ERR500 = 2
    SHRINK = 3
    GROW = 4
    AVAILABLE = 5


_ERROR_STATUS = {
    ChangeKind.ERR403: Status.FORBIDDEN,
    ChangeKind.ERR404: Status.NOT_FOUND,
    ChangeKind.ERR500: Status.SERVER_ERROR,
}
_KINDS = tuple(ChangeKind)


@dataclass(frozen=True, slots=True)
class Resource:
    id: int
    status: Status = Status.OK
    size: int = SIZE_MIN
    version: int = 0


@dataclass(frozen=True, slots=True)
class Snapshot:
    resource_id: int
    status: Status
    size: int
    version: int
    taken_at: int


@dataclass(frozen=True)
class RateSpec:
    """Events per resource over one horizon. Zero disables the process."""

    changes_per_horizon: int
    requests_per_horizon: int

    def __post_init__(self):
        for name in ("changes_per_horizon", "requests_per_horizon"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ContractViolation(f"{name} must be a non-negative integer, got {v!r}")


@dataclass(frozen=True)
class WorldConfig:
    n_resources: int = FULL_RESOURCES
    horizon: int = FULL_HORIZON
    size_min: int = SIZE_MIN
    size_max: int = SIZE_MAX
    download_min: int = 1
    download_max: int = 40
    notify_min: int = 1
    notify_max: int = 3
    measurement_interval: int = 10_000
    # relative weights over ChangeKind order; None means uniform
    kind_weights: Optional[tuple[float, ...]] = None
    # error responses transfer no body when True
    zero_byte_errors: bool = False

    def __post_init__(self):
        if self.n_resources < 1:
            raise ContractViolation(f"n_resources must be >= 1, got {self.n_resources}")
        if self.horizon < 1:
            raise ContractViolation(f"horizon must be >= 1, got {self.horizon}")
        if not 1 <= self.size_min <= self.size_max:
            raise ContractViolation("size bounds must satisfy 1 <= size_min <= size_max")
        if not 1 <= self.download_min <= self.download_max:
            raise ContractViolation("download bounds must satisfy 1 <= download_min <= download_max")
        if not 1 <= self.notify_min <= self.notify_max:
            raise ContractViolation("notify bounds must satisfy 1 <= notify_min <= notify_max")
        if self.measurement_interval < 1:
            raise ContractViolation("measurement_interval must be >= 1")
        if self.kind_weights is not None:
            w = tuple(float(x) for x in self.kind_weights)
            if len(w) != len(ChangeKind) or min(w) < 0 or sum(w) <= 0:
                raise ContractViolation("kind_weights needs 6 non-negative weights with a positive sum")
            object.__setattr__(self, "kind_weights", w)

    @classmethod
    def paper(cls, **overrides) -> "WorldConfig":
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "WorldConfig":
        """5,000 resources over 864,000 units: fast enough for CI."""
        return cls(**{"n_resources": 5_000, "horizon": 864_000, **overrides})

    @classmethod
    def scaled(cls, **overrides) -> "WorldConfig":
        """N and horizon both cut by 10x, so a robot round spans the same
        fraction of the horizon as at full scale (about 0.47)."""
        return cls(**{"n_resources": 20_000, "horizon": 864_000, **overrides})


PRESETS = {"paper": WorldConfig.paper, "desk": WorldConfig.desk, "scaled": WorldConfig.scaled}


class World:
    """Mutable container of the current resource states."""

    def __init__(self, config: WorldConfig, resources: Sequence[Resource]):
        self.config = config
        self.resources = list(resources)

    def __len__(self) -> int:
        return len(self.resources)

    def __getitem__(self, rid: int) -> Resource:
        return self.resources[rid]

    def total_size(self) -> int:
        return sum(r.size for r in self.resources)


def init_world(config: WorldConfig, rng) -> World:
    lo, hi = config.size_min, config.size_max
    return World(config, [Resource(i, Status.OK, uniform_int(rng, lo, hi), 0)
                          for i in range(config.n_resources)])


def next_arrival(rng, rate: int, horizon: int) -> Optional[int]:
    """Exponential inter-arrival with mean ``horizon / rate``; None when rate is 0."""
    if rate == 0:
        return None
    if rate < 0:
        raise ContractViolation(f"rate must be >= 0, got {rate}")
    return exp_delay(rng, horizon / rate)


def draw_change_kind(rng, weights: Optional[Sequence[float]] = None) -> ChangeKind:
    u = rng.random()
    if weights is None:
        return _KINDS[int(u * 6)]
    target = u * sum(weights)
    acc = 0.0
    for kind, w in zip(_KINDS, weights):
        acc += w
        if target < acc:
            return kind
    # float slack at the top end: last kind with positive weight
    return next(k for k, w in zip(reversed(_KINDS), reversed(weights)) if w > 0)


def apply_change(r: Resource, kind: ChangeKind, rng,
                 size_min: int = SIZE_MIN, size_max: int = SIZE_MAX) -> tuple[Resource, bool]:
    """Return the resource after ``kind`` and whether anything observable changed.

    Non-observable outcomes (same error twice, Shrink at the floor, Grow at
    the ceiling, Available while already OK) return ``r`` itself and draw
    nothing. Shrink/Grow resample the size uniformly in the remaining range.
    """
    if kind <= ChangeKind.ERR500:
        status = _ERROR_STATUS[kind]
        if r.status == status:
            return r, False
        return Resource(r.id, status, r.size, r.version + 1), True
    if kind == ChangeKind.SHRINK:
        if r.size <= size_min:
            return r, False
        return Resource(r.id, r.status, uniform_int(rng, size_min, r.size - 1), r.version + 1), True
    if kind == ChangeKind.GROW:
        if r.size >= size_max:
            return r, False
        return Resource(r.id, r.status, uniform_int(rng, r.size + 1, size_max), r.version + 1), True
    if kind == ChangeKind.AVAILABLE:
        if r.status == Status.OK:
            return r, False
        return Resource(r.id, Status.OK, r.size, r.version + 1), True
    raise ContractViolation(f"unknown change kind {kind!r}")


def snapshot(r: Resource, now: int) -> Snapshot:
    return Snapshot(r.id, r.status, r.size, r.version, now)
