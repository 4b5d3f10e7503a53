"""Event loop for one run: world processes plus one monitoring strategy."""

from __future__ import annotations

import hashlib
import struct
from typing import Callable, Optional

from .engine import ContractViolation, EventKind, EventQueue, RngStream, derive_seed
from .metrics import Index, MetricsSample, freshness, transferred_bytes
from .world import World, WorldConfig, apply_change, draw_change_kind, init_world, next_arrival

__all__ = ["Streams", "Simulation", "StreamCode"]


class StreamCode:
    SIZES = 1
    CHANGE = 2
    REQUEST = 3
    DOWNLOADS = 4
    NOTIFICATIONS = 5


class Streams:
    """Named random substreams of one run.

    World streams (sizes, per-resource change and request) never depend on
    the strategy, so both concepts see identical change histories.
    """

    def __init__(self, run_seed: int):
        self.run_seed = run_seed

    def sizes(self):
        return RngStream(self.run_seed, (StreamCode.SIZES,))

    def change(self, rid: int):
        return RngStream(self.run_seed, (StreamCode.CHANGE, rid))

    def request(self, rid: int):
        return RngStream(self.run_seed, (StreamCode.REQUEST, rid))

    def downloads(self):
        return RngStream(self.run_seed, (StreamCode.DOWNLOADS,))

    def notifications(self):
        return RngStream(self.run_seed, (StreamCode.NOTIFICATIONS,))

    @classmethod
    def for_run(cls, base_seed: int, run: int) -> "Streams":
        return cls(derive_seed(base_seed, run))


_CHANGE_REC = struct.Struct("<qqbqqh")

TraceFn = Callable[[str, int, object], None]


class Simulation:
    """One deterministic run from t=0 to the horizon.

    ``trace``, when given, is called as ``trace(what, t, payload)`` for
    ``"change"`` (payload: (old, new, kind, observable)), ``"request"``,
    ``"notification"`` (payload: (resource id, version)), ``"download"``
    (payload: the completed Snapshot) and ``"sample"``.
    """

    def __init__(self, config: WorldConfig, rates, strategy, streams: Streams,
                 warm_start: bool = True, simulate_requests: Optional[bool] = None,
                 trace: Optional[TraceFn] = None, verify: bool = False,
                 world: Optional[World] = None):
        self.config = config
        self.rates = rates
        self.strategy = strategy
        self.streams = streams
        self.trace = trace
        self.verify = verify
        self.world = world if world is not None else init_world(config, streams.sizes())
        if len(self.world) != config.n_resources:
            raise ContractViolation("world size does not match config.n_resources")
        self.index = Index.warm(self.world) if warm_start else Index(config.n_resources)
        self.queue = EventQueue()
        self.download_rng = streams.downloads()
        self.notify_rng = streams.notifications()
        if simulate_requests is None:
            simulate_requests = strategy.wants_requests
        self.simulate_requests = simulate_requests

        self.bytes_cumulative = 0
        self.downloads_completed = 0
        self.changes = 0
        self.observable_changes = 0
        self.requests = 0
        self.samples: list[MetricsSample] = []
        self.size_totals: list[int] = []
        self.total_size = self.world.total_size()
        self.fresh = sum(1 for r, e in zip(self.world.resources, self.index.entries)
                         if e is not None and e.version == r.version)
        self._change_log = hashlib.blake2b(digest_size=16)
        self._ran = False

    @property
    def change_log_digest(self) -> str:
        return self._change_log.hexdigest()

    def freshness_pct(self) -> float:
        return 100.0 * self.fresh / self.config.n_resources

    def complete_download(self, snap, guarded: bool) -> bool:
        """Account a finished download and write it into the index."""
        self.bytes_cumulative += transferred_bytes(snap, self.config.zero_byte_errors)
        self.downloads_completed += 1
        rid = snap.resource_id
        live = self.world.resources[rid].version
        entry = self.index.entries[rid]
        was_fresh = entry is not None and entry.version == live
        now = self.queue.now
        written = self.index.apply(snap, now) if guarded else self.index.replace(snap, now)
        if written:
            self.fresh += (snap.version == live) - was_fresh
        if self.trace is not None:
            self.trace("download", now, snap)
        return written

    def _sample(self, t: int) -> None:
        s = MetricsSample(t, 100.0 * self.fresh / self.config.n_resources, self.bytes_cumulative)
        if self.verify:
            full = freshness(self.index, self.world)
            if abs(full - s.freshness_pct) > 1e-9:
                raise ContractViolation(f"incremental freshness {s.freshness_pct} != {full} at t={t}")
            if self.total_size != self.world.total_size():
                raise ContractViolation(f"size total drifted at t={t}")
        self.samples.append(s)
        self.size_totals.append(self.total_size)
        if self.trace is not None:
            self.trace("sample", t, s)

    def run(self) -> "Simulation":
        if self._ran:
            raise ContractViolation("a Simulation runs once")
        self._ran = True
        cfg = self.config
        horizon = cfg.horizon
        n = cfg.n_resources
        q = self.queue
        schedule = q.schedule
        strategy = self.strategy
        resources = self.world.resources
        entries = self.index.entries
        trace = self.trace
        smin, smax = cfg.size_min, cfg.size_max
        weights = cfg.kind_weights
        change_rate = self.rates.changes_per_horizon
        request_rate = self.rates.requests_per_horizon
        log_update = self._change_log.update
        pack = _CHANGE_REC.pack

        CHANGE = EventKind.CHANGE
        REQUEST = EventKind.REQUEST
        TICK = EventKind.MEASUREMENT_TICK
        NOTIFY = EventKind.NOTIFICATION
        DONE = EventKind.DOWNLOAD_COMPLETE

        change_rngs = []
        if change_rate > 0:
            change_rngs = [self.streams.change(i) for i in range(n)]
            for i, rng in enumerate(change_rngs):
                t = next_arrival(rng, change_rate, horizon)
                if t <= horizon:
                    schedule(t, CHANGE, i)
        request_rngs = []
        if self.simulate_requests and request_rate > 0:
            request_rngs = [self.streams.request(i) for i in range(n)]
            for i, rng in enumerate(request_rngs):
                t = next_arrival(rng, request_rate, horizon)
                if t <= horizon:
                    schedule(t, REQUEST, i)
        if cfg.measurement_interval <= horizon:
            schedule(cfg.measurement_interval, TICK)
        strategy.start(self)

        while q:
            if q.peek_time() > horizon:
                break
            ev = q.next_event()
            kind = ev.kind
            now = ev.time
            if kind == CHANGE:
                rid = ev.subject
                rng = change_rngs[rid]
                ck = draw_change_kind(rng, weights)
                old = resources[rid]
                new, observable = apply_change(old, ck, rng, smin, smax)
                self.changes += 1
                if observable:
                    if not (smin <= new.size <= smax and new.version == old.version + 1):
                        raise ContractViolation(f"illegal transition {old} -> {new}")
                    resources[rid] = new
                    self.observable_changes += 1
                    self.total_size += new.size - old.size
                    e = entries[rid]
                    if e is not None and e.version == old.version:
                        self.fresh -= 1
                    strategy.on_change(self, new)
                log_update(pack(now, rid, ck, new.version, new.size, new.status))
                if trace is not None:
                    trace("change", now, (old, new, ck, observable))
                t = now + next_arrival(rng, change_rate, horizon)
                if t <= horizon:
                    schedule(t, CHANGE, rid)
            elif kind == DONE:
                strategy.on_download_complete(self, ev)
            elif kind == NOTIFY:
                if trace is not None:
                    trace("notification", now, (ev.subject, ev.detail))
                strategy.on_notification(self, ev)
            elif kind == REQUEST:
                rid = ev.subject
                self.requests += 1
                strategy.on_request(self, rid)
                if trace is not None:
                    trace("request", now, rid)
                t = now + next_arrival(request_rngs[rid], request_rate, horizon)
                if t <= horizon:
                    schedule(t, REQUEST, rid)
            elif kind == TICK:
                self._sample(now)
                t = now + cfg.measurement_interval
                if t <= horizon:
                    schedule(t, TICK)
            else:
                strategy.on_dispatch(self, ev)
        return self
