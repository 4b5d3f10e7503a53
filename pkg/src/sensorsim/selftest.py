"""Fast end-to-end checks behind ``sensorsim selftest``."""

from __future__ import annotations

import urllib.request

from .experiment import run_csv_text, run_simulation, table1_plan
from .protocol import (ExclusionRules, FingerprintStore, Notification, Notifier, RefetchQueue,
                       Refetcher, RobotReceiver, SensorMiddleware, decode_notification,
                       encode_notification, fingerprint, http_deliver)
from .protocol.server import serve_in_thread
from .world import WorldConfig


def check_md5_vectors():
    assert fingerprint(b"", 200, "text/html").digest == "d41d8cd98f00b204e9800998ecf8427e"
    assert fingerprint(b"abc", 200, "text/html").digest == "900150983cd24fb0d6963f7d28e17f72"


def check_wire_format():
    n = Notification("/a b", "d41d8cd98f00b204e9800998ecf8427e", 200, 0, 1)
    target = encode_notification(n, "/sensor-notify")
    assert target == ("/sensor-notify?url=%2Fa%20b&digest=d41d8cd98f00b204e9800998ecf8427e"
                      "&status=200&size=0&seq=1"), target
    assert decode_notification(target) == n


def check_plan_grid():
    plan = table1_plan()
    assert len(plan.series) == 9 and plan.runs_per_series == 3
    r = plan.get("[2-3]").rates
    assert (r.changes_per_horizon, r.requests_per_horizon) == (10, 50)


def check_small_runs():
    world = WorldConfig(n_resources=200, horizon=100_000, measurement_interval=10_000)
    plan = table1_plan(world)
    for strategy in ("robot", "sensors"):
        a = run_simulation(plan, "[3-3]", 1, strategy, verify=True)
        b = run_simulation(plan, "[3-3]", 1, strategy)
        assert run_csv_text(a) == run_csv_text(b), f"{strategy} run is not deterministic"
        assert len(a.samples) == 10


def check_loopback():
    body = {"v": b"v1"}

    def origin(environ, start_response):
        start_response("200 OK", [("Content-Type", "text/plain")])
        return [body["v"]]

    refetch = RefetchQueue(window=60)
    refetcher = Refetcher(refetch).start()
    robot, robot_url = serve_in_thread(RobotReceiver(refetch))
    notifier = Notifier(http_deliver(robot_url)).start()
    sensor, sensor_url = serve_in_thread(
        SensorMiddleware(origin, FingerprintStore(), ExclusionRules(), notifier))
    try:
        for v in (b"v1", b"v1", b"v2", b"v2"):
            body["v"] = v
            urllib.request.urlopen(sensor_url + "/page").read()
        assert notifier.flush(5) and refetcher.drain(5)
        assert refetch.accepted == 1, refetch.accepted
        page = refetcher.index[sensor_url + "/page"]
        assert page.digest == fingerprint(b"v2", 200, "").digest
    finally:
        notifier.stop()
        refetcher.stop()
        for srv in (sensor, robot):
            srv.shutdown()
            srv.server_close()


CHECKS = [
    ("md5 test vectors", check_md5_vectors),
    ("notification wire format", check_wire_format),
    ("rate grid plan", check_plan_grid),
    ("small runs: incremental freshness and determinism", check_small_runs),
    ("sensor -> robot loopback", check_loopback),
]
