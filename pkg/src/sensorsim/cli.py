"""``sensorsim`` command line: simulate, report, sensor-proxy, robotd, selftest.

Exit status is 0 on success, 1 on runtime/environment failure and 2 on
usage or configuration errors. Every flag can also be set through an
environment variable named ``SENSORSIM_<FLAG>`` (upper case, dashes as
underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import re
import signal
import sys
import threading
import time
from pathlib import Path
from typing import Optional, Sequence

from .engine import ContractViolation
from .experiment import (
    CHANGE_LEVELS,
    REQUEST_LEVELS,
    RUN_HEADER,
    STRATEGIES,
    PlanError,
    load_plan,
    plan_from_dict,
    run_plan,
    summarize,
    summarize_samples,
    write_results,
)
from .metrics import GIB, MetricsSample
from .sensors import DetectionMode
from .world import PRESETS

ENV_PREFIX = "SENSORSIM_"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("sensorsim")


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _env_flag(name: str) -> bool:
    v = _env(name)
    return v is not None and v.strip().lower() in ("1", "true", "yes", "on")


def _env_int(name: str, default: int) -> int:
    v = _env(name)
    if v is None:
        return default
    try:
        return int(v)
    except ValueError:
        print(f"sensorsim: {ENV_PREFIX}{name.upper().replace('-', '_')} must be an integer, got {v!r}",
              file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sensorsim", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run the experiment grid and write CSVs")
    s.add_argument("--plan", default=_env("plan"), help="JSON plan file (default: the 3x3 rate grid)")
    s.add_argument("--out", default=_env("out", "results"), help="output directory")
    s.add_argument("--preset", choices=sorted(PRESETS), default=_env("preset", "desk"))
    s.add_argument("--seed", type=int, default=_env("seed"))
    s.add_argument("--strategies", default=_env("strategies"),
                   help="comma list from: " + ",".join(STRATEGIES))
    s.add_argument("--mode", choices=[m.value for m in DetectionMode], default=_env("mode"),
                   help="sensor detection mode")
    s.add_argument("--series", default=_env("series"), help="comma list of labels, e.g. [3-3]")
    s.add_argument("--runs", type=int, default=_env("runs"), help="runs per series")
    s.add_argument("--cold-start", action="store_true", default=_env_flag("cold-start"))
    s.add_argument("--jobs", type=int, default=_env_int("jobs", 1))

    r = sub.add_parser("report", help="tabulate a results directory as 3x3 grids")
    r.add_argument("results_dir")

    sp = sub.add_parser("sensor-proxy", help="reverse proxy that fingerprints responses")
    sp.add_argument("--listen", default=_env("listen", "127.0.0.1:8080"))
    sp.add_argument("--origin", default=_env("origin"), required=_env("origin") is None)
    sp.add_argument("--robot", default=_env("robot"), required=_env("robot") is None,
                    help="robot endpoint base, e.g. http://127.0.0.1:8090")
    sp.add_argument("--exclusions", default=_env("exclusions"), help="exclusion prefix file")
    sp.add_argument("--notify-on-new", action="store_true", default=_env_flag("notify-on-new"))
    sp.add_argument("--queue-capacity", type=int, default=_env_int("queue-capacity", 1024))
    sp.add_argument("--public-base", default=_env("public-base"),
                    help="base URL put into notifications (default: from the Host header)")

    rd = sub.add_parser("robotd", help="notification receiver and refetcher")
    rd.add_argument("--listen", default=_env("listen", "127.0.0.1:8090"))
    rd.add_argument("--refetch-window", type=float, default=float(_env("refetch-window", 60.0)),
                    help="seconds within which a repeated (url, digest) is dropped")

    sub.add_parser("selftest", help="quick built-in checks")
    return p


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    import json

    try:
        if args.plan:
            plan = load_plan(args.plan, args.preset)
        else:
            plan = plan_from_dict({}, args.preset)
        changes = {}
        if args.seed is not None:
            changes["base_seed"] = plan_from_dict({"base_seed": int(args.seed)}).base_seed
        if args.strategies:
            names = [x.strip() for x in args.strategies.split(",") if x.strip()]
            changes["strategies"] = plan_from_dict({"strategies": names}).strategies
        if args.mode:
            changes["detection_mode"] = DetectionMode(args.mode)
        if args.runs is not None:
            changes["runs_per_series"] = plan_from_dict({"runs_per_series": args.runs}).runs_per_series
        if args.cold_start:
            changes["warm_start"] = False
        if args.series:
            wanted = [x.strip() for x in args.series.split(",") if x.strip()]
            known = {s.label: s for s in plan.series}
            missing = [w for w in wanted if w not in known]
            if missing:
                raise PlanError("series", f"not in plan: {', '.join(missing)}")
            changes["series"] = tuple(known[w] for w in wanted)
        plan = plan.replace(**changes)
    except PlanError as exc:
        print(f"sensorsim simulate: bad plan: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"sensorsim simulate: cannot read plan {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"sensorsim simulate: cannot read plan: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("sensorsim simulate: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    w = plan.world
    print(f"plan: {len(plan.series)} series x {plan.runs_per_series} runs x "
          f"{len(plan.strategies)} strategies; N={w.n_resources} horizon={w.horizon} "
          f"mode={plan.detection_mode.value} warm_start={str(plan.warm_start).lower()} "
          f"seed={plan.base_seed}", flush=True)
    try:
        results = run_plan(plan, jobs=args.jobs)
        write_results(results, args.out)
    except ContractViolation as exc:
        print(f"sensorsim simulate: run aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"sensorsim simulate: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for row in summarize(results):
        print(f"{row.series} {row.strategy:<7} freshness_last_half={row.mean_freshness_last_half:.4f}% "
              f"final_bytes_mean={row.final_bytes_mean:.1f} final_gb_mean={row.final_gb_mean:.6f} "
              f"runs={row.runs}")
    print(f"wrote {len(results)} run files and summary.csv to {args.out}")
    return EXIT_OK


# -- report --------------------------------------------------------------------

_RUN_FILE_RE = re.compile(r"^series-(\d+)-(\d+)_run(\d+)_([a-z]+)\.csv$")


class CorruptResults(Exception):
    pass


def read_run_csv(path: Path) -> list[MetricsSample]:
    samples = []
    try:
        with open(path, newline="", encoding="ascii") as fh:
            rows = csv.reader(fh)
            header = next(rows, None)
            if tuple(header or ()) != RUN_HEADER:
                raise CorruptResults(f"{path}: unexpected header {header!r}")
            for lineno, row in enumerate(rows, start=2):
                if len(row) != 3:
                    raise CorruptResults(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
                try:
                    s = MetricsSample(int(row[0]), float(row[1]), int(row[2]))
                except ValueError as exc:
                    raise CorruptResults(f"{path}:{lineno}: {exc}") from None
                if not 0.0 <= s.freshness_pct <= 100.0 or s.bytes_cumulative < 0:
                    raise CorruptResults(f"{path}:{lineno}: value out of range")
                if samples and (s.t <= samples[-1].t or s.bytes_cumulative < samples[-1].bytes_cumulative):
                    raise CorruptResults(f"{path}:{lineno}: samples out of order")
                samples.append(s)
    except UnicodeDecodeError as exc:
        raise CorruptResults(f"{path}: not a text CSV ({exc.reason})") from None
    if not samples:
        raise CorruptResults(f"{path}: no samples")
    return samples


def format_grids(rows) -> str:
    out = []
    by_cell = {}
    extra = []
    for row in rows:
        m = re.match(r"^\[(\d+)-(\d+)\]$", row.series)
        r, c = (int(m.group(1)), int(m.group(2))) if m else (0, 0)
        if 1 <= r <= 3 and 1 <= c <= 3:
            by_cell[(row.strategy, r, c)] = row
        else:
            extra.append(row)
    strategies = [s for s in STRATEGIES if any(k[0] == s for k in by_cell)]
    strategies += sorted({k[0] for k in by_cell} - set(strategies))
    width = 20
    for strat in strategies:
        out.append(f"{strat}: mean freshness over last half (%) / final Gb (1 Gb = 2^30 bytes)")
        out.append(" " * 14 + "".join(f"{'changes=' + str(ch):>{width}}" for ch in CHANGE_LEVELS))
        for r, req in enumerate(REQUEST_LEVELS, start=1):
            cells = []
            for c in range(1, 4):
                row = by_cell.get((strat, r, c))
                cells.append(f"{row.mean_freshness_last_half:8.2f} / {row.final_gb_mean:7.3f}"
                             if row else "-")
            out.append(f"{'requests=' + str(req):<14}" + "".join(f"{x:>{width}}" for x in cells))
        out.append("")
    for row in extra:
        out.append(f"{row.series} {row.strategy}: {row.mean_freshness_last_half:.2f} / "
                   f"{row.final_gb_mean:.3f}")
    return "\n".join(out).rstrip() + "\n"


def cmd_report(args) -> int:
    d = Path(args.results_dir)
    if not d.is_dir():
        print(f"sensorsim report: {d} is not a directory", file=sys.stderr)
        return EXIT_RUNTIME
    groups: dict = {}
    try:
        for path in sorted(d.iterdir()):
            m = _RUN_FILE_RE.match(path.name)
            if not m:
                continue
            label = f"[{m.group(1)}-{m.group(2)}]"
            groups.setdefault((label, m.group(4)), []).append(read_run_csv(path))
    except CorruptResults as exc:
        print(f"sensorsim report: corrupt results: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"sensorsim report: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not groups:
        print(f"sensorsim report: no run CSVs in {d}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(format_grids(summarize_samples(groups)))
    return EXIT_OK


# -- servers -------------------------------------------------------------------

def _serve_until_signalled(server, on_ready: str) -> None:
    def stop(signum, frame):
        threading.Thread(target=server.shutdown, daemon=True).start()

    previous = {sig: signal.signal(sig, stop) for sig in (signal.SIGTERM, signal.SIGINT)}
    try:
        print(on_ready, flush=True)
        server.serve_forever(poll_interval=0.1)
    finally:
        server.server_close()
        for sig, handler in previous.items():
            signal.signal(sig, handler)


def cmd_sensor_proxy(args) -> int:
    from .protocol import (ExclusionRules, FingerprintStore, Notifier, ProxyApp, SensorMiddleware,
                           http_deliver, load_exclusions)
    from .protocol.server import build_server, parse_address

    try:
        host, port = parse_address(args.listen)
        origin = ProxyApp(args.origin)
        rules = load_exclusions(args.exclusions) if args.exclusions else ExclusionRules()
    except ValueError as exc:
        print(f"sensorsim sensor-proxy: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"sensorsim sensor-proxy: cannot read exclusions: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.queue_capacity < 1:
        print("sensorsim sensor-proxy: --queue-capacity must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    notifier = Notifier(http_deliver(args.robot), capacity=args.queue_capacity)
    app = SensorMiddleware(origin, FingerprintStore(), rules, notifier,
                           notify_on_new=args.notify_on_new, public_base=args.public_base)
    try:
        server = build_server(app, host, port)
    except OSError as exc:
        print(f"sensorsim sensor-proxy: cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    notifier.start()
    h, p = server.server_address[:2]
    try:
        _serve_until_signalled(server, f"sensor-proxy listening on http://{h}:{p} -> {args.origin}")
    finally:
        notifier.flush(2.0)
        notifier.stop()
        c = app.counters()
        print(" ".join(f"{k}={v}" for k, v in c.items()), flush=True)
    return EXIT_OK


def cmd_robotd(args) -> int:
    from .protocol import Refetcher, RefetchQueue, RobotReceiver
    from .protocol.server import build_server, parse_address

    try:
        host, port = parse_address(args.listen)
    except ValueError as exc:
        print(f"sensorsim robotd: {exc}", file=sys.stderr)
        return EXIT_USAGE
    queue = RefetchQueue(window=args.refetch_window)
    receiver = RobotReceiver(queue)
    refetcher = Refetcher(queue)
    try:
        server = build_server(receiver, host, port)
    except OSError as exc:
        print(f"sensorsim robotd: cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    refetcher.start()
    h, p = server.server_address[:2]
    try:
        _serve_until_signalled(server, f"robotd listening on http://{h}:{p}/sensor-notify")
    finally:
        refetcher.drain(2.0)
        refetcher.stop()
        print(f"received={receiver.received} rejected={receiver.rejected} "
              f"duplicates={queue.duplicates} refetches={refetcher.fetches} "
              f"refetch_failures={refetcher.failures} indexed={len(refetcher.index)}", flush=True)
    return EXIT_OK


# -- selftest ------------------------------------------------------------------

def cmd_selftest(args) -> int:
    from . import selftest

    ok = True
    for name, check in selftest.CHECKS:
        t0 = time.perf_counter()
        try:
            check()
        except Exception as exc:  # noqa: BLE001 - report every failing check
            ok = False
            print(f"FAIL {name}: {type(exc).__name__}: {exc}")
        else:
            print(f"PASS {name} ({time.perf_counter() - t0:.2f}s)")
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {
    "simulate": cmd_simulate,
    "report": cmd_report,
    "sensor-proxy": cmd_sensor_proxy,
    "robotd": cmd_robotd,
    "selftest": cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
