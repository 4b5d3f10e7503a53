"""Experiment plans (the 3x3 rate grid), run orchestration, CSV persistence."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .engine import ContractViolation, MASK64, derive_seed
from .metrics import GIB, MetricsSample
from .robot import RobotStrategy
from .sensors import DetectionMode, SensorsStrategy
from .simulation import Simulation, Streams
from .world import PRESETS, RateSpec, WorldConfig

__all__ = [
    "Series",
    "ExperimentPlan",
    "RunResult",
    "SummaryRow",
    "PlanError",
    "REQUEST_LEVELS",
    "CHANGE_LEVELS",
    "STRATEGIES",
    "table1_plan",
    "make_strategy",
    "run_simulation",
    "run_plan",
    "summarize",
    "write_results",
    "run_csv_name",
    "load_plan",
    "plan_from_dict",
    "plan_to_dict",
    "last_half_mean",
    "RUN_HEADER",
    "SUMMARY_HEADER",
]

# rows pick the request rate, columns the change rate
REQUEST_LEVELS = (1, 50, 100)
CHANGE_LEVELS = (1, 5, 10)
STRATEGIES = ("robot", "sensors")
DEFAULT_SEED = 2003

RUN_HEADER = ("t", "freshness_pct", "bytes_cumulative")
SUMMARY_HEADER = ("series", "strategy", "mean_freshness_last_half", "final_bytes_mean",
                  "final_gb_mean", "final_bytes_min", "final_bytes_max", "runs")
SUMMARY_NAME = "summary.csv"

_LABEL_RE = re.compile(r"^\[(\d+)-(\d+)\]$")


class PlanError(ValueError):
    """Invalid plan content; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Series:
    label: str
    rates: RateSpec

    @property
    def cell(self) -> tuple[int, int]:
        m = _LABEL_RE.match(self.label)
        if not m:
            raise ContractViolation(f"series label {self.label!r} is not of the form [row-col]")
        return int(m.group(1)), int(m.group(2))


@dataclass(frozen=True)
class ExperimentPlan:
    series: tuple[Series, ...]
    runs_per_series: int = 3
    base_seed: int = DEFAULT_SEED
    world: WorldConfig = field(default_factory=WorldConfig.desk)
    strategies: tuple[str, ...] = STRATEGIES
    detection_mode: DetectionMode = DetectionMode.CHANGE_TRIGGERED
    warm_start: bool = True

    def get(self, label: str) -> Series:
        for s in self.series:
            if s.label == label:
                return s
        raise KeyError(label)

    def replace(self, **changes) -> "ExperimentPlan":
        return dataclasses.replace(self, **changes)


def table1_plan(world: Optional[WorldConfig] = None, **options) -> ExperimentPlan:
    """Nine series: label ``[r-c]`` has requests ``REQUEST_LEVELS[r-1]`` and
    changes ``CHANGE_LEVELS[c-1]``, three runs each."""
    series = tuple(
        Series(f"[{r}-{c}]", RateSpec(changes, requests))
        for r, requests in enumerate(REQUEST_LEVELS, start=1)
        for c, changes in enumerate(CHANGE_LEVELS, start=1)
    )
    return ExperimentPlan(series=series, world=world if world is not None else WorldConfig.desk(),
                          **options)


@dataclass
class RunResult:
    series: str
    run: int
    strategy: str
    seed: int
    samples: list[MetricsSample]
    rounds_completed: Optional[int] = None
    notifications_sent: Optional[int] = None
    downloads_completed: int = 0
    changes: int = 0
    observable_changes: int = 0
    requests: int = 0
    change_log_digest: str = ""
    # world-wide byte total at each sample, parallel to ``samples``
    size_totals: list[int] = field(default_factory=list)
    # bytes_cumulative at each completed robot round
    round_bytes: list[int] = field(default_factory=list)
    peak_active_downloads: int = 0

    @property
    def key(self) -> tuple[str, int, str]:
        return self.series, self.run, self.strategy

    @property
    def final_bytes(self) -> int:
        return self.samples[-1].bytes_cumulative if self.samples else 0


def make_strategy(name: str, n_resources: int, mode: DetectionMode):
    if name == "robot":
        return RobotStrategy(n_resources)
    if name == "sensors":
        return SensorsStrategy(n_resources, mode)
    raise ContractViolation(f"unknown strategy {name!r}")


def run_simulation(plan: ExperimentPlan, series, run: int, strategy: str, *,
                   trace=None, verify: bool = False, streams=None,
                   simulate_requests: Optional[bool] = None) -> RunResult:
    """Execute one (series, run, strategy) tuple from t=0 to the horizon.

    World streams are seeded from ``(base_seed, run)`` only, so every series
    and both strategies share the same underlying uniforms for a given run.
    """
    if isinstance(series, str):
        series = plan.get(series)
    run_seed = derive_seed(plan.base_seed, run)
    if streams is None:
        streams = Streams(run_seed)
    strat = make_strategy(strategy, plan.world.n_resources, plan.detection_mode)
    sim = Simulation(plan.world, series.rates, strat, streams, warm_start=plan.warm_start,
                     simulate_requests=simulate_requests, trace=trace, verify=verify).run()
    is_robot = strategy == "robot"
    return RunResult(
        series=series.label,
        run=run,
        strategy=strategy,
        seed=run_seed,
        samples=sim.samples,
        rounds_completed=strat.rounds_completed if is_robot else None,
        notifications_sent=None if is_robot else strat.notifications_sent,
        downloads_completed=sim.downloads_completed,
        changes=sim.changes,
        observable_changes=sim.observable_changes,
        requests=sim.requests,
        change_log_digest=sim.change_log_digest,
        size_totals=sim.size_totals,
        round_bytes=strat.round_bytes if is_robot else [],
        peak_active_downloads=1 if is_robot else strat.downloads.peak,
    )


def _run_task(args) -> RunResult:
    plan, label, run, strategy = args
    return run_simulation(plan, label, run, strategy)


def plan_tasks(plan: ExperimentPlan) -> list[tuple[str, int, str]]:
    return [(s.label, run, strategy)
            for s in plan.series
            for run in range(1, plan.runs_per_series + 1)
            for strategy in plan.strategies]


def run_plan(plan: ExperimentPlan, jobs: int = 1, progress=None) -> list[RunResult]:
    """Run every tuple; the returned order is the task order, whatever ``jobs`` is."""
    tasks = [(plan, *t) for t in plan_tasks(plan)]
    if jobs <= 1 or len(tasks) <= 1:
        results = []
        for t in tasks:
            results.append(_run_task(t))
            if progress:
                progress(results[-1])
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = []
        for r in pool.map(_run_task, tasks):
            results.append(r)
            if progress:
                progress(r)
        return results


# -- summaries -----------------------------------------------------------------

def last_half_mean(samples: Sequence[MetricsSample]) -> float:
    """Mean freshness over samples with t strictly after half the last sample time."""
    if not samples:
        return float("nan")
    cut = samples[-1].t / 2
    tail = [s.freshness_pct for s in samples if s.t > cut]
    return statistics.fmean(tail)


@dataclass(frozen=True)
class SummaryRow:
    series: str
    strategy: str
    mean_freshness_last_half: float
    final_bytes_mean: float
    final_bytes_min: int
    final_bytes_max: int
    runs: int
    freshness_min: float = 0.0
    freshness_max: float = 0.0

    @property
    def final_gb_mean(self) -> float:
        return self.final_bytes_mean / GIB

    def csv_row(self) -> list[str]:
        return [self.series, self.strategy, f"{self.mean_freshness_last_half:.4f}",
                f"{self.final_bytes_mean:.1f}", f"{self.final_gb_mean:.6f}",
                str(self.final_bytes_min), str(self.final_bytes_max), str(self.runs)]


def _series_sort_key(label: str):
    m = _LABEL_RE.match(label)
    return (0, int(m.group(1)), int(m.group(2))) if m else (1, label)


def summarize_samples(groups: dict[tuple[str, str], list[Sequence[MetricsSample]]]) -> list[SummaryRow]:
    rows = []
    for (label, strategy) in sorted(groups, key=lambda k: (_series_sort_key(k[0]), k[1])):
        runs = groups[(label, strategy)]
        fresh = [last_half_mean(s) for s in runs]
        finals = [s[-1].bytes_cumulative if s else 0 for s in runs]
        rows.append(SummaryRow(label, strategy, statistics.fmean(fresh), statistics.fmean(finals),
                               min(finals), max(finals), len(runs), min(fresh), max(fresh)))
    return rows


def summarize(results: Iterable[RunResult]) -> list[SummaryRow]:
    groups: dict[tuple[str, str], list] = {}
    for r in results:
        groups.setdefault((r.series, r.strategy), []).append(r.samples)
    return summarize_samples(groups)


# -- persistence ---------------------------------------------------------------

def run_csv_name(series: str, run: int, strategy: str) -> str:
    m = _LABEL_RE.match(series)
    if not m:
        raise ContractViolation(f"series label {series!r} is not of the form [row-col]")
    return f"series-{m.group(1)}-{m.group(2)}_run{run}_{strategy}.csv"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def run_csv_text(result: RunResult) -> str:
    return _csv_text(RUN_HEADER, ([s.t, f"{s.freshness_pct:.4f}", s.bytes_cumulative]
                                  for s in result.samples))


def summary_csv_text(rows: Sequence[SummaryRow]) -> str:
    return _csv_text(SUMMARY_HEADER, (r.csv_row() for r in rows))


def write_results(results: Sequence[RunResult], out_dir) -> list[Path]:
    """Write one CSV per run plus ``summary.csv``; returns paths in sorted order.

    On any I/O failure the files written by this call are removed and an
    OSError naming the path is raised.
    """
    out = Path(out_dir)
    payload = {run_csv_name(*r.key): run_csv_text(r) for r in results}
    if len(payload) != len(results):
        raise ContractViolation("duplicate (series, run, strategy) in results")
    payload[SUMMARY_NAME] = summary_csv_text(summarize(results))
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in sorted(payload):
            path = out / name
            tmp = path.with_name(path.name + ".part")
            try:
                with open(tmp, "w", newline="", encoding="ascii") as fh:
                    fh.write(payload[name])
                os.replace(tmp, path)
            except OSError as exc:
                tmp.unlink(missing_ok=True)
                raise OSError(exc.errno, f"cannot write {path}: {exc.strerror or exc}") from exc
            written.append(path)
    except OSError:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


# -- plan files ----------------------------------------------------------------

_PLAN_KEYS = {"series", "runs_per_series", "base_seed", "world", "strategies",
              "detection_mode", "warm_start"}
_SERIES_KEYS = {"label", "changes", "requests"}
_WORLD_KEYS = {f.name for f in dataclasses.fields(WorldConfig)}


def _want_int(name: str, v, lo: int = 0) -> int:
    if not isinstance(v, int) or isinstance(v, bool) or v < lo:
        raise PlanError(name, f"expected an integer >= {lo}, got {v!r}")
    return v


def plan_from_dict(d: dict, preset: str = "desk") -> ExperimentPlan:
    """Build a plan from parsed JSON. Missing keys default to the 3x3 rate grid
    on the given world preset; unknown keys are rejected."""
    if not isinstance(d, dict):
        raise PlanError("plan", "top level must be a JSON object")
    for k in d:
        if k not in _PLAN_KEYS:
            raise PlanError(k, "unknown key")

    world_d = d.get("world", {})
    if not isinstance(world_d, dict):
        raise PlanError("world", "must be an object")
    for k in world_d:
        if k not in _WORLD_KEYS:
            raise PlanError(f"world.{k}", "unknown key")
    world_d = dict(world_d)
    if "kind_weights" in world_d and world_d["kind_weights"] is not None:
        world_d["kind_weights"] = tuple(world_d["kind_weights"])
    for k, v in world_d.items():
        if k not in ("kind_weights", "zero_byte_errors"):
            _want_int(f"world.{k}", v, 1)
    try:
        world = PRESETS[preset](**world_d)
    except ContractViolation as exc:
        raise PlanError("world", str(exc)) from None

    base = table1_plan(world)
    if "series" in d:
        raw = d["series"]
        if not isinstance(raw, list) or not raw:
            raise PlanError("series", "must be a non-empty list")
        series = []
        for i, s in enumerate(raw):
            if not isinstance(s, dict):
                raise PlanError(f"series[{i}]", "must be an object")
            for k in s:
                if k not in _SERIES_KEYS:
                    raise PlanError(f"series[{i}].{k}", "unknown key")
            for k in _SERIES_KEYS:
                if k not in s:
                    raise PlanError(f"series[{i}].{k}", "missing")
            label = s["label"]
            if not isinstance(label, str) or not _LABEL_RE.match(label):
                raise PlanError(f"series[{i}].label", f"expected '[row-col]', got {label!r}")
            series.append(Series(label, RateSpec(_want_int(f"series[{i}].changes", s["changes"]),
                                                 _want_int(f"series[{i}].requests", s["requests"]))))
        if len({s.label for s in series}) != len(series):
            raise PlanError("series", "duplicate labels")
        base = base.replace(series=tuple(series))

    changes = {}
    if "runs_per_series" in d:
        changes["runs_per_series"] = _want_int("runs_per_series", d["runs_per_series"], 1)
    if "base_seed" in d:
        seed = _want_int("base_seed", d["base_seed"])
        if seed > MASK64:
            raise PlanError("base_seed", "must fit in 64 bits")
        changes["base_seed"] = seed
    if "strategies" in d:
        strategies = d["strategies"]
        if (not isinstance(strategies, list) or not strategies
                or any(s not in STRATEGIES for s in strategies)
                or len(set(strategies)) != len(strategies)):
            raise PlanError("strategies", f"expected a non-empty subset of {list(STRATEGIES)}")
        changes["strategies"] = tuple(s for s in STRATEGIES if s in strategies)
    if "detection_mode" in d:
        try:
            changes["detection_mode"] = DetectionMode(d["detection_mode"])
        except ValueError:
            raise PlanError("detection_mode",
                            f"expected one of {[m.value for m in DetectionMode]}") from None
    if "warm_start" in d:
        if not isinstance(d["warm_start"], bool):
            raise PlanError("warm_start", "expected true or false")
        changes["warm_start"] = d["warm_start"]
    return base.replace(**changes)


def load_plan(path, preset: str = "desk") -> ExperimentPlan:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise PlanError("plan", f"{path}: invalid JSON ({exc})") from None
    return plan_from_dict(d, preset)


def plan_to_dict(plan: ExperimentPlan) -> dict:
    world = dataclasses.asdict(plan.world)
    if world["kind_weights"] is not None:
        world["kind_weights"] = list(world["kind_weights"])
    return {
        "series": [{"label": s.label, "changes": s.rates.changes_per_horizon,
                    "requests": s.rates.requests_per_horizon} for s in plan.series],
        "runs_per_series": plan.runs_per_series,
        "base_seed": plan.base_seed,
        "world": world,
        "strategies": list(plan.strategies),
        "detection_mode": plan.detection_mode.value,
        "warm_start": plan.warm_start,
    }
