"""Experiment orchestration: seed fan-out, run matrix, aggregation, CSV output."""
from __future__ import annotations

import csv
import hashlib
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .engine import SpeedRegime
from .planner import PlannerConfig
from .runner import ALGORITHMS, RunResult, run_simulation
from .scenario import Scenario, generate_scenario, scenario_from_graph
from .model import GridGraph

DEFAULT_REGIMES = ("1", "0.5-1", "0-1", "0.5", "0-0.5")

RUNS_COLUMNS = ("algo", "regime", "seed", "makespan", "timeout", "wall_s")
SUMMARY_COLUMNS = (
    "algo", "regime", "mean", "median", "q1", "q3", "min", "max", "fail_rate",
)
HASHES_COLUMNS = ("algo", "regime", "seed", "trace_hash")


def derive_seed(master: int, *parts) -> int:
    """Stable per-run seed; adding algorithms or regimes never shifts others."""
    key = repr((master,) + parts).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


@dataclass(frozen=True)
class ExperimentConfig:
    algos: tuple[str, ...] = ALGORITHMS
    regimes: tuple[str, ...] = DEFAULT_REGIMES
    runs: int = 15
    master_seed: int = 0
    width: int = 30
    height: int = 30
    robots: int = 80
    density: float = 0.0
    style: str = "open"
    map_path: str | None = None
    scenario_per_run: bool = False
    jobs: int = 1
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    traces_dir: str | None = None

    def __post_init__(self) -> None:
        for algo in self.algos:
            if algo not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {algo!r}")
        for token in self.regimes:
            SpeedRegime.parse(token)
        if self.runs < 1:
            raise ValueError("runs must be positive")


@dataclass
class ExperimentResult:
    rows: list[RunResult]
    summaries: list[dict]


def _build_scenario(exp: ExperimentConfig, run_index: int) -> Scenario:
    seed_index = run_index if exp.scenario_per_run else 0
    seed = derive_seed(exp.master_seed, "scenario", seed_index)
    if exp.map_path is not None:
        from .model import load_map

        return scenario_from_graph(load_map(exp.map_path), exp.robots, seed)
    return generate_scenario(
        exp.width, exp.height, exp.robots, exp.density, seed, exp.style
    )


def _one_run(exp: ExperimentConfig, algo: str, regime_token: str, k: int) -> RunResult:
    scenario = _build_scenario(exp, k)
    regime = SpeedRegime.parse(regime_token)
    seed = derive_seed(exp.master_seed, algo, regime_token, k)
    trace_file = None
    if exp.traces_dir is not None:
        traces = Path(exp.traces_dir)
        traces.mkdir(parents=True, exist_ok=True)
        trace_file = open(traces / f"trace_{algo}_{regime_token}_{k:03d}.txt", "w")
    start = time.perf_counter()
    try:
        result, _ = run_simulation(
            scenario, algo, regime, exp.planner, seed, trace_file=trace_file
        )
    finally:
        if trace_file is not None:
            trace_file.close()
    result.wall_s = time.perf_counter() - start
    return result


def run_experiment(
    exp: ExperimentConfig, progress=None
) -> ExperimentResult:
    """Run the full algorithm x regime x seed matrix and aggregate it.

    Results are sorted before aggregation so the output is independent of
    execution order (including parallel execution).
    """
    tasks = [
        (algo, regime, k)
        for algo in exp.algos
        for regime in exp.regimes
        for k in range(exp.runs)
    ]
    rows: list[RunResult] = []
    if exp.jobs > 1:
        with ProcessPoolExecutor(max_workers=exp.jobs) as pool:
            futures = [pool.submit(_one_run, exp, *task) for task in tasks]
            for task, future in zip(tasks, futures):
                rows.append(future.result())
                if progress:
                    progress(task, rows[-1])
    else:
        for task in tasks:
            rows.append(_one_run(exp, *task))
            if progress:
                progress(task, rows[-1])

    order = {algo: i for i, algo in enumerate(exp.algos)}
    regime_order = {regime: i for i, regime in enumerate(exp.regimes)}
    rows.sort(key=lambda r: (order[r.algo], regime_order[r.regime], r.seed))
    summaries = summarize(rows, exp.algos, exp.regimes)
    return ExperimentResult(rows, summaries)


def summarize(
    rows: list[RunResult], algos: tuple[str, ...], regimes: tuple[str, ...]
) -> list[dict]:
    """Per-cell make-span statistics; timeouts are excluded from the stats but
    reported through the failure rate."""
    summaries = []
    for algo in algos:
        for regime in regimes:
            cell = [r for r in rows if r.algo == algo and r.regime == regime]
            if not cell:
                continue
            spans = sorted(r.makespan for r in cell if not r.timeout)
            fail_rate = (len(cell) - len(spans)) / len(cell)
            if spans:
                if len(spans) >= 2:
                    q1, med, q3 = statistics.quantiles(spans, n=4, method="inclusive")
                else:
                    q1 = med = q3 = float(spans[0])
                stats = {
                    "mean": statistics.fmean(spans),
                    "median": float(med),
                    "q1": float(q1),
                    "q3": float(q3),
                    "min": float(spans[0]),
                    "max": float(spans[-1]),
                }
            else:
                stats = {k: float("nan") for k in ("mean", "median", "q1", "q3", "min", "max")}
            summaries.append({"algo": algo, "regime": regime, **stats, "fail_rate": fail_rate})
    return summaries


def emit_results(result: ExperimentResult, out_dir: str | Path) -> dict[str, Path]:
    """Write runs.csv, summary.csv, and trace_hashes.csv under ``out_dir``."""
    if not result.rows:
        raise ValueError("no run results to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    runs_path = out / "runs.csv"
    with open(runs_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNS_COLUMNS)
        for r in result.rows:
            writer.writerow(
                [
                    r.algo,
                    r.regime,
                    r.seed,
                    "" if r.makespan is None else r.makespan,
                    int(r.timeout),
                    f"{r.wall_s:.3f}",
                ]
            )

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in result.summaries:
            writer.writerow(
                [row["algo"], row["regime"]]
                + [repr(row[k]) for k in ("mean", "median", "q1", "q3", "min", "max")]
                + [repr(row["fail_rate"])]
            )

    hashes_path = out / "trace_hashes.csv"
    with open(hashes_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HASHES_COLUMNS)
        for r in result.rows:
            writer.writerow([r.algo, r.regime, r.seed, r.trace_hash])

    return {"runs": runs_path, "summary": summary_path, "hashes": hashes_path}


def read_runs_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
