"""Command-line interface: run benchmark experiments, replay and validate traces,
and render report figures.

Every flag can also be supplied through a key=value config file (--config);
explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import (
    DEFAULT_REGIMES,
    ExperimentConfig,
    emit_results,
    read_runs_csv,
    run_experiment,
)
from .engine import TraceRecord, read_trace
from .model import GridGraph, load_map
from .planner import PlannerConfig
from .runner import ALGORITHMS

_RUN_DEFAULTS: dict[str, object] = {
    "map": None,
    "gen": "30x30",
    "robots": 80,
    "density": 0.0,
    "style": "open",
    "algo": ",".join(ALGORITHMS),
    "regime": ",".join(DEFAULT_REGIMES),
    "runs": 15,
    "seed": 0,
    "jobs": 1,
    "out": "bench_out",
    "scenario_per_run": False,
    "traces": False,
    "no_plot": False,
    "quiet": False,
}

_PLANNER_KEYS: dict[str, type] = {
    "zeta1": float,
    "zeta2": float,
    "zeta3": float,
    "sigma": float,
    "c1": float,
    "c2": float,
    "c3": float,
    "queue_capacity": int,
    "turn_wait": int,
    "delta_fol": float,
    "delta_cross": float,
    "horizon": int,
    "gamma_threshold": float,
    "m_cap": int,
    "sim_horizon": int,
    "stall_limit": int,
    "replan_period": int,
    "replan_cooldown": int,
    "speed_sampling": str,
}

_BOOL_KEYS = ("scenario_per_run", "traces", "no_plot", "quiet")


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse a key=value config file; blank lines and #-comments are skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce_bool(value: str) -> bool:
    if value.lower() in ("1", "true", "yes", "on"):
        return True
    if value.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _merge_run_options(args: argparse.Namespace) -> dict[str, object]:
    """Defaults, then config file values, then explicit flags."""
    merged: dict[str, object] = dict(_RUN_DEFAULTS)
    planner_overrides: dict[str, object] = {}

    if args.config:
        for key, raw in load_config_file(args.config).items():
            if key in _PLANNER_KEYS:
                planner_overrides[key] = _PLANNER_KEYS[key](raw)
            elif key in _RUN_DEFAULTS:
                default = _RUN_DEFAULTS[key]
                if key in _BOOL_KEYS:
                    merged[key] = _coerce_bool(raw)
                elif isinstance(default, int) and not isinstance(default, bool):
                    merged[key] = int(raw)
                elif isinstance(default, float):
                    merged[key] = float(raw)
                else:
                    merged[key] = raw
            else:
                raise ValueError(f"unknown config key {key!r}")

    for key in _RUN_DEFAULTS:
        flag_value = getattr(args, key, None)
        if flag_value is not None and flag_value is not False:
            merged[key] = flag_value
        elif key in _BOOL_KEYS and flag_value is True:
            merged[key] = True

    merged["planner_overrides"] = planner_overrides
    return merged


def _build_planner(overrides: dict[str, object]) -> PlannerConfig:
    if not overrides:
        return PlannerConfig()
    zeta = [4.0, 1.0, 2.0]
    fields = {}
    for key, value in overrides.items():
        if key in ("zeta1", "zeta2", "zeta3"):
            zeta[int(key[-1]) - 1] = float(value)
        else:
            fields[key] = value
    if any(k in overrides for k in ("zeta1", "zeta2", "zeta3")):
        fields["zeta"] = tuple(zeta)
    return PlannerConfig(**fields)


def cmd_run(args: argparse.Namespace) -> int:
    opts = _merge_run_options(args)
    if opts["map"]:
        width = height = 0
    else:
        try:
            w_s, h_s = str(opts["gen"]).lower().split("x")
            width, height = int(w_s), int(h_s)
        except ValueError:
            print(f"error: --gen expects WxH, got {opts['gen']!r}", file=sys.stderr)
            return 2

    planner = _build_planner(opts["planner_overrides"])
    exp = ExperimentConfig(
        algos=tuple(str(opts["algo"]).split(",")),
        regimes=tuple(str(opts["regime"]).split(",")),
        runs=int(opts["runs"]),
        master_seed=int(opts["seed"]),
        width=width,
        height=height,
        robots=int(opts["robots"]),
        density=float(opts["density"]),
        style=str(opts["style"]),
        map_path=opts["map"],
        scenario_per_run=bool(opts["scenario_per_run"]),
        jobs=int(opts["jobs"]),
        planner=planner,
        traces_dir=str(Path(opts["out"]) / "traces") if opts["traces"] else None,
    )

    quiet = bool(opts["quiet"])

    def progress(task, result):
        if quiet:
            return
        algo, regime, k = task
        span = "timeout" if result.timeout else result.makespan
        print(f"  {algo:7s} v={regime:7s} run {k:2d}: makespan={span} ({result.wall_s:.2f}s)")

    result = run_experiment(exp, progress=progress)
    paths = emit_results(result, opts["out"])
    if not quiet:
        print(f"wrote {paths['runs']}, {paths['summary']}, {paths['hashes']}")
        _print_summary(result.summaries)

    if not opts["no_plot"]:
        from .report import render_boxplots

        rows = read_runs_csv(paths["runs"])
        fig_path = render_boxplots(
            rows, Path(opts["out"]) / "makespan_boxplot.png",
            algos=list(exp.algos), regimes=list(exp.regimes),
        )
        if not quiet:
            print(f"wrote {fig_path}")
    return 0


def _print_summary(summaries: list[dict]) -> None:
    print(f"{'algo':8s}{'regime':10s}{'mean':>10s}{'median':>10s}{'fail':>7s}")
    for row in summaries:
        mean = f"{row['mean']:.1f}" if row["mean"] == row["mean"] else "-"
        med = f"{row['median']:.1f}" if row["median"] == row["median"] else "-"
        print(
            f"{row['algo']:8s}{row['regime']:10s}{mean:>10s}{med:>10s}"
            f"{row['fail_rate']:>7.2f}"
        )


def _group_by_tick(records: list[TraceRecord]) -> dict[int, list[TraceRecord]]:
    by_tick: dict[int, list[TraceRecord]] = {}
    for rec in records:
        by_tick.setdefault(rec.t, []).append(rec)
    return by_tick


def cmd_replay(args: argparse.Namespace) -> int:
    records = read_trace(args.trace)
    if not records:
        print("error: empty trace", file=sys.stderr)
        return 2
    by_tick = _group_by_tick(records)
    ticks = sorted(by_tick)
    robots = sorted({r.robot for r in records})
    graph = load_map(args.map) if args.map else None
    print(f"trace: {len(ticks)} ticks, {len(robots)} robots ({args.trace})")

    if args.at is not None:
        if args.at not in by_tick:
            print(f"error: tick {args.at} not in trace", file=sys.stderr)
            return 2
        _render_tick(by_tick[args.at], graph, args.at)
    else:
        last = by_tick[ticks[-1]]
        moving = sum(1 for r in last if r.phase > 0 or r.wait > 0)
        print(f"final tick {ticks[-1]}: {len(last)} robots, {moving} still in motion")
    return 0


def _render_tick(records: list[TraceRecord], graph: GridGraph | None, tick: int) -> None:
    if graph is None:
        width = max(r.x for r in records) + 1
        height = max(r.y for r in records) + 1
        blocked: frozenset = frozenset()
    else:
        width, height, blocked = graph.width, graph.height, graph.blocked
    canvas = [["." for _ in range(width)] for _ in range(height)]
    for x, y in blocked:
        canvas[y][x] = "@"
    for rec in records:
        for cx, cy in rec.queue[1:]:
            if canvas[cy][cx] == ".":
                canvas[cy][cx] = "+"
        canvas[rec.y][rec.x] = str(rec.robot % 10)
    print(f"tick {tick}:")
    for row in canvas:
        print("".join(row))


def cmd_validate(args: argparse.Namespace) -> int:
    records = read_trace(args.trace)
    if not records:
        print("error: empty trace", file=sys.stderr)
        return 2
    graph = load_map(args.map) if args.map else None
    problems: list[str] = []
    by_tick = _group_by_tick(records)
    prev_heads: dict[int, tuple[int, int]] = {}
    for t in sorted(by_tick):
        cell_owner: dict[tuple[int, int], int] = {}
        heads: dict[int, tuple[int, int]] = {}
        for rec in by_tick[t]:
            heads[rec.robot] = (rec.x, rec.y)
            if not 0.0 <= rec.phase < 1.0:
                problems.append(f"t={t} robot {rec.robot}: phase {rec.phase} out of [0,1)")
            if rec.wait < 0:
                problems.append(f"t={t} robot {rec.robot}: negative wait")
            if rec.queue and rec.queue[0] != (rec.x, rec.y):
                problems.append(f"t={t} robot {rec.robot}: queue head != position")
            if len(set(rec.queue)) != len(rec.queue):
                problems.append(f"t={t} robot {rec.robot}: queue revisits a cell")
            for a, b in zip(rec.queue, rec.queue[1:]):
                if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                    problems.append(f"t={t} robot {rec.robot}: queue cells {a},{b} not adjacent")
            for cell in rec.queue:
                if graph is not None and not graph.is_free(cell):
                    problems.append(f"t={t} robot {rec.robot}: queue cell {cell} not free")
                if cell in cell_owner:
                    problems.append(
                        f"t={t}: cell {cell} reserved by robots {cell_owner[cell]} and {rec.robot}"
                    )
                else:
                    cell_owner[cell] = rec.robot
        for a in heads:
            for b in heads:
                if a < b and prev_heads.get(a) == heads.get(b) and prev_heads.get(b) == heads.get(a) \
                        and prev_heads.get(a) is not None and prev_heads[a] != heads[a]:
                    problems.append(f"t={t}: robots {a} and {b} swapped cells")
        prev_heads = heads

    if problems:
        for p in problems[:50]:
            print(p)
        print(f"INVALID: {len(problems)} problems found")
        return 1
    print(f"OK: {len(by_tick)} ticks, no violations")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .report import render_boxplots

    rows = read_runs_csv(args.runs)
    if not rows:
        print("error: empty runs file", file=sys.stderr)
        return 2
    out = Path(args.out) / "makespan_boxplot.png"
    path = render_boxplots(rows, out)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Grid-warehouse multi-robot path-planning benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment matrix")
    run.add_argument("--map", help="map file (overrides --gen)")
    run.add_argument("--gen", help="generate a WxH map (default 30x30)")
    run.add_argument("--robots", type=int, help="number of robots (default 80)")
    run.add_argument("--density", type=float, help="obstacle density for --gen")
    run.add_argument("--style", choices=("open", "shelves"), help="generated layout")
    run.add_argument("--algo", help=f"comma list from {','.join(ALGORITHMS)}")
    run.add_argument("--regime", help="comma list of speed regimes, e.g. 1,0.5-1")
    run.add_argument("--runs", type=int, help="runs per algorithm x regime cell")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--jobs", type=int, help="parallel worker processes")
    run.add_argument("--out", help="output directory")
    run.add_argument("--config", help="key=value config file; flags win")
    run.add_argument("--scenario-per-run", action="store_true", default=None,
                     dest="scenario_per_run", help="fresh scenario per run index")
    run.add_argument("--traces", action="store_true", default=None,
                     help="write per-run trace files")
    run.add_argument("--no-plot", action="store_true", default=None, dest="no_plot",
                     help="skip figure rendering")
    run.add_argument("--quiet", action="store_true", default=None)
    run.set_defaults(func=cmd_run)

    replay = sub.add_parser("replay", help="inspect a trace file")
    replay.add_argument("--trace", required=True)
    replay.add_argument("--map", help="map file for rendering")
    replay.add_argument("--at", type=int, help="render the grid at one tick")
    replay.set_defaults(func=cmd_replay)

    validate = sub.add_parser("validate", help="check a trace file for violations")
    validate.add_argument("--trace", required=True)
    validate.add_argument("--map", help="map file for blocked-cell checks")
    validate.set_defaults(func=cmd_validate)

    report = sub.add_parser("report", help="render figures from a runs CSV")
    report.add_argument("--runs", required=True, help="path to runs.csv")
    report.add_argument("--out", required=True, help="output directory")
    report.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
