"""End-to-end execution of one simulation run.

Per tick: the active algorithm refreshes plans (conflict-driven replanning for
the cost-based planners, stall-driven repairs for the timetable planners), the
scheduler fills queues, the constraint validator checks the joint action, and
the engine advances every robot under its sampled speed. Robots that reach
their goal cell perform a final in-place turn onto the goal heading, then
freeze and become static obstacles.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, replace
from typing import IO, Mapping

from .baselines import (
    PlanningFailure,
    adcc_node_cost,
    ca_star_plan_all,
    pbs_plan_all,
    repair_plan,
    wait_in_place_plan,
)
from .conflicts import RoundResult, detect_all, replan_round
from .engine import (
    ConstraintError,
    SimTrace,
    SpeedRegime,
    StepEvent,
    format_trace_line,
    sample_speed,
    step_world,
    validate_constraints,
)
from .model import Cell, RobotState, initial_state
from .planner import Plan, PlannerConfig, UnreachableError, plan_path
from .scenario import Scenario
from .scheduler import fill_queues

ALGORITHMS = ("pa", "adcc", "castar", "pbs")

_MAX_REPAIRS_PER_TICK = 4


class SafetyError(RuntimeError):
    """A hard constraint broke during execution; the run is invalid."""

    def __init__(self, tick: int, violations):
        self.tick = tick
        self.violations = violations
        super().__init__(f"tick {tick}: " + "; ".join(str(v) for v in violations))


@dataclass
class RunResult:
    algo: str
    regime: str
    seed: int
    makespan: int | None
    timeout: bool
    wall_s: float
    trace_hash: str
    soft_failures: int
    replans: int


class _CostPlannerController:
    """Shared controller for the primary planner and its visit-ratio variant."""

    def __init__(self, graph, cfg: PlannerConfig, mode: str):
        self.graph = graph
        self.cfg = cfg
        self.mode = mode
        self.soft_failures = 0
        self.replans = 0
        self.cooldown_until = -1

    def _node_cost(self, rid: int, plans: Mapping[int, Plan]):
        if self.mode != "adcc":
            return None
        others = [p for r, p in plans.items() if r != rid]
        return adcc_node_cost(others, self.cfg.c1)

    def _replan_fn(self, states: Mapping[int, RobotState], frozen: set[Cell]):
        def run(rid: int, plans: Mapping[int, Plan]) -> Plan:
            others = [p for r, p in plans.items() if r != rid]
            return plan_path(
                self.graph,
                states[rid],
                others,
                frozen,
                self.cfg,
                node_cost=self._node_cost(rid, plans),
            )

        return run

    def initial_plans(
        self, states: Mapping[int, RobotState], frozen: set[Cell], rng: random.Random
    ) -> dict[int, Plan]:
        plans: dict[int, Plan] = {}
        for rid in sorted(states):
            state = states[rid]
            if state.done:
                plans[rid] = wait_in_place_plan(state)
                continue
            try:
                plans[rid] = plan_path(
                    self.graph,
                    state,
                    plans.values(),
                    frozen,
                    self.cfg,
                    node_cost=self._node_cost(rid, plans),
                )
            except UnreachableError:
                plans[rid] = wait_in_place_plan(state)
        self._round(0, states, plans, frozen)
        return plans

    def _round(self, t, states, plans: dict[int, Plan], frozen) -> None:
        cfg = self.cfg
        m = sum(1 for st in states.values() if not st.done)
        if m == 0:
            return
        result: RoundResult = replan_round(
            plans,
            self._replan_fn(states, frozen),
            frozen,
            cfg.horizon,
            cfg.delta_fol,
            cfg.delta_cross,
            cfg.gamma_threshold,
            opposite_budget=cfg.opposite_cap_factor * m,
            gamma_budget=cfg.gamma_cap_factor * m,
        )
        plans.update(result.plans)
        self.replans += result.replans
        if not result.ok:
            self.soft_failures += 1
            self.cooldown_until = t + cfg.replan_cooldown

    def on_tick(self, t, states, plans: dict[int, Plan], frozen, rng, stalled, frozen_changed):
        replan = self._replan_fn(states, frozen)
        for rid in sorted(states):
            state = states[rid]
            if state.done:
                continue
            plan = plans[rid]
            stale = frozen_changed and any(c in frozen for c in plan.cells)
            if stale or rid in stalled:
                try:
                    plans[rid] = replan(rid, plans)
                    self.replans += 1
                except UnreachableError:
                    pass
        if t >= self.cooldown_until and t % self.cfg.replan_period == 0:
            self._round(t, states, plans, frozen)


class _TimetableController:
    """Controller for the prioritized and priority-tree timetable planners."""

    def __init__(self, graph, cfg: PlannerConfig, mode: str):
        self.graph = graph
        self.cfg = cfg
        self.mode = mode
        self.soft_failures = 0
        self.replans = 0

    def initial_plans(
        self, states: Mapping[int, RobotState], frozen: set[Cell], rng: random.Random
    ) -> dict[int, Plan]:
        done_plans = {
            rid: wait_in_place_plan(st) for rid, st in states.items() if st.done
        }
        if all(st.done for st in states.values()):
            return done_plans
        if self.mode == "pbs":
            plans = pbs_plan_all(self.graph, states, frozen, self.cfg)
        else:
            plans, fallbacks = ca_star_plan_all(self.graph, states, frozen, self.cfg, rng)
            self.soft_failures += len(fallbacks)
        plans.update(done_plans)
        return plans

    def on_tick(self, t, states, plans: dict[int, Plan], frozen, rng, stalled, frozen_changed):
        needing: list[int] = []
        for rid in sorted(states):
            state = states[rid]
            if state.done:
                continue
            plan = plans[rid]
            stale = frozen_changed and any(c in frozen for c in plan.cells)
            exhausted = len(plan.cells) == 1 and plan.cells[0] != state.goal[0]
            if stale or exhausted or rid in stalled:
                needing.append(rid)
        for rid in needing[:_MAX_REPAIRS_PER_TICK]:
            others = [p for r, p in plans.items() if r != rid]
            plans[rid] = repair_plan(self.graph, states[rid], others, frozen, self.cfg)
            self.replans += 1


def _make_controller(algo: str, graph, cfg: PlannerConfig):
    if algo == "pa":
        return _CostPlannerController(graph, cfg, "pa")
    if algo == "adcc":
        return _CostPlannerController(graph, cfg, "adcc")
    if algo == "castar":
        return _TimetableController(graph, cfg, "castar")
    if algo == "pbs":
        return _TimetableController(graph, cfg, "pbs")
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")


def _handle_arrivals(
    states: dict[int, RobotState],
    plans: dict[int, Plan],
    frozen: set[Cell],
    turn_wait: int,
) -> bool:
    """Start the final in-place turn or freeze robots standing on their goal.

    Returns True when any robot newly froze.
    """
    changed = False
    for rid in sorted(states):
        st = states[rid]
        if st.done:
            continue
        if (
            len(st.queue.cells) == 1
            and st.queue.head == st.goal[0]
            and st.phase == 0.0
            and st.wait == 0
        ):
            if st.direction is not st.goal[1]:
                states[rid] = replace(st, direction=st.goal[1], wait=turn_wait)
            else:
                states[rid] = replace(st, done=True)
                frozen.add(st.queue.head)
                changed = True
    return changed


def run_simulation(
    scenario: Scenario,
    algo: str,
    regime: SpeedRegime,
    cfg: PlannerConfig,
    seed: int,
    trace_file: IO[str] | None = None,
    collect_trace: bool = False,
) -> tuple[RunResult, SimTrace | None]:
    """Simulate one scenario to completion, timeout, or planner failure.

    The returned result carries the make-span (None on timeout), a content
    hash of the full trace stream, and planner diagnostics. With
    ``collect_trace`` the full snapshot history is returned as well.
    """
    rng = random.Random(seed)
    graph = scenario.graph
    states: dict[int, RobotState] = {
        spec.id: initial_state(
            spec.id, spec.start, spec.start_dir, spec.goal, spec.goal_dir,
            cfg.queue_capacity,
        )
        for spec in scenario.robots
    }
    frozen: set[Cell] = set()
    plans: dict[int, Plan] = {}
    _handle_arrivals(states, plans, frozen, cfg.turn_wait)

    trace = SimTrace(seed) if collect_trace else None
    hasher = hashlib.sha256()

    def emit(t: int) -> None:
        for rid in sorted(states):
            line = format_trace_line(t, states[rid])
            hasher.update(line.encode())
            hasher.update(b"\n")
            if trace_file is not None:
                trace_file.write(line + "\n")
        if trace is not None:
            trace.record(t, states)

    controller = _make_controller(algo, graph, cfg)
    try:
        plans = controller.initial_plans(states, frozen, rng)
    except PlanningFailure:
        emit(0)
        result = RunResult(
            algo, regime.name, seed, None, True, 0.0, hasher.hexdigest(),
            controller.soft_failures, controller.replans,
        )
        return result, trace

    emit(0)
    makespan: int | None = 0 if all(st.done for st in states.values()) else None

    stall: dict[int, int] = {rid: 0 for rid in states}
    speeds: dict[int, float] | None = None
    if cfg.speed_sampling == "per-edge":
        speeds = {
            rid: sample_speed(regime, rng)
            for rid in sorted(states)
            if not states[rid].done
        }

    frozen_changed = True  # force a staleness scan on the first tick
    t = 0
    while makespan is None and t < cfg.sim_horizon:
        stalled = {rid for rid, n in stall.items() if n >= cfg.stall_limit}
        controller.on_tick(t, states, plans, frozen, rng, stalled, frozen_changed)
        for rid in stalled:
            stall[rid] = 0
        frozen_changed = False

        actions = fill_queues(states, plans, cfg.queue_capacity, rng)
        violations = validate_constraints(states, actions, graph)
        if violations:
            raise SafetyError(t, violations)

        states, events = step_world(
            states, actions, regime, rng, graph, cfg.turn_wait, speeds
        )

        for rid in sorted(states):
            st = states[rid]
            if st.done:
                continue
            popped = StepEvent.POPPED_HEAD in events[rid]
            if popped:
                if plans[rid].head != st.queue.head:
                    plans[rid] = plans[rid].advanced()
                if speeds is not None:
                    speeds[rid] = sample_speed(regime, rng)
                stall[rid] = 0
            elif (
                len(st.queue.cells) == 1
                and st.wait == 0
                and st.queue.head != st.goal[0]
            ):
                stall[rid] += 1
            else:
                stall[rid] = 0

        frozen_changed = _handle_arrivals(states, plans, frozen, cfg.turn_wait)
        t += 1
        emit(t)
        if all(st.done for st in states.values()):
            makespan = t

    result = RunResult(
        algo=algo,
        regime=regime.name,
        seed=seed,
        makespan=makespan,
        timeout=makespan is None,
        wall_s=0.0,
        trace_hash=hasher.hexdigest(),
        soft_failures=controller.soft_failures,
        replans=controller.replans,
    )
    return result, trace

