"""Discrete-time execution engine: per-robot transitions, constraint checks, traces.

The transition per tick is: (1) adopt the action's first-move heading, paying a
turn wait when it differs from the current heading; (2) while waiting, adopt the
action queue with phase reset; otherwise accumulate phase by the effective speed
and pop the queue head when a move completes.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import (
    Action,
    Cell,
    Direction,
    GridGraph,
    PreservedQueue,
    RobotState,
    direction_between,
)


class Constraint(IntEnum):
    """Identifiers for the hard rules every joint action must satisfy."""

    QUEUE_PREFIX = 2     # the action keeps the existing queue as its prefix
    EXCLUSIVE_CELLS = 3  # no cell reserved by two robots at once
    NO_REVISIT = 4       # no cell appears twice within one action
    CONNECTED = 5        # consecutive action cells are graph edges
    CAPACITY = 6         # total queue length never exceeds its capacity


@dataclass(frozen=True, slots=True)
class ConstraintViolation:
    constraint: Constraint
    robots: tuple[int, ...]
    cells: tuple[Cell, ...]
    detail: str

    def __str__(self) -> str:
        return f"constraint {int(self.constraint)} violated by {self.robots}: {self.detail}"


class ConstraintError(RuntimeError):
    """Raised when a joint action breaks a hard constraint."""

    def __init__(self, violations: Sequence[ConstraintViolation]):
        self.violations = tuple(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class StepEvent(str, Enum):
    POPPED_HEAD = "popped-head"
    TURN_STARTED = "turn-started"
    WAIT_DECREMENT = "wait-decrement"
    IDLE = "idle"


@dataclass(frozen=True, slots=True)
class StepOutcome:
    state: RobotState
    events: tuple[StepEvent, ...]


@dataclass(frozen=True)
class SpeedRegime:
    """Distribution of the commanded speed v, in cells per full phase unit."""

    v_min: float
    v_max: float
    mode: str = "uniform"  # "fixed" | "uniform"

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "uniform"):
            raise ValueError(f"unknown speed mode {self.mode!r}")
        if self.v_min < 0 or self.v_max <= 0 or self.v_min > self.v_max:
            raise ValueError(f"bad speed range [{self.v_min}, {self.v_max}]")
        if self.mode == "fixed" and self.v_min != self.v_max:
            raise ValueError("fixed regime requires v_min == v_max")

    @classmethod
    def fixed(cls, v: float) -> "SpeedRegime":
        return cls(v, v, "fixed")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "SpeedRegime":
        return cls(lo, hi, "uniform")

    @classmethod
    def parse(cls, token: str) -> "SpeedRegime":
        """Parse the CLI token: "1" for fixed v=1, "0.5-1" for uniform [0.5, 1]."""
        token = token.strip()
        if "-" in token:
            lo_s, hi_s = token.split("-", 1)
            return cls.uniform(float(lo_s), float(hi_s))
        return cls.fixed(float(token))

    @property
    def name(self) -> str:
        if self.mode == "fixed":
            return _trim(self.v_max)
        return f"{_trim(self.v_min)}-{_trim(self.v_max)}"


def _trim(v: float) -> str:
    return f"{v:g}"


def sample_speed(regime: SpeedRegime, rng: random.Random) -> float:
    """One speed draw; fixed regimes always return v_max."""
    if regime.mode == "fixed":
        return regime.v_max
    return rng.uniform(regime.v_min, regime.v_max)


def compute_speed(run_len: int, capacity: int, v: float) -> float:
    """Effective per-tick speed: (f-1)/(N-1) * v for a straight run of f cells.

    A robot with only its current cell reserved (run_len 1) cannot move.
    """
    if capacity <= 2:
        raise ValueError("queue capacity must be greater than 2")
    if not 1 <= run_len <= capacity:
        raise ValueError(f"run length {run_len} outside [1, {capacity}]")
    if v < 0:
        raise ValueError("speed must be non-negative")
    return (run_len - 1) / (capacity - 1) * v


def first_turn_count(action: Action) -> int:
    """1-based index of the first action cell entered with a changed heading.

    For a straight run with no turn this is the number of real cells; a
    single-cell action yields 1.
    """
    cells = action.queue.cells
    if len(cells) == 1:
        return 1
    prev = direction_between(cells[0], cells[1])
    for i in range(2, len(cells)):
        cur = direction_between(cells[i - 1], cells[i])
        if cur is not prev:
            return i + 1
        prev = cur
    return len(cells)


def step_robot(state: RobotState, action: Action, v: float, turn_wait: int) -> StepOutcome:
    """Advance one robot by one tick under its action and a sampled speed."""
    queue = action.queue
    if queue.cells[: len(state.queue.cells)] != state.queue.cells:
        raise ConstraintError(
            [
                ConstraintViolation(
                    Constraint.QUEUE_PREFIX,
                    (state.id,),
                    state.queue.cells,
                    f"action {queue.cells} does not extend queue {state.queue.cells}",
                )
            ]
        )

    events: list[StepEvent] = []
    direction = state.direction
    wait = state.wait
    if len(queue.cells) > 1:
        action_dir = direction_between(queue.cells[0], queue.cells[1])
        if action_dir is not direction:
            direction = action_dir
            wait = turn_wait
            events.append(StepEvent.TURN_STARTED)

    if wait > 0:
        events.append(StepEvent.WAIT_DECREMENT)
        new = replace(state, direction=direction, queue=queue, phase=0.0, wait=wait - 1)
        return StepOutcome(new, tuple(events))

    run_len = first_turn_count(action)
    vi = compute_speed(run_len, queue.capacity, v)
    phase = state.phase + vi
    if phase >= 1.0:
        events.append(StepEvent.POPPED_HEAD)
        new = replace(state, direction=direction, queue=queue.popped(), phase=0.0, wait=0)
    else:
        if vi == 0.0:
            events.append(StepEvent.IDLE)
        new = replace(state, direction=direction, queue=queue, phase=phase, wait=0)
    return StepOutcome(new, tuple(events))


def validate_constraints(
    states: Mapping[int, RobotState],
    actions: Mapping[int, Action],
    graph: GridGraph | None = None,
) -> list[ConstraintViolation]:
    """Check the joint action against every hard rule; empty list means valid."""
    violations: list[ConstraintViolation] = []
    owners: dict[Cell, int] = {}
    for rid in sorted(actions):
        action = actions[rid]
        state = states[rid]
        cells = action.queue.cells
        n = len(state.queue.cells)
        if cells[:n] != state.queue.cells:
            violations.append(
                ConstraintViolation(
                    Constraint.QUEUE_PREFIX,
                    (rid,),
                    cells,
                    f"prefix {cells[:n]} != queue {state.queue.cells}",
                )
            )
        if len(set(cells)) != len(cells):
            dupes = tuple(c for c in set(cells) if cells.count(c) > 1)
            violations.append(
                ConstraintViolation(
                    Constraint.NO_REVISIT, (rid,), dupes, f"revisited cells {dupes}"
                )
            )
        if len(cells) > action.queue.capacity:
            violations.append(
                ConstraintViolation(
                    Constraint.CAPACITY,
                    (rid,),
                    cells,
                    f"{len(cells)} cells exceed capacity {action.queue.capacity}",
                )
            )
        for a, b in zip(cells, cells[1:]):
            if graph is not None:
                connected = graph.has_edge(a, b) and a != b
            else:
                connected = abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
            if not connected:
                violations.append(
                    ConstraintViolation(
                        Constraint.CONNECTED, (rid,), (a, b), f"no edge {a} -> {b}"
                    )
                )
        if graph is not None:
            for c in cells:
                if not graph.is_free(c):
                    violations.append(
                        ConstraintViolation(
                            Constraint.CONNECTED, (rid,), (c,), f"cell {c} not free"
                        )
                    )
        for c in cells:
            if c in owners:
                violations.append(
                    ConstraintViolation(
                        Constraint.EXCLUSIVE_CELLS,
                        (owners[c], rid),
                        (c,),
                        f"cell {c} reserved by robots {owners[c]} and {rid}",
                    )
                )
            else:
                owners[c] = rid
    return violations


def step_world(
    states: Mapping[int, RobotState],
    actions: Mapping[int, Action],
    regime: SpeedRegime,
    rng: random.Random,
    graph: GridGraph | None = None,
    turn_wait: int = 1,
    speeds: Mapping[int, float] | None = None,
) -> tuple[dict[int, RobotState], dict[int, tuple[StepEvent, ...]]]:
    """Advance all robots one tick; robots already done are frozen in place.

    Speeds are drawn per robot per tick from the regime unless an explicit
    ``speeds`` mapping is supplied. Any cross-robot cell overlap aborts with a
    collision error naming both robots.
    """
    violations = validate_constraints(states, actions, graph)
    if violations:
        raise ConstraintError(violations)

    new_states: dict[int, RobotState] = {}
    events: dict[int, tuple[StepEvent, ...]] = {}
    for rid in sorted(states):
        state = states[rid]
        if state.done:
            new_states[rid] = state
            events[rid] = ()
            continue
        v = speeds[rid] if speeds is not None else sample_speed(regime, rng)
        outcome = step_robot(state, actions[rid], v, turn_wait)
        new_states[rid] = outcome.state
        events[rid] = outcome.events
    return new_states, events


# --- trace format -----------------------------------------------------------
#
# One line per robot per tick: "t,robot,x,y,dir,phase,wait,queue" where queue
# is the semicolon-joined reserved cells, each rendered "x:y". Field order and
# float rendering are fixed so traces hash reproducibly.


@dataclass(frozen=True, slots=True)
class TraceRecord:
    t: int
    robot: int
    x: int
    y: int
    direction: int
    phase: float
    wait: int
    queue: tuple[Cell, ...]


def format_trace_line(t: int, state: RobotState) -> str:
    queue = ";".join(f"{x}:{y}" for x, y in state.queue.cells)
    x, y = state.queue.head
    return f"{t},{state.id},{x},{y},{int(state.direction)},{state.phase!r},{state.wait},{queue}"


def parse_trace_line(line: str) -> TraceRecord:
    parts = line.rstrip("\n").split(",")
    if len(parts) != 8:
        raise ValueError(f"bad trace line {line!r}")
    t, robot, x, y, direction = (int(p) for p in parts[:5])
    phase = float(parts[5])
    wait = int(parts[6])
    queue = tuple(
        (int(cx), int(cy))
        for cx, cy in (item.split(":") for item in parts[7].split(";") if item)
    )
    return TraceRecord(t, robot, x, y, direction, phase, wait, queue)


def read_trace(path: str | Path) -> list[TraceRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        records.append(parse_trace_line(line))
    return records


class SimTrace:
    """Per-tick state snapshots of one run, plus its seed and make-span."""

    def __init__(self, seed: int):
        self.seed = seed
        self.snapshots: list[tuple[int, tuple[RobotState, ...]]] = []
        self.makespan: int | None = None

    def record(self, t: int, states: Mapping[int, RobotState]) -> None:
        self.snapshots.append((t, tuple(states[rid] for rid in sorted(states))))

    def lines(self) -> Iterable[str]:
        for t, snapshot in self.snapshots:
            for state in snapshot:
                yield format_trace_line(t, state)

    def write(self, path: str | Path, header: str | None = None) -> None:
        with open(path, "w") as fh:
            if header:
                for line in header.splitlines():
                    fh.write(f"# {line}\n")
            for line in self.lines():
                fh.write(line + "\n")

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()
