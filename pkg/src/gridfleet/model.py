"""Grid-world domain model: cells, headings, reservation queues, robot state.

Everything in this module is an immutable value object; instances can be
shared freely across threads or processes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

Cell = tuple[int, int]


class Direction(IntEnum):
    """Robot heading. Numeric values are part of the trace/wire format."""

    STAY = 0
    UP = 1      # (0, -1)
    RIGHT = 2   # (+1, 0)
    DOWN = 3    # (0, +1)
    LEFT = 4    # (-1, 0)

    @property
    def delta(self) -> Cell:
        return _DELTAS[self]

    def opposite(self) -> "Direction":
        return _OPPOSITE[self]

    def perpendicular_to(self, other: "Direction") -> bool:
        if self is Direction.STAY or other is Direction.STAY:
            return False
        return self is not other and _OPPOSITE[self] is not other


_DELTAS: dict[Direction, Cell] = {
    Direction.STAY: (0, 0),
    Direction.UP: (0, -1),
    Direction.RIGHT: (1, 0),
    Direction.DOWN: (0, 1),
    Direction.LEFT: (-1, 0),
}

_OPPOSITE: dict[Direction, Direction] = {
    Direction.STAY: Direction.STAY,
    Direction.UP: Direction.DOWN,
    Direction.DOWN: Direction.UP,
    Direction.LEFT: Direction.RIGHT,
    Direction.RIGHT: Direction.LEFT,
}

MOVING_DIRECTIONS = (Direction.UP, Direction.RIGHT, Direction.DOWN, Direction.LEFT)

_DELTA_TO_DIRECTION: dict[Cell, Direction] = {d.delta: d for d in Direction}


def direction_between(g1: Cell, g2: Cell) -> Direction:
    """Heading that moves from g1 to g2; STAY when both are the same cell.

    Raises ValueError for a pair that is neither identical nor 4-adjacent.
    """
    delta = (g2[0] - g1[0], g2[1] - g1[1])
    direction = _DELTA_TO_DIRECTION.get(delta)
    if direction is None:
        raise ValueError(f"cells {g1} and {g2} are not identical or adjacent")
    return direction


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class GridGraph:
    """4-connected grid with a self-loop on every free cell.

    Cells are (x, y) with x growing rightward and y growing downward, so
    Direction.UP decreases y.
    """

    width: int
    height: int
    blocked: frozenset[Cell] = frozenset()
    _adjacency: dict[Cell, tuple[Cell, ...]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        object.__setattr__(self, "blocked", frozenset(self.blocked))
        for cell in self.blocked:
            if not self.in_bounds(cell):
                raise ValueError(f"blocked cell {cell} out of bounds")
        adjacency: dict[Cell, tuple[Cell, ...]] = {}
        blocked = self.blocked
        for y in range(self.height):
            for x in range(self.width):
                if (x, y) in blocked:
                    continue
                around = []
                for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
                    nxt = (x + dx, y + dy)
                    if self.in_bounds(nxt) and nxt not in blocked:
                        around.append(nxt)
                adjacency[(x, y)] = tuple(around)
        object.__setattr__(self, "_adjacency", adjacency)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.blocked

    def moving_neighbors(self, cell: Cell) -> tuple[Cell, ...]:
        """Free 4-neighbors of a free cell (self-loop excluded)."""
        return self._adjacency[cell]

    def neighbors(self, cell: Cell) -> set[Cell]:
        """All cells reachable in one step from ``cell``, including itself.

        Raises ValueError when the query cell is blocked or out of bounds.
        """
        if not self.is_free(cell):
            raise ValueError(f"cell {cell} is blocked or out of bounds")
        return {cell, *self._adjacency[cell]}

    def has_edge(self, a: Cell, b: Cell) -> bool:
        """True for a self-loop on a free cell or a free adjacent pair."""
        if not self.is_free(a) or not self.is_free(b):
            return False
        return a == b or manhattan(a, b) == 1

    def free_cells(self) -> list[Cell]:
        """All free cells in deterministic (y, x) raster order."""
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.blocked
        ]


FREE_CHAR = "."
BLOCKED_CHAR = "@"


def parse_map(text: str) -> GridGraph:
    """Parse the plain-text map format: "<width> <height>" then grid rows."""
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty map file")
    try:
        width_s, height_s = lines[0].split()
        width, height = int(width_s), int(height_s)
    except ValueError as exc:
        raise ValueError(f"bad map header {lines[0]!r}") from exc
    rows = [line.rstrip() for line in lines[1 : 1 + height]]
    if len(rows) != height:
        raise ValueError(f"expected {height} map rows, got {len(rows)}")
    blocked = set()
    for y, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"map row {y} has width {len(row)}, expected {width}")
        for x, ch in enumerate(row):
            if ch == BLOCKED_CHAR:
                blocked.add((x, y))
            elif ch != FREE_CHAR:
                raise ValueError(f"bad map character {ch!r} at {(x, y)}")
    return GridGraph(width, height, frozenset(blocked))


def format_map(graph: GridGraph) -> str:
    rows = [f"{graph.width} {graph.height}"]
    for y in range(graph.height):
        rows.append(
            "".join(
                BLOCKED_CHAR if (x, y) in graph.blocked else FREE_CHAR
                for x in range(graph.width)
            )
        )
    return "\n".join(rows) + "\n"


def load_map(path: str | Path) -> GridGraph:
    return parse_map(Path(path).read_text())


def save_map(graph: GridGraph, path: str | Path) -> None:
    Path(path).write_text(format_map(graph))


class _Placeholder:
    """Sentinel filling unused queue slots; never a valid cell."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "#"


PLACEHOLDER = _Placeholder()


@dataclass(frozen=True, slots=True)
class PreservedQueue:
    """Cells a robot currently holds: its position plus reserved next cells.

    The queue is append-only up to ``capacity``; the head is only removed
    when a move completes. Construction rejects revisits and disconnected
    consecutive cells, so any accepted queue is a valid reservation chain.
    """

    cells: tuple[Cell, ...]
    capacity: int

    def __post_init__(self) -> None:
        if self.capacity < 3:
            raise ValueError("queue capacity must be greater than 2")
        if not self.cells:
            raise ValueError("queue must hold at least the robot's current cell")
        if len(self.cells) > self.capacity:
            raise ValueError(
                f"queue holds {len(self.cells)} cells, capacity {self.capacity}"
            )
        if len(set(self.cells)) != len(self.cells):
            raise ValueError(f"queue revisits a cell: {self.cells}")
        for a, b in zip(self.cells, self.cells[1:]):
            if manhattan(a, b) != 1:
                raise ValueError(f"queue cells {a} and {b} are not adjacent")

    @property
    def head(self) -> Cell:
        return self.cells[0]

    @property
    def tail(self) -> Cell:
        return self.cells[-1]

    @property
    def slots(self) -> tuple[object, ...]:
        """Fixed-length view with PLACEHOLDER padding the unused suffix."""
        return self.cells + (PLACEHOLDER,) * (self.capacity - len(self.cells))

    def extended(self, new_cells: tuple[Cell, ...]) -> "PreservedQueue":
        """Append cells, preserving the existing prefix exactly."""
        if not new_cells:
            return self
        return PreservedQueue(self.cells + tuple(new_cells), self.capacity)

    def popped(self) -> "PreservedQueue":
        """Drop the head after a completed move."""
        if len(self.cells) < 2:
            raise ValueError("cannot pop the only cell of a queue")
        return PreservedQueue(self.cells[1:], self.capacity)


def effective_length(queue: PreservedQueue) -> int:
    """Number of real (non-placeholder) cells held by the queue."""
    return len(queue.cells)


@dataclass(frozen=True, slots=True)
class RobotState:
    """Full per-robot simulation state at one timestep boundary."""

    id: int
    direction: Direction
    queue: PreservedQueue
    phase: float
    wait: int
    start: tuple[Cell, Direction]
    goal: tuple[Cell, Direction]
    done: bool = False

    def __post_init__(self) -> None:
        if self.phase < 0.0:
            raise ValueError("phase must be non-negative")
        if self.wait < 0:
            raise ValueError("wait must be non-negative")

    @property
    def cell(self) -> Cell:
        return self.queue.head

    @property
    def goal_cell(self) -> Cell:
        return self.goal[0]

    @property
    def goal_direction(self) -> Direction:
        return self.goal[1]

    @property
    def at_goal(self) -> bool:
        """Goal cell reached with the goal heading and no motion in flight."""
        return (
            self.queue.head == self.goal[0]
            and self.direction is self.goal[1]
            and self.phase == 0.0
            and self.wait == 0
        )


def initial_state(
    robot_id: int,
    start: Cell,
    start_dir: Direction,
    goal: Cell,
    goal_dir: Direction,
    capacity: int,
) -> RobotState:
    """State at t=0: queue holds only the start cell, heading is the start one."""
    return RobotState(
        id=robot_id,
        direction=start_dir,
        queue=PreservedQueue((start,), capacity),
        phase=0.0,
        wait=0,
        start=(start, start_dir),
        goal=(goal, goal_dir),
    )


@dataclass(frozen=True, slots=True)
class Action:
    """A robot's queue after this tick's appends (same shape as the queue)."""

    robot: int
    queue: PreservedQueue
