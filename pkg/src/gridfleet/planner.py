"""Single-robot path search with a congestion-aware cost term.

The search runs A* over (cell, heading) states. Each move costs one tick plus a
turn surcharge when the heading changes; on top of that, frontier nodes carry a
soft traffic term that penalizes routes predicted to meet other robots' plans,
shaped as a Gaussian over the gap between both robots' path distances to the
shared cell.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .model import Cell, Direction, GridGraph, RobotState, direction_between, manhattan


@dataclass(frozen=True)
class PlannerConfig:
    """All tunables shared by the planning stack and the simulator."""

    zeta: tuple[float, float, float] = (4.0, 1.0, 2.0)  # opposite, following, crossing
    sigma: float = 4.0          # width of the conflict-proximity Gaussian
    c1: float = 1.05            # distance discount base (> 1)
    c2: float = 1.5             # per-conflict-count growth base
    c3: float = 2.0             # soft turn surcharge
    queue_capacity: int = 4     # max reserved cells per robot (N)
    turn_wait: int = 1          # ticks a robot stands still to change heading (W)
    delta_fol: float = 1.0      # following-conflict weight in the replan score
    delta_cross: float = 2.0    # crossing-conflict weight in the replan score
    horizon: int = 12           # conflict lookahead window in path indices (tau)
    gamma_threshold: float = 3.0  # replan trigger for the weighted score (phi)
    m_cap: int = 10             # exponent cap for the count-growth factor
    # engineering knobs (not part of the cost model)
    sim_horizon: int = 10_000   # tick cap converting livelock into a timeout
    stall_limit: int = 8        # blocked ticks before a robot is force-replanned
    replan_period: int = 1      # run the conflict manager every K ticks
    replan_cooldown: int = 3    # ticks to back off after a soft round failure
    opposite_cap_factor: int = 4  # opposite-elimination replans per round <= 4m
    gamma_cap_factor: int = 2     # score-driven replans per round <= 2m
    pbs_node_cap: int = 10_000
    speed_sampling: str = "per-tick"  # or "per-edge"

    def __post_init__(self) -> None:
        if len(self.zeta) != 3 or any(z < 0 for z in self.zeta):
            raise ValueError("zeta must be three non-negative costs")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.c1 <= 1:
            raise ValueError("c1 must exceed 1")
        if self.c2 <= 0:
            raise ValueError("c2 must be positive")
        if self.c3 < 0:
            raise ValueError("c3 must be non-negative")
        if self.queue_capacity <= 2:
            raise ValueError("queue capacity must be greater than 2")
        if self.turn_wait < 0:
            raise ValueError("turn wait must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.speed_sampling not in ("per-tick", "per-edge"):
            raise ValueError(f"unknown speed sampling {self.speed_sampling!r}")


@dataclass(frozen=True, slots=True)
class Plan:
    """A robot's intended route from its current queue head to its goal.

    ``dirs[k]`` is the heading on entering ``cells[k]`` (for the head cell, the
    robot's current heading); ``arrivals[k]`` is the estimated arrival index
    used as the time proxy when comparing plans.
    """

    robot: int
    cells: tuple[Cell, ...]
    dirs: tuple[Direction, ...]
    arrivals: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.cells:
            raise ValueError("plan must hold at least the current cell")
        if not (len(self.cells) == len(self.dirs) == len(self.arrivals)):
            raise ValueError("plan fields must have equal length")
        for a, b in zip(self.cells, self.cells[1:]):
            if manhattan(a, b) != 1:
                raise ValueError(f"plan cells {a} and {b} are not adjacent")

    @property
    def head(self) -> Cell:
        return self.cells[0]

    @property
    def goal(self) -> Cell:
        return self.cells[-1]

    def advanced(self) -> "Plan":
        """Drop the head cell after the robot finished moving off it."""
        if len(self.cells) < 2:
            raise ValueError("cannot advance a single-cell plan")
        return Plan(self.robot, self.cells[1:], self.dirs[1:], self.arrivals[1:])


class ConflictKind(Enum):
    OPPOSITE = "opposite"
    FOLLOWING = "following"
    CROSSING = "crossing"


_KIND_SLOT = {ConflictKind.OPPOSITE: 0, ConflictKind.FOLLOWING: 1, ConflictKind.CROSSING: 2}


def classify_shared_cell(
    idx_i: int,
    entry_i: Direction,
    prev_i: Cell | None,
    next_i: Cell | None,
    idx_j: int,
    entry_j: Direction,
    prev_j: Cell | None,
    next_j: Cell | None,
) -> ConflictKind | None:
    """Kind of the conflict at one cell shared by two plans, or None.

    Opposite covers true head-on patterns: the same arrival index or a shared
    edge traversed in reverse. Equal travel directions make a following
    conflict, perpendicular ones a crossing. Opposed directions at well
    separated times with no shared edge are not a conflict.
    """
    if idx_i == idx_j:
        return ConflictKind.OPPOSITE
    if prev_i is not None and next_j is not None and prev_i == next_j:
        return ConflictKind.OPPOSITE
    if next_i is not None and prev_j is not None and next_i == prev_j:
        return ConflictKind.OPPOSITE
    if entry_i is entry_j:
        return ConflictKind.FOLLOWING
    if entry_i.perpendicular_to(entry_j):
        return ConflictKind.CROSSING
    return None


def travel_dir(plan: Plan, k: int) -> Direction:
    """Direction of travel through cell k: the entering move, or the outgoing
    one for the plan's current cell (whose stored heading may be stale)."""
    if k == 0 and len(plan.cells) > 1:
        return plan.dirs[1]
    return plan.dirs[k]


def plan_cell_index(
    plans: Iterable[Plan], horizon: int
) -> dict[Cell, list[tuple[int, int, Direction, Cell | None, Cell | None]]]:
    """Index plan cells within the horizon: cell -> (robot, idx, travel, prev, next)."""
    index: dict[Cell, list[tuple[int, int, Direction, Cell | None, Cell | None]]] = {}
    for plan in plans:
        cells = plan.cells
        last = min(horizon, len(cells) - 1)
        for k in range(last + 1):
            prev = cells[k - 1] if k > 0 else None
            nxt = cells[k + 1] if k + 1 < len(cells) else None
            index.setdefault(cells[k], []).append(
                (plan.robot, k, travel_dir(plan, k), prev, nxt)
            )
    return index


@dataclass(frozen=True)
class PathConflicts:
    """Typed conflict distances along one candidate path."""

    opposite: tuple[int, ...]
    following: tuple[int, ...]
    crossing: tuple[int, ...]

    @property
    def counts(self) -> tuple[int, int, int]:
        return (len(self.opposite), len(self.following), len(self.crossing))

    def as_lists(self) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
        return (self.opposite, self.following, self.crossing)


def count_path_conflicts(
    candidate: Plan, others: Iterable[Plan], horizon: int
) -> PathConflicts:
    """Classify every shared-cell co-occupancy between the candidate and the
    other plans whose arrival indices both fall within the horizon.

    Distances are the candidate-side path indices of the conflict cells.
    """
    index = plan_cell_index(
        (p for p in others if p.robot != candidate.robot), horizon
    )
    buckets: tuple[list[int], list[int], list[int]] = ([], [], [])
    cells = candidate.cells
    last = min(horizon, len(cells) - 1)
    for k in range(last + 1):
        hits = index.get(cells[k])
        if not hits:
            continue
        prev = cells[k - 1] if k > 0 else None
        nxt = cells[k + 1] if k + 1 < len(cells) else None
        entry = travel_dir(candidate, k)
        for _, idx_j, entry_j, prev_j, next_j in hits:
            kind = classify_shared_cell(
                k, entry, prev, nxt, idx_j, entry_j, prev_j, next_j
            )
            if kind is not None:
                buckets[_KIND_SLOT[kind]].append(k)
    return PathConflicts(tuple(buckets[0]), tuple(buckets[1]), tuple(buckets[2]))


def traffic_cost(
    node: Cell,
    s: float,
    conflicts: Sequence[Sequence[float]],
    turn_flag: bool,
    cfg: PlannerConfig,
) -> float:
    """Soft congestion cost of a search node at path distance ``s``.

    ``conflicts`` holds, per kind (opposite, following, crossing), the path
    distances of predicted conflicts. Each conflict contributes its base cost
    shaped by a Gaussian in (s - d), discounted with distance, and amplified
    by the per-kind conflict count; a turn on the entering step adds a flat
    surcharge once.
    """
    total = cfg.c3 if turn_flag else 0.0
    two_sigma_sq = 2.0 * cfg.sigma * cfg.sigma
    for zeta_i, distances in zip(cfg.zeta, conflicts):
        m = len(distances)
        if m == 0:
            continue
        growth = cfg.c2 ** min(m, cfg.m_cap)
        subtotal = 0.0
        for d in distances:
            gap = s - d
            subtotal += math.exp(-(gap * gap) / two_sigma_sq) * cfg.c1 ** (-(s + d) / 2.0)
        total += zeta_i * growth * subtotal
    return total


def heuristic(
    node: Cell,
    node_dir: Direction,
    goal: Cell,
    goal_dir: Direction,
    turn_wait: int,
) -> float:
    """Manhattan distance plus a turn lower bound (0..2) priced at the turn wait."""
    dx = goal[0] - node[0]
    dy = goal[1] - node[1]
    dist = abs(dx) + abs(dy)
    if dist == 0:
        turns = 0 if node_dir is goal_dir else 1
        return turns * turn_wait

    needed = []
    if dx > 0:
        needed.append(Direction.RIGHT)
    elif dx < 0:
        needed.append(Direction.LEFT)
    if dy > 0:
        needed.append(Direction.DOWN)
    elif dy < 0:
        needed.append(Direction.UP)

    if len(needed) == 1:
        u = needed[0]
        turns = (node_dir is not u) + (goal_dir is not u)
    else:
        u, v = needed
        turns = 1 + min(
            (node_dir is not u) + (goal_dir is not v),
            (node_dir is not v) + (goal_dir is not u),
        )
    return dist + turn_wait * min(turns, 2)


class UnreachableError(RuntimeError):
    """Raised when no path to the goal exists under the current obstacles."""


_EMPTY_CONFLICTS: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]] = ((), (), ())


def plan_path(
    graph: GridGraph,
    robot: RobotState,
    others: Iterable[Plan],
    frozen: frozenset[Cell] | set[Cell],
    cfg: PlannerConfig,
    node_cost: Callable[[Cell], float] | None = None,
) -> Plan:
    """Best path from the robot's queue head to its goal under the traffic cost.

    Cells already reserved in the robot's queue are kept as the plan prefix;
    the search continues from the queue tail. ``frozen`` cells (robots parked
    at their goals) are impassable. When ``node_cost`` is given it replaces
    the conflict-based traffic term with a per-cell surcharge accumulated
    along the path.
    """
    committed = robot.queue.cells
    start_cell = committed[-1]
    if len(committed) >= 2:
        start_dir = direction_between(committed[-2], committed[-1])
    else:
        start_dir = robot.direction
    goal_cell, goal_dir = robot.goal

    if not graph.is_free(goal_cell) or goal_cell in frozen:
        raise UnreachableError(f"robot {robot.id}: goal {goal_cell} is not free")

    blocked = frozenset(frozen) | frozenset(committed[:-1])

    other_plans = [p for p in others if p.robot != robot.id]
    use_traffic = node_cost is None and bool(other_plans)
    conflict_index = plan_cell_index(other_plans, cfg.horizon) if use_traffic else {}

    base_s = len(committed) - 1
    seed_conflicts = _EMPTY_CONFLICTS
    if use_traffic:
        lists: tuple[list[int], list[int], list[int]] = ([], [], [])
        for k, c in enumerate(committed):
            hits = conflict_index.get(c)
            if not hits:
                continue
            prev = committed[k - 1] if k > 0 else None
            if k > 0:
                entry = direction_between(committed[k - 1], c)
            elif len(committed) > 1:
                entry = direction_between(committed[0], committed[1])
            else:
                entry = robot.direction
            for _, idx_j, entry_j, prev_j, next_j in hits:
                kind = classify_shared_cell(k, entry, prev, None, idx_j, entry_j, prev_j, next_j)
                if kind is not None:
                    lists[_KIND_SLOT[kind]].append(k)
        seed_conflicts = (tuple(lists[0]), tuple(lists[1]), tuple(lists[2]))

    turn_cost = cfg.turn_wait + cfg.c3
    if node_cost is not None:
        turn_cost = float(cfg.turn_wait)

    start_acc = node_cost(start_cell) if node_cost is not None else 0.0
    # Node tuples: (acc, s, cell, dir, conflicts, parent). ``acc`` accumulates
    # moves, turn costs, and any per-cell surcharge; the conflict term is
    # re-evaluated at each frontier node rather than accumulated.
    start_state = (start_cell, start_dir)
    best: dict[tuple[Cell, Direction], float] = {start_state: start_acc}
    parents: dict[tuple[Cell, Direction], tuple[Cell, Direction] | None] = {start_state: None}

    h0 = heuristic(start_cell, start_dir, goal_cell, goal_dir, cfg.turn_wait)
    f0 = start_acc + h0
    if use_traffic:
        f0 += traffic_cost(start_cell, base_s, seed_conflicts, False, cfg)
    counter = 0
    frontier: list[tuple[float, float, int, int, int, int, float, int, tuple, tuple]] = [
        (f0, h0, start_cell[0], start_cell[1], int(start_dir), counter,
         start_acc, base_s, seed_conflicts, start_state)
    ]
    max_expansions = 80 * graph.width * graph.height
    expansions = 0

    while frontier:
        _, _, _, _, _, _, acc, s, conflicts, state = heapq.heappop(frontier)
        if acc > best.get(state, math.inf):
            continue
        cell, heading = state
        if cell == goal_cell and heading is goal_dir:
            return _extract_plan(robot, committed, parents, state)
        expansions += 1
        if expansions > max_expansions:
            raise UnreachableError(
                f"robot {robot.id}: search exceeded {max_expansions} expansions"
            )

        # In-place turn, only useful to align with the goal heading on arrival.
        if cell == goal_cell and heading is not goal_dir:
            nstate = (cell, goal_dir)
            nacc = acc + turn_cost
            if nacc < best.get(nstate, math.inf):
                best[nstate] = nacc
                parents[nstate] = state
                counter += 1
                nf = nacc
                if use_traffic:
                    nf += traffic_cost(cell, s, conflicts, True, cfg)
                heapq.heappush(
                    frontier,
                    (nf, 0.0, cell[0], cell[1], int(goal_dir), counter,
                     nacc, s, conflicts, nstate),
                )

        for nxt in graph.moving_neighbors(cell):
            if nxt in blocked:
                continue
            move_dir = direction_between(cell, nxt)
            turned = move_dir is not heading
            nacc = acc + 1.0 + (turn_cost if turned else 0.0)
            if node_cost is not None:
                nacc += node_cost(nxt)
            nstate = (nxt, move_dir)
            if nacc >= best.get(nstate, math.inf):
                continue
            ns = s + 1
            nconf = conflicts
            if use_traffic and ns <= cfg.horizon:
                hits = conflict_index.get(nxt)
                if hits:
                    lists2 = (list(conflicts[0]), list(conflicts[1]), list(conflicts[2]))
                    for _, idx_j, entry_j, prev_j, next_j in hits:
                        kind = classify_shared_cell(
                            ns, move_dir, cell, None, idx_j, entry_j, prev_j, next_j
                        )
                        if kind is not None:
                            lists2[_KIND_SLOT[kind]].append(ns)
                    nconf = (tuple(lists2[0]), tuple(lists2[1]), tuple(lists2[2]))
            best[nstate] = nacc
            parents[nstate] = state
            counter += 1
            nh = heuristic(nxt, move_dir, goal_cell, goal_dir, cfg.turn_wait)
            nf = nacc + nh
            if use_traffic:
                nf += traffic_cost(nxt, ns, nconf, turned, cfg)
            heapq.heappush(
                frontier,
                (nf, nh, nxt[0], nxt[1], int(move_dir), counter, nacc, ns, nconf, nstate),
            )

    raise UnreachableError(f"robot {robot.id}: no path from {start_cell} to {goal_cell}")


def _extract_plan(
    robot: RobotState,
    committed: tuple[Cell, ...],
    parents: Mapping[tuple[Cell, Direction], tuple[Cell, Direction] | None],
    goal_state: tuple[Cell, Direction],
) -> Plan:
    chain: list[tuple[Cell, Direction]] = []
    state: tuple[Cell, Direction] | None = goal_state
    while state is not None:
        chain.append(state)
        state = parents[state]
    chain.reverse()
    # Collapse the in-place goal turn: consecutive states on the same cell.
    cells: list[Cell] = []
    for cell, _ in chain:
        if not cells or cells[-1] != cell:
            cells.append(cell)

    full_cells = list(committed[:-1]) + cells
    dirs: list[Direction] = [robot.direction]
    for a, b in zip(full_cells, full_cells[1:]):
        dirs.append(direction_between(a, b))
    arrivals = tuple(range(len(full_cells)))
    return Plan(robot.id, tuple(full_cells), tuple(dirs), arrivals)


def plan_cost(plan: Plan, goal_dir: Direction, cfg: PlannerConfig) -> float:
    """Execution-cost proxy of a plan: moves plus priced turns, including the
    final in-place alignment to the goal heading."""
    turn_cost = cfg.turn_wait + cfg.c3
    cost = float(len(plan.cells) - 1)
    for a, b in zip(plan.dirs, plan.dirs[1:]):
        if a is not b:
            cost += turn_cost
    if plan.dirs[-1] is not goal_dir:
        cost += turn_cost
    return cost
