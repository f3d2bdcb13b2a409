"""Comparison planners: visit-ratio cost, prioritized space-time search, and
priority-tree search.

All three share the simulator and the queue scheduler with the primary
algorithm; they differ only in how plans are produced. The space-time planners
assume one cell per step when laying out timetables, so their coordination
degrades once the engine's turn waits and speed ramps make execution drift.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .model import Cell, Direction, GridGraph, RobotState, direction_between, manhattan
from .planner import Plan, PlannerConfig


class PlanningFailure(RuntimeError):
    """The joint planner could not produce a usable set of routes."""


def adcc_cost(n: int, n_max: int, c1: float) -> float:
    """Visit-ratio surcharge for one node: c1 * n / n_max (0 when nothing is
    planned anywhere)."""
    if n_max == 0:
        if n != 0:
            raise ValueError("visit count positive while the maximum is zero")
        return 0.0
    if not 0 <= n <= n_max:
        raise ValueError(f"visit count {n} outside [0, {n_max}]")
    return c1 * n / n_max


def adcc_node_cost(plans: Iterable[Plan], c1: float) -> Callable[[Cell], float]:
    """Per-cell surcharge from how often each cell is visited by current plans."""
    counts: dict[Cell, int] = {}
    for plan in plans:
        for cell in plan.cells:
            counts[cell] = counts.get(cell, 0) + 1
    n_max = max(counts.values(), default=0)

    def cost(cell: Cell) -> float:
        return adcc_cost(counts.get(cell, 0), n_max, c1)

    return cost


# --- space-time machinery ----------------------------------------------------

Route = list[tuple[Cell, int]]  # (cell, time index), waits repeat the cell


@dataclass
class ReservationTable:
    """Space-time occupancy within a lookahead window.

    Vertex entries map (cell, t) to the owning robot; edge entries block the
    reverse traversal of a move in the same step. Cells where a route ends are
    treated as occupied from the arrival time onward (within the window), and
    statically blocked cells are occupied at every time.
    """

    horizon: int
    vertex: dict[tuple[Cell, int], int] = field(default_factory=dict)
    edges: set[tuple[Cell, Cell, int]] = field(default_factory=set)
    parked: dict[Cell, int] = field(default_factory=dict)  # cell -> arrival time
    static: set[Cell] = field(default_factory=set)
    last_time: dict[Cell, int] = field(default_factory=dict)

    def block_static(self, cells: Iterable[Cell]) -> None:
        self.static.update(cells)

    def reserve_route(self, robot: int, route: Route) -> None:
        for i, (cell, t) in enumerate(route):
            if t <= self.horizon:
                self.vertex[(cell, t)] = robot
                if t > self.last_time.get(cell, -1):
                    self.last_time[cell] = t
            if i > 0:
                prev_cell, prev_t = route[i - 1]
                if prev_cell != cell and prev_t <= self.horizon:
                    self.edges.add((prev_cell, cell, prev_t))
        last_cell, last_t = route[-1]
        parked_since = self.parked.get(last_cell)
        if parked_since is None or last_t < parked_since:
            self.parked[last_cell] = last_t

    def is_free(self, cell: Cell, t: int) -> bool:
        if cell in self.static:
            return False
        parked_since = self.parked.get(cell)
        if parked_since is not None and t >= parked_since:
            return False
        if t > self.horizon:
            return True
        return (cell, t) not in self.vertex

    def edge_free(self, a: Cell, b: Cell, t: int) -> bool:
        if t > self.horizon:
            return True
        return (b, a, t) not in self.edges

    def goal_clear_from(self, cell: Cell, t: int) -> bool:
        """True when a robot may arrive at ``cell`` at ``t`` and sit forever."""
        if cell in self.static or cell in self.parked:
            return False
        return self.last_time.get(cell, -1) < t


def space_time_astar(
    graph: GridGraph,
    start: Cell,
    goal: Cell,
    table: ReservationTable,
    max_time: int,
    max_expansions: int = 200_000,
) -> Route | None:
    """Shortest timed route from start to goal around the reservations.

    Waiting in place is a unit-cost move. Returns None when no route exists
    within the time and expansion bounds.
    """
    h0 = manhattan(start, goal)
    counter = 0
    frontier: list[tuple[int, int, int, Cell, int]] = [(h0, counter, 0, start, 0)]
    best: dict[tuple[Cell, int], int] = {(start, 0): 0}
    parents: dict[tuple[Cell, int], tuple[Cell, int] | None] = {(start, 0): None}
    expansions = 0
    while frontier:
        f, _, g, cell, t = heapq.heappop(frontier)
        if g > best.get((cell, t), 1 << 30):
            continue
        if cell == goal and table.goal_clear_from(goal, t):
            key = (cell, t)
            route: Route = [key]
            node = parents[key]
            while node is not None:
                route.append(node)
                node = parents[node]
            route.reverse()
            return route
        expansions += 1
        if expansions > max_expansions:
            return None
        nt = t + 1
        if nt > max_time:
            continue
        for nxt in (cell, *graph.moving_neighbors(cell)):
            if not table.is_free(nxt, nt):
                continue
            if nxt != cell and not table.edge_free(cell, nxt, t):
                continue
            key = (nxt, nt)
            ng = g + 1
            if ng >= best.get(key, 1 << 30):
                continue
            best[key] = ng
            parents[key] = (cell, t)
            counter += 1
            heapq.heappush(
                frontier, (ng + manhattan(nxt, goal), counter, ng, nxt, nt)
            )
    return None


def route_to_plan(robot: RobotState, route: Route) -> Plan:
    """Project a timed route onto a spatial plan, keeping the committed queue
    as prefix; waits collapse into arrival-index gaps."""
    committed = robot.queue.cells
    cells: list[Cell] = list(committed[:-1])
    arrivals: list[int] = list(range(len(cells)))
    offset = len(cells)
    last: Cell | None = None
    for cell, t in route:
        if cell == last:
            continue
        cells.append(cell)
        arrivals.append(offset + t)
        last = cell
    dirs: list[Direction] = [robot.direction]
    for a, b in zip(cells, cells[1:]):
        dirs.append(direction_between(a, b))
    return Plan(robot.id, tuple(cells), tuple(dirs), tuple(arrivals))


def wait_in_place_plan(robot: RobotState) -> Plan:
    """Fallback plan: keep the committed queue and stop extending."""
    committed = robot.queue.cells
    dirs: list[Direction] = [robot.direction]
    for a, b in zip(committed, committed[1:]):
        dirs.append(direction_between(a, b))
    return Plan(robot.id, committed, tuple(dirs), tuple(range(len(committed))))


def _route_time_bound(graph: GridGraph, cfg: PlannerConfig) -> int:
    return 4 * (graph.width + graph.height) + 4 * cfg.horizon


def ca_star_plan_all(
    graph: GridGraph,
    states: Mapping[int, RobotState],
    frozen: frozenset[Cell] | set[Cell],
    cfg: PlannerConfig,
    rng: random.Random,
) -> tuple[dict[int, Plan], list[int]]:
    """Plan all active robots in a random priority order through space-time
    search; each finished route is reserved and later robots avoid it.

    Returns the plans plus the ids of robots left with a wait-in-place
    fallback because no feasible route was found.
    """
    order = sorted(rid for rid, st in states.items() if not st.done)
    rng.shuffle(order)
    table = ReservationTable(horizon=cfg.horizon)
    table.block_static(frozen)
    max_time = _route_time_bound(graph, cfg)
    plans: dict[int, Plan] = {}
    fallbacks: list[int] = []
    for rid in order:
        state = states[rid]
        start = state.queue.tail
        route = space_time_astar(graph, start, state.goal[0], table, max_time)
        if route is None:
            plans[rid] = wait_in_place_plan(state)
            fallbacks.append(rid)
            route = [(cell, i) for i, cell in enumerate(state.queue.cells)]
            table.reserve_route(rid, route)
            continue
        committed_route = [(cell, i) for i, cell in enumerate(state.queue.cells[:-1])]
        shifted = [(cell, t + len(committed_route)) for cell, t in route]
        table.reserve_route(rid, committed_route + shifted)
        plans[rid] = route_to_plan(state, route)
    return plans, fallbacks


def repair_plan(
    graph: GridGraph,
    state: RobotState,
    others: Iterable[Plan],
    frozen: frozenset[Cell] | set[Cell],
    cfg: PlannerConfig,
) -> Plan:
    """Re-plan one robot against a proxy timetable of the others' current plans.

    Other robots are assumed to advance one cell per step from now, which is
    the same idealization the timetable planners already make.
    """
    table = ReservationTable(horizon=cfg.horizon)
    table.block_static(frozen)
    for plan in others:
        if plan.robot == state.id:
            continue
        route = [(cell, i) for i, cell in enumerate(plan.cells)]
        table.reserve_route(plan.robot, route)
    start = state.queue.tail
    route = space_time_astar(graph, start, state.goal[0], table, _route_time_bound(graph, cfg))
    if route is None:
        return wait_in_place_plan(state)
    return route_to_plan(state, route)


# --- priority-tree search ----------------------------------------------------


@dataclass
class PriorityOrdering:
    """Acyclic "outranks" relation over robot ids, grown pair by pair."""

    pairs: frozenset[tuple[int, int]] = frozenset()  # (higher, lower)

    def with_pair(self, higher: int, lower: int) -> "PriorityOrdering | None":
        """Extended ordering, or None when the new pair would create a cycle."""
        if higher == lower or (lower, higher) in self.pairs:
            return None
        new = PriorityOrdering(self.pairs | {(higher, lower)})
        return None if new.has_cycle() else new

    def ancestors(self, robot: int) -> set[int]:
        """All robots outranking ``robot``, transitively."""
        above: dict[int, set[int]] = {}
        for hi, lo in self.pairs:
            above.setdefault(lo, set()).add(hi)
        seen: set[int] = set()
        stack = [robot]
        while stack:
            node = stack.pop()
            for hi in above.get(node, ()):
                if hi not in seen:
                    seen.add(hi)
                    stack.append(hi)
        return seen

    def descendants(self, robot: int) -> set[int]:
        below: dict[int, set[int]] = {}
        for hi, lo in self.pairs:
            below.setdefault(hi, set()).add(lo)
        seen: set[int] = set()
        stack = [robot]
        while stack:
            node = stack.pop()
            for lo in below.get(node, ()):
                if lo not in seen:
                    seen.add(lo)
                    stack.append(lo)
        return seen

    def has_cycle(self) -> bool:
        below: dict[int, set[int]] = {}
        nodes: set[int] = set()
        for hi, lo in self.pairs:
            below.setdefault(hi, set()).add(lo)
            nodes.update((hi, lo))
        color: dict[int, int] = {}

        def visit(node: int) -> bool:
            color[node] = 1
            for nxt in below.get(node, ()):
                c = color.get(nxt, 0)
                if c == 1 or (c == 0 and visit(nxt)):
                    return True
            color[node] = 2
            return False

        return any(color.get(n, 0) == 0 and visit(n) for n in nodes)

    def topological(self, ids: Iterable[int]) -> list[int]:
        ids = sorted(ids)
        below: dict[int, set[int]] = {}
        indeg: dict[int, int] = {rid: 0 for rid in ids}
        for hi, lo in self.pairs:
            if hi in indeg and lo in indeg and lo not in below.setdefault(hi, set()):
                below[hi].add(lo)
                indeg[lo] += 1
        ready = [rid for rid in ids if indeg[rid] == 0]
        out: list[int] = []
        while ready:
            ready.sort()
            node = ready.pop(0)
            out.append(node)
            for lo in sorted(below.get(node, ())):
                indeg[lo] -= 1
                if indeg[lo] == 0:
                    ready.append(lo)
        return out


def _routes_collide(a: Route, b: Route) -> tuple[int, ...] | None:
    """First vertex or swap collision between two timed routes, extending both
    with goal parking; returns (time,) marker or None."""
    pos_a = {t: cell for cell, t in a}
    pos_b = {t: cell for cell, t in b}
    end_a, end_b = a[-1][1], b[-1][1]
    last = max(end_a, end_b)
    prev_a: Cell | None = None
    prev_b: Cell | None = None
    for t in range(last + 1):
        ca = pos_a.get(t, a[-1][0] if t >= end_a else None)
        cb = pos_b.get(t, b[-1][0] if t >= end_b else None)
        if ca is None or cb is None:
            continue
        if ca == cb:
            return (t,)
        if prev_a is not None and prev_b is not None and ca == prev_b and cb == prev_a:
            return (t,)
        prev_a, prev_b = ca, cb
    return None


def _first_collision(
    routes: Mapping[int, Route], active: list[int], ordering: "PriorityOrdering"
) -> tuple[int, int] | None:
    """Earliest collision among unordered robot pairs across all routes."""
    horizon = max(route[-1][1] for route in routes.values())
    position: dict[int, dict[int, Cell]] = {
        rid: {t: cell for cell, t in routes[rid]} for rid in active
    }
    ends = {rid: routes[rid][-1] for rid in active}
    prev: dict[int, Cell] = {}
    hits: list[tuple[int, int, int]] = []
    for t in range(horizon + 1):
        occupied: dict[Cell, int] = {}
        moves: dict[tuple[Cell, Cell], int] = {}
        for rid in active:
            end_cell, end_t = ends[rid]
            cell = position[rid].get(t, end_cell if t >= end_t else None)
            if cell is None:
                continue
            if cell in occupied:
                hits.append((t, occupied[cell], rid))
            else:
                occupied[cell] = rid
            last = prev.get(rid)
            if last is not None and last != cell:
                other = moves.get((cell, last))
                if other is not None:
                    hits.append((t, other, rid))
                moves[(last, cell)] = rid
            prev[rid] = cell
        if hits:
            for _, i, j in sorted(hits):
                lo, hi = (i, j) if i < j else (j, i)
                comparable = lo in ordering.ancestors(hi) or hi in ordering.ancestors(lo)
                if not comparable:
                    return (lo, hi)
            hits.clear()
    return None


def pbs_plan_all(
    graph: GridGraph,
    states: Mapping[int, RobotState],
    frozen: frozenset[Cell] | set[Cell],
    cfg: PlannerConfig,
) -> dict[int, Plan]:
    """Depth-first search over priority orderings until a collision-free joint
    timetable is found.

    On a collision between two robots the search branches on which one
    outranks the other, re-planning the demoted robot (and anything below it)
    against all its superiors; it backtracks only when a branch has no
    solution. Raises PlanningFailure once the node budget is spent.
    """
    active = sorted(rid for rid, st in states.items() if not st.done)
    max_time = _route_time_bound(graph, cfg)

    def plan_one(rid: int, ordering: PriorityOrdering, routes: dict[int, Route]) -> Route | None:
        table = ReservationTable(horizon=max_time)
        table.block_static(frozen)
        for other in ordering.ancestors(rid):
            if other in routes:
                table.reserve_route(other, routes[other])
        state = states[rid]
        return space_time_astar(graph, state.queue.tail, state.goal[0], table, max_time)

    def update_routes(
        ordering: PriorityOrdering, routes: dict[int, Route], demoted: int
    ) -> dict[int, Route] | None:
        new_routes = dict(routes)
        todo = {demoted} | ordering.descendants(demoted)
        for rid in ordering.topological(active):
            if rid not in todo:
                continue
            needs_replan = False
            for other in ordering.ancestors(rid):
                if _routes_collide(new_routes[rid], new_routes[other]):
                    needs_replan = True
                    break
            if not needs_replan:
                continue
            route = plan_one(rid, ordering, new_routes)
            if route is None:
                return None
            new_routes[rid] = route
        return new_routes

    root_routes: dict[int, Route] = {}
    for rid in active:
        route = plan_one(rid, PriorityOrdering(), root_routes)
        if route is None:
            raise PlanningFailure(f"robot {rid} has no feasible route alone")
        root_routes[rid] = route

    stack: list[tuple[PriorityOrdering, dict[int, Route]]] = [
        (PriorityOrdering(), root_routes)
    ]
    expanded = 0
    while stack:
        ordering, routes = stack.pop()
        expanded += 1
        if expanded > cfg.pbs_node_cap:
            raise PlanningFailure(f"priority search exceeded {cfg.pbs_node_cap} nodes")
        collision = _first_collision(routes, active, ordering)
        if collision is None:
            return {
                rid: route_to_plan(states[rid], routes[rid]) for rid in active
            }
        i, j = collision
        # Depth-first: push the (j outranks i) branch under the (i outranks j)
        # branch so the latter is explored first.
        for higher, lower in ((j, i), (i, j)):
            child = ordering.with_pair(higher, lower)
            if child is None:
                continue
            child_routes = update_routes(child, routes, lower)
            if child_routes is None:
                continue
            stack.append((child, child_routes))
    raise PlanningFailure("priority search exhausted without a solution")
