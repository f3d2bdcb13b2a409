"""Per-tick queue filling and cell-grant arbitration.

Every tick each robot tries to extend its reserved queue along its plan up to
capacity. A cell wanted by two robots at once goes to exactly one of them:
goal ownership is checked first, then the follower pattern, then the shorter
remaining distance (random on a tie). Losers keep their shorter queue and
retry on a later tick.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping

from .model import Action, Cell, RobotState
from .planner import Plan


class DesyncError(RuntimeError):
    """A robot's queue no longer matches the prefix of its plan."""


@dataclass(frozen=True, slots=True)
class QueueRequest:
    """Cells one robot wants to append this tick, with their queue positions."""

    robot: int
    cells: tuple[Cell, ...]
    start_index: int  # 1-based queue position the first appended cell would take


@dataclass(frozen=True, slots=True)
class ArbitrationContext:
    """One side of a contested-cell decision."""

    robot: int
    position: int               # 1-based position of the contested cell
    queue: tuple[Cell, ...]     # tentative queue including wanted appends
    goal: Cell
    distance: int               # remaining cells to travel to the goal

    def cell_at(self, position: int) -> Cell | None:
        if 1 <= position <= len(self.queue):
            return self.queue[position - 1]
        return None


def _both_eq(a: Cell | None, b: Cell | None) -> bool:
    return a is not None and b is not None and a == b


def arbitrate(ci: ArbitrationContext, cj: ArbitrationContext, rng: random.Random) -> int:
    """Decide which robot is granted the cell both are trying to append.

    Positions past either queue end count as "no cell" and never match.
    """
    cell = ci.cell_at(ci.position)
    i_prev = ci.cell_at(ci.position - 1)
    i_next = ci.cell_at(ci.position + 1)
    j_prev = cj.cell_at(cj.position - 1)
    j_next = cj.cell_at(cj.position + 1)

    if cell == ci.goal:
        return ci.robot if _both_eq(i_prev, j_next) else cj.robot
    if cell == cj.goal:
        return cj.robot if _both_eq(i_next, j_prev) else ci.robot
    follower_j = _both_eq(i_next, j_prev)
    follower_i = _both_eq(i_prev, j_next)
    if follower_j and not follower_i:
        return cj.robot
    if follower_i and not follower_j:
        return ci.robot
    if ci.distance != cj.distance:
        return ci.robot if ci.distance < cj.distance else cj.robot
    return rng.choice((ci.robot, cj.robot))


def remaining_distance(state: RobotState, plan: Plan) -> int:
    """Cells the robot still has to traverse from its queue head to its goal."""
    if plan.head != state.queue.head:
        raise DesyncError(f"robot {state.id}: plan head {plan.head} != queue head {state.queue.head}")
    return len(plan.cells) - 1


def fill_queues(
    states: Mapping[int, RobotState],
    plans: Mapping[int, Plan],
    capacity: int,
    rng: random.Random,
) -> dict[int, Action]:
    """Extend every active robot's queue along its plan, granting each cell to
    at most one robot.

    Finished robots contribute an identity action; their parked cell still
    blocks appends by everyone else.
    """
    held: dict[Cell, int] = {}
    for rid in sorted(states):
        for cell in states[rid].queue.cells:
            held[cell] = rid

    wants: dict[int, list[Cell]] = {}
    active: list[int] = []
    for rid in sorted(states):
        state = states[rid]
        if state.done:
            continue
        active.append(rid)
        plan = plans[rid]
        queue_cells = state.queue.cells
        n = len(queue_cells)
        if plan.cells[:n] != queue_cells:
            raise DesyncError(
                f"robot {rid}: queue {queue_cells} is not a prefix of plan {plan.cells[:n]}"
            )
        want: list[Cell] = []
        own = set(queue_cells)
        for cell in plan.cells[n : n + (capacity - n)]:
            if cell in held or cell in own:
                break
            own.add(cell)
            want.append(cell)
        wants[rid] = want

    # Resolve contested appends cell by cell in a deterministic order.
    requested: dict[Cell, list[int]] = {}
    for rid in active:
        for cell in wants[rid]:
            requested.setdefault(cell, []).append(rid)
    contested = sorted(cell for cell, rids in requested.items() if len(rids) > 1)
    for cell in contested:
        while True:
            requesters = sorted(rid for rid in requested[cell] if cell in wants[rid])
            if len(requesters) < 2:
                break
            a, b = requesters[0], requesters[1]
            winner = arbitrate(
                _context(states[a], plans[a], wants[a], cell),
                _context(states[b], plans[b], wants[b], cell),
                rng,
            )
            loser = b if winner == a else a
            wants[loser] = wants[loser][: wants[loser].index(cell)]

    actions: dict[int, Action] = {}
    for rid in sorted(states):
        state = states[rid]
        if state.done:
            actions[rid] = Action(rid, state.queue)
        else:
            actions[rid] = Action(rid, state.queue.extended(tuple(wants[rid])))
    return actions


def _context(
    state: RobotState, plan: Plan, want: list[Cell], cell: Cell
) -> ArbitrationContext:
    tentative = state.queue.cells + tuple(want)
    return ArbitrationContext(
        robot=state.id,
        position=tentative.index(cell) + 1,
        queue=tentative,
        goal=state.goal[0],
        distance=len(plan.cells) - 1,
    )
