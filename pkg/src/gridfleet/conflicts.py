"""Conflict detection across robots' plans and the replanning round.

Detection classifies every shared-cell co-occupancy within the lookahead
window into opposite / following / crossing. The replanning round first
eliminates opposite conflicts (re-planning the worst offender each pass),
then re-plans by the weighted following/crossing score until it drops to the
configured threshold.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .model import Cell
from .planner import (
    ConflictKind,
    Plan,
    UnreachableError,
    classify_shared_cell,
    plan_cell_index,
    travel_dir,
)


@dataclass(frozen=True, slots=True)
class Conflict:
    kind: ConflictKind
    robots: tuple[int, int]
    cell: Cell
    indices: tuple[int, int]


@dataclass(frozen=True)
class ConflictReport:
    """All pairwise conflicts plus per-robot tallies and replan scores."""

    conflicts: tuple[Conflict, ...]
    opposite_counts: dict[int, int]
    following_counts: dict[int, int]
    crossing_counts: dict[int, int]
    gammas: dict[int, float]
    gamma: float

    @property
    def has_opposite(self) -> bool:
        return any(self.opposite_counts.values())


def classify_pair(plan_i: Plan, plan_j: Plan, horizon: int) -> list[Conflict]:
    """Conflicts between two plans at cells both reach within the horizon."""
    conflicts: list[Conflict] = []
    index = plan_cell_index([plan_j], horizon)
    cells = plan_i.cells
    last = min(horizon, len(cells) - 1)
    for k in range(last + 1):
        hits = index.get(cells[k])
        if not hits:
            continue
        prev = cells[k - 1] if k > 0 else None
        nxt = cells[k + 1] if k + 1 < len(cells) else None
        entry = travel_dir(plan_i, k)
        for _, idx_j, entry_j, prev_j, next_j in hits:
            kind = classify_shared_cell(
                k, entry, prev, nxt, idx_j, entry_j, prev_j, next_j
            )
            if kind is not None:
                conflicts.append(
                    Conflict(kind, (plan_i.robot, plan_j.robot), cells[k], (k, idx_j))
                )
    return conflicts


def detect_all(
    plans: Iterable[Plan],
    frozen: frozenset[Cell] | set[Cell],
    horizon: int,
    delta_fol: float = 1.0,
    delta_cross: float = 2.0,
) -> ConflictReport:
    """Pairwise conflict report over all active plans.

    Robots parked on a frozen cell (finished robots) are static obstacles and
    take part in no conflict.
    """
    active = [
        p for p in plans if not (len(p.cells) == 1 and p.cells[0] in frozen)
    ]
    opp: dict[int, int] = {p.robot: 0 for p in active}
    fol: dict[int, int] = {p.robot: 0 for p in active}
    cros: dict[int, int] = {p.robot: 0 for p in active}
    conflicts: list[Conflict] = []

    index = plan_cell_index(active, horizon)
    plan_by_robot = {p.robot: p for p in active}
    for cell, hits in index.items():
        if len(hits) < 2:
            continue
        for a in range(len(hits)):
            rid_i, k, entry_i, prev_i, next_i = hits[a]
            for b in range(a + 1, len(hits)):
                rid_j, g, entry_j, prev_j, next_j = hits[b]
                if rid_i == rid_j:
                    continue
                kind = classify_shared_cell(
                    k, entry_i, prev_i, next_i, g, entry_j, prev_j, next_j
                )
                if kind is None:
                    continue
                lo, hi = (rid_i, rid_j) if rid_i < rid_j else (rid_j, rid_i)
                idx = (k, g) if rid_i < rid_j else (g, k)
                conflicts.append(Conflict(kind, (lo, hi), cell, idx))
                if kind is ConflictKind.OPPOSITE:
                    opp[rid_i] += 1
                    opp[rid_j] += 1
                elif kind is ConflictKind.FOLLOWING:
                    fol[rid_i] += 1
                    fol[rid_j] += 1
                else:
                    cros[rid_i] += 1
                    cros[rid_j] += 1

    gammas = {
        rid: delta_fol * fol[rid] + delta_cross * cros[rid] for rid in plan_by_robot
    }
    gamma = max(gammas.values(), default=0.0)
    conflicts.sort(key=lambda c: (c.robots, c.indices, c.cell))
    return ConflictReport(tuple(conflicts), opp, fol, cros, gammas, gamma)


@dataclass
class RoundResult:
    plans: dict[int, Plan]
    ok: bool
    replans: int
    failure: str | None = None


ReplanFn = Callable[[int, Mapping[int, Plan]], Plan]


def replan_round(
    plans: Mapping[int, Plan],
    replan: ReplanFn,
    frozen: frozenset[Cell] | set[Cell],
    horizon: int,
    delta_fol: float,
    delta_cross: float,
    gamma_threshold: float,
    opposite_budget: int,
    gamma_budget: int,
) -> RoundResult:
    """One replanning round: clear opposite conflicts, then pull the weighted
    score under the threshold.

    Each pass re-plans the currently worst robot (ties broken by lower id).
    A robot whose re-plan returns an unchanged plan is set aside until some
    other re-plan alters the landscape; if every candidate is stuck or a
    budget runs out, the round exits as a soft failure with the best plans
    found so far.
    """
    working = dict(plans)
    stuck: set[int] = set()
    replans = 0

    while True:
        report = detect_all(working.values(), frozen, horizon, delta_fol, delta_cross)

        if report.has_opposite:
            if opposite_budget <= 0:
                return RoundResult(working, False, replans, "opposite budget exhausted")
            candidates = sorted(
                (rid for rid, n in report.opposite_counts.items() if n > 0 and rid not in stuck),
                key=lambda rid: (-report.opposite_counts[rid], rid),
            )
            if not candidates:
                return RoundResult(working, False, replans, "opposite conflicts at a fixed point")
            target = candidates[0]
            opposite_budget -= 1
            replans += 1
            try:
                new_plan = replan(target, working)
            except UnreachableError:
                stuck.add(target)
                continue
            if new_plan.cells == working[target].cells:
                stuck.add(target)
                continue
            working[target] = new_plan
            stuck.clear()
            continue

        if report.gamma > gamma_threshold:
            if gamma_budget <= 0:
                return RoundResult(working, False, replans, "score budget exhausted")
            candidates = sorted(
                (rid for rid, g in report.gammas.items() if g > 0 and rid not in stuck),
                key=lambda rid: (-report.gammas[rid], rid),
            )
            if not candidates:
                return RoundResult(working, False, replans, "score above threshold at a fixed point")
            target = candidates[0]
            gamma_budget -= 1
            replans += 1
            try:
                new_plan = replan(target, working)
            except UnreachableError:
                stuck.add(target)
                continue
            if new_plan.cells == working[target].cells:
                stuck.add(target)
                continue
            working[target] = new_plan
            stuck.clear()
            continue

        return RoundResult(working, True, replans)


def conflict_log_rows(tick: int, report: ConflictReport) -> list[str]:
    """CSV rows "tick,kind,robot_i,robot_j,x,y,idx_i,idx_j" for one report."""
    return [
        f"{tick},{c.kind.value},{c.robots[0]},{c.robots[1]},{c.cell[0]},{c.cell[1]},{c.indices[0]},{c.indices[1]}"
        for c in report.conflicts
    ]
