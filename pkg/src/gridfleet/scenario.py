"""Seeded scenario generation: maps, robot starts and goals."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .model import Cell, Direction, GridGraph, MOVING_DIRECTIONS


class ScenarioError(RuntimeError):
    """Scenario generation could not satisfy its invariants."""


@dataclass(frozen=True)
class RobotSpec:
    id: int
    start: Cell
    start_dir: Direction
    goal: Cell
    goal_dir: Direction


@dataclass(frozen=True)
class Scenario:
    graph: GridGraph
    robots: tuple[RobotSpec, ...]
    seed: int

    def __post_init__(self) -> None:
        starts = [r.start for r in self.robots]
        goals = [r.goal for r in self.robots]
        if len(set(starts)) != len(starts):
            raise ScenarioError("robot starts are not pairwise distinct")
        if len(set(goals)) != len(goals):
            raise ScenarioError("robot goals are not pairwise distinct")
        for r in self.robots:
            if not self.graph.is_free(r.start) or not self.graph.is_free(r.goal):
                raise ScenarioError(f"robot {r.id} start or goal is blocked")


def shelf_blocks(width: int, height: int) -> frozenset[Cell]:
    """Regular lattice of 4x2 shelf blocks separated by two-cell aisles."""
    blocked: set[Cell] = set()
    for y0 in range(2, height - 3, 4):
        for x0 in range(2, width - 5, 6):
            for dy in range(2):
                for dx in range(4):
                    blocked.add((x0 + dx, y0 + dy))
    return frozenset(blocked)


def _components(graph: GridGraph) -> dict[Cell, int]:
    """Connected-component label per free cell (flood fill)."""
    label: dict[Cell, int] = {}
    current = 0
    for cell in graph.free_cells():
        if cell in label:
            continue
        current += 1
        stack = [cell]
        label[cell] = current
        while stack:
            node = stack.pop()
            for nxt in graph.moving_neighbors(node):
                if nxt not in label:
                    label[nxt] = current
                    stack.append(nxt)
    return label


def generate_scenario(
    width: int,
    height: int,
    robot_count: int,
    obstacle_density: float = 0.0,
    seed: int = 0,
    style: str = "open",
    max_tries: int = 50,
) -> Scenario:
    """Seeded scenario: random obstacles (or a shelf lattice), then distinct
    starts and goals whose pairs are verified connected; regenerates on a bad
    draw up to ``max_tries`` times.
    """
    if robot_count < 0:
        raise ScenarioError("robot count must be non-negative")
    if not 0.0 <= obstacle_density < 1.0:
        raise ScenarioError("obstacle density must be in [0, 1)")
    if style not in ("open", "shelves"):
        raise ScenarioError(f"unknown scenario style {style!r}")

    for attempt in range(max_tries):
        rng = random.Random((seed, attempt, width, height, robot_count).__repr__())
        if style == "shelves":
            blocked = shelf_blocks(width, height)
        else:
            cells = [(x, y) for y in range(height) for x in range(width)]
            k = int(round(obstacle_density * len(cells)))
            blocked = frozenset(rng.sample(cells, k)) if k else frozenset()
        graph = GridGraph(width, height, blocked)
        free = graph.free_cells()
        if len(free) < robot_count:
            continue

        starts = rng.sample(free, robot_count) if robot_count else []
        goals = rng.sample(free, robot_count) if robot_count else []
        labels = _components(graph)
        if any(labels[s] != labels[g] for s, g in zip(starts, goals)):
            continue
        robots = tuple(
            RobotSpec(
                id=i,
                start=starts[i],
                start_dir=rng.choice(MOVING_DIRECTIONS),
                goal=goals[i],
                goal_dir=rng.choice(MOVING_DIRECTIONS),
            )
            for i in range(robot_count)
        )
        return Scenario(graph, robots, seed)
    raise ScenarioError(
        f"could not generate a {width}x{height} scenario with {robot_count} robots "
        f"after {max_tries} attempts"
    )


def scenario_from_graph(
    graph: GridGraph, robot_count: int, seed: int, max_tries: int = 50
) -> Scenario:
    """Place robots on an existing map (loaded from a file)."""
    for attempt in range(max_tries):
        rng = random.Random((seed, attempt, "placement").__repr__())
        free = graph.free_cells()
        if len(free) < robot_count:
            raise ScenarioError("map has fewer free cells than robots")
        starts = rng.sample(free, robot_count) if robot_count else []
        goals = rng.sample(free, robot_count) if robot_count else []
        labels = _components(graph)
        if any(labels[s] != labels[g] for s, g in zip(starts, goals)):
            continue
        robots = tuple(
            RobotSpec(
                id=i,
                start=starts[i],
                start_dir=rng.choice(MOVING_DIRECTIONS),
                goal=goals[i],
                goal_dir=rng.choice(MOVING_DIRECTIONS),
            )
            for i in range(robot_count)
        )
        return Scenario(graph, robots, seed)
    raise ScenarioError(f"could not place {robot_count} robots after {max_tries} attempts")
