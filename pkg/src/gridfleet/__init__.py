"""Grid-warehouse multi-robot simulator and path-planning benchmark."""

from .model import (
    Action,
    Cell,
    Direction,
    GridGraph,
    PLACEHOLDER,
    PreservedQueue,
    RobotState,
    direction_between,
    effective_length,
    initial_state,
    load_map,
    parse_map,
    save_map,
)
from .engine import (
    Constraint,
    ConstraintError,
    ConstraintViolation,
    SimTrace,
    SpeedRegime,
    StepEvent,
    StepOutcome,
    compute_speed,
    first_turn_count,
    sample_speed,
    step_robot,
    step_world,
    validate_constraints,
)
from .planner import (
    ConflictKind,
    Plan,
    PlannerConfig,
    UnreachableError,
    count_path_conflicts,
    heuristic,
    plan_path,
    traffic_cost,
)
from .conflicts import Conflict, ConflictReport, classify_pair, detect_all, replan_round
from .scheduler import DesyncError, arbitrate, fill_queues, remaining_distance
from .baselines import (
    PlanningFailure,
    PriorityOrdering,
    ReservationTable,
    adcc_cost,
    ca_star_plan_all,
    pbs_plan_all,
)
from .scenario import Scenario, ScenarioError, generate_scenario
from .runner import ALGORITHMS, RunResult, SafetyError, run_simulation
from .bench import ExperimentConfig, emit_results, run_experiment

__version__ = "0.1.0"
