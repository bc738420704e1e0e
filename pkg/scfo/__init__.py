from .core import (
    COST,
    constraint_id,
    FunctionStructure,
    GradientEstimate,
    History,
    LipschitzSet,
    Measurement,
    NoiseKind,
    NoiseModel,
    NumericalConstraint,
    NumericalCost,
    ProblemSpec,
    ProblemValidationError,
    ProjectionParams,
    SlackPolicy,
    SlackState,
    StructureInfo,
    validate_problem,
)
from .pretreat import noise_band, compute_intervals, consistency_check_first_order, consistency_check_second_order
from .geometry import compute_backoffs, experimental_backoff
from .reference import select_reference
from .projection import project_target, solve_qp
from .stepper import GainSearch, update_slacks, excitation_override
from .advisor import Advice, Advisor, AdvisorConfig, advise, default_target
from .simharness import Plant, ScenarioConfig, Trajectory, builtin_plants, run_scenario

__all__ = [
    "COST",
    "constraint_id",
    "FunctionStructure",
    "GradientEstimate",
    "History",
    "LipschitzSet",
    "Measurement",
    "NoiseKind",
    "NoiseModel",
    "NumericalConstraint",
    "NumericalCost",
    "ProblemSpec",
    "ProblemValidationError",
    "ProjectionParams",
    "SlackPolicy",
    "SlackState",
    "StructureInfo",
    "validate_problem",
    "noise_band",
    "compute_intervals",
    "consistency_check_first_order",
    "consistency_check_second_order",
    "compute_backoffs",
    "experimental_backoff",
    "select_reference",
    "project_target",
    "solve_qp",
    "GainSearch",
    "update_slacks",
    "excitation_override",
    "Advice",
    "Advisor",
    "AdvisorConfig",
    "advise",
    "default_target",
    "Plant",
    "ScenarioConfig",
    "Trajectory",
    "builtin_plants",
    "run_scenario",
]
