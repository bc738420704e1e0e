"""One full advice cycle: pretreatment, reference choice, projection, gain and excitation."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    COST,
    GradientEstimate,
    GradientEstimator,
    History,
    LipschitzSet,
    NoiseModel,
    ProblemSpec,
    ProblemValidationError,
    ProjectionParams,
    Region,
    SlackPolicy,
    SlackState,
    StructureInfo,
    ensure_valid,
    local_constants,
)
from .geometry import compute_backoffs
from .pretreat import (
    GroupPolicy,
    compute_intervals,
    consistency_check_first_order,
    consistency_check_second_order,
)
from .projection import LP_MARGIN, project_target
from .reference import select_reference
from .stepper import ExcitationPredicate, GainSearch, excitation_override, step_is_exciting, update_slacks
from .types import FloatVector

_log = logging.getLogger(__name__)

SCENARIO_TAGS = tuple(
    f"{reference}-{gain}"
    for reference in ("reference", "fallback-u0", "fallback-minimax")
    for gain in ("full", "relaxed", "hold", "excite")
)


@dataclass(frozen=True)
class AdvisorConfig:
    """Settings of the advisor.

    ``slack_policy=None`` treats every constraint as hard. ``excite`` turns on the random excitation
    step whenever the accepted step is not exciting by ``is_exciting``.
    """

    excitation_radius: float = 0.0
    projection_seeds: ProjectionParams = field(
        default_factory=lambda: ProjectionParams.from_seeds(1.0, 1.0, 1.0, 1.0, 1.0)
    )
    slack_policy: Optional[SlackPolicy] = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    grid_points: int = 1001
    refinements: int = 30
    bisection_tol: float = 0.01
    interval_tol: float = 1e-6
    lp_margin: float = LP_MARGIN
    repeat_groups: GroupPolicy = "singleton-and-full"
    second_order: bool = True
    safeguard: bool = True
    excite: bool = False
    is_exciting: ExcitationPredicate = step_is_exciting
    seed: int = 0


@dataclass(frozen=True)
class AdviceDiagnostics:
    params: ProjectionParams
    robustness: float
    slacks: SlackState
    excited: bool
    reference_rule: str
    projection_status: str
    gain_variant: str
    target: FloatVector
    projected: FloatVector
    lipschitz: LipschitzSet
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class Advice:
    u_next: FloatVector
    k_star: int
    gain: float
    scenario: str
    diagnostics: AdviceDiagnostics


def default_target(reference: FloatVector, gradient: FloatVector, spec: ProblemSpec) -> FloatVector:
    """Steepest-descent point far enough to cross the box, clipped to it."""
    norm = float(np.linalg.norm(gradient))
    if norm == 0:
        return reference.copy()
    step = float(np.linalg.norm(spec.u_upper - spec.u_lower)) / max(norm, np.finfo(float).tiny)
    result: FloatVector = np.clip(reference - step * gradient, spec.u_lower, spec.u_upper)
    return result


class Advisor:
    """Recommends the next experiment of one optimization session.

    The first record of the history must be a safe point that keeps its excitation ball feasible for
    the whole session; this cannot be checked from data and is left to the caller.

    Lipschitz constants grown by the consistency checks and the slack state are carried over from call
    to call. Gradient boxes at new points come from ``estimator``; without one, the boxes implied by the
    Lipschitz constants are used.
    """

    def __init__(
        self,
        spec: ProblemSpec,
        lipschitz: LipschitzSet,
        structure: StructureInfo,
        config: Optional[AdvisorConfig] = None,
        estimator: Optional[GradientEstimator] = None,
    ):
        config = config or AdvisorConfig()
        policy = config.slack_policy or SlackPolicy.hard(spec.n_gp + spec.n_g)
        ensure_valid(spec, lipschitz, structure, policy, config.noise)
        errors = []
        half_width = 0.5 * float(np.min(spec.u_upper - spec.u_lower))
        if not 0 <= config.excitation_radius < half_width:
            errors.append(f"config: excitation radius must lie in [0, {half_width:g})")
        if config.grid_points < 2:
            errors.append("config: the gain grid needs at least two points")
        if errors:
            raise ProblemValidationError(errors)

        self.spec = spec
        self.lipschitz = lipschitz.copy()
        self.structure = structure
        self.config = config
        self.estimator = estimator
        self.policy = policy
        self.slacks = SlackState.initial(policy)
        self.rng = np.random.default_rng(config.seed)
        self._processed = 0
        self._pretreated = -1
        self.consistency_warnings: tuple[str, ...] = ()

    def pretreat(self, history: History) -> None:
        """Make the constants consistent with the data and compute the value intervals."""
        if self._pretreated == len(history) and history.intervals is not None:
            return
        notes: list[str] = []
        for fn in self.spec.experimental_functions:
            result = consistency_check_first_order(history, self.lipschitz, fn, self.config.noise)
            if result.rounds:
                _log.info("function %d: constants grown in %d rounds", fn, result.rounds)
            if not result.consistent:
                notes.append(f"constants of function {fn} still contradict the data")
            self.lipschitz = result.lipschitz
        if self.spec.cost is None and self.config.second_order:
            result = consistency_check_second_order(history, self.lipschitz, self.config.noise)
            if result.rounds:
                _log.info("second-order cost constants grown in %d rounds", result.rounds)
            if not result.consistent:
                notes.append("second-order cost constants still contradict the data")
            self.lipschitz = result.lipschitz
        intervals = compute_intervals(
            history, self.lipschitz, self.structure, self.config.noise,
            self.config.interval_tol, self.config.repeat_groups,
        )
        history.set_intervals(intervals.lower, intervals.upper)
        self._pretreated = len(history)
        self.consistency_warnings = tuple(notes)

    def _update_slacks(self, history: History) -> None:
        assert history.intervals is not None
        _, upper = history.intervals
        for k in range(self._processed, len(history)):
            u = history.records[k].u
            bounds = np.concatenate([
                upper[k, 1:],
                [g.evaluate(u) for g in self.spec.numerical_constraints],
            ])
            self.slacks = update_slacks(self.slacks, self.policy, bounds)
        self._processed = len(history)

    def _gradient(self, fn: int, u: FloatVector, t: float) -> GradientEstimate:
        if self.estimator is not None:
            return self.estimator(fn, u, t)
        constants = local_constants(self.lipschitz, fn, Region.around(u, 0.0, t, t))
        return GradientEstimate.from_constants(constants, u, t)

    def advise(
        self,
        history: History,
        t_next: float,
        t_after: Optional[float] = None,
        target: Optional[FloatVector] = None,
    ) -> Advice:
        """Recommend the decision variables of the experiment run at ``t_next``.

        ``t_after`` is the time of the experiment after that one; when given, the gain must also keep an
        excitation ball feasible at that time. ``target`` replaces the default steepest-descent target.
        """
        if len(history) == 0:
            raise ValueError("The history must contain at least the initial safe point.")
        if t_next < history.records[-1].time:
            raise ValueError("The next experiment cannot precede the last measurement.")
        spec, config, radius = self.spec, self.config, self.config.excitation_radius

        self.pretreat(history)
        self._update_slacks(history)
        assert history.intervals is not None
        _, upper = history.intervals

        choice = select_reference(history, spec, self.lipschitz, self.structure, self.slacks, radius, t_next)
        k_star = choice.k_star
        record = history.records[k_star]
        reference = record.u

        constraint_boxes = [self._gradient(fn, reference, t_next) for fn in range(1, spec.n_gp + 1)]
        if spec.cost is None:
            cost_box = self._gradient(COST, reference, t_next)
        else:
            cost_box = GradientEstimate.exact(spec.cost.gradient(reference), reference, t_next)
        backoffs = compute_backoffs(
            spec, self.lipschitz, self.structure, reference, record.time, t_next, radius,
            history.gradients[k_star],
        )
        experimental_values = upper[k_star, 1:] + backoffs.experimental
        numerical_values = np.array([g.ball_max(reference, radius) for g in spec.numerical_constraints])

        if target is None:
            target = default_target(reference, cost_box.estimate, spec)
        projection = project_target(
            target, reference, spec, config.projection_seeds, self.slacks, experimental_values,
            numerical_values, constraint_boxes, cost_box, radius, config.bisection_tol, config.lp_margin,
        )

        search = GainSearch(
            history, spec, self.lipschitz, self.structure, self.slacks, k_star, projection.point, radius,
            t_next, t_after, projection.cost_box if spec.cost is None else None, config.safeguard,
            config.grid_points, config.refinements,
        )
        gain = search.max_gain() if spec.cost is None else search.min_cost_gain()
        u_next = reference + gain.gain * (projection.point - reference)

        excited = False
        if config.excite:
            u_next, excited = excitation_override(u_next, reference, radius, self.rng, config.is_exciting)
        u_next = np.clip(u_next, spec.u_lower, spec.u_upper)

        scenario = f"{choice.tag}-{'excite' if excited else gain.variant}"
        warnings = self.consistency_warnings + choice.warnings + projection.notes
        if any(not g.rigorous for g in spec.numerical_constraints):
            warnings += ("numerical ball maxima are sampled estimates",)
        diagnostics = AdviceDiagnostics(
            projection.params, projection.robustness, self.slacks, excited, choice.rule, projection.status,
            gain.variant, target, projection.point, self.lipschitz, warnings,
        )
        _log.debug("advice: k* = %d, K = %.6f, scenario %s", k_star, gain.gain, scenario)
        return Advice(u_next, k_star, gain.gain, scenario, diagnostics)


def advise(
    history: History,
    spec: ProblemSpec,
    lipschitz: LipschitzSet,
    structure: StructureInfo,
    config: AdvisorConfig,
    t_next: float,
    t_after: Optional[float] = None,
    target: Optional[FloatVector] = None,
    estimator: Optional[GradientEstimator] = None,
) -> Advice:
    """Single advice from a fresh advisor, so identical inputs always give identical advice."""
    return Advisor(spec, lipschitz, structure, config, estimator).advise(history, t_next, t_after, target)
