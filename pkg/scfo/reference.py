"""Choice of the reference iterate the next step is built from."""

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import (
    COST,
    BoundSources,
    History,
    LipschitzSet,
    ProblemSpec,
    SlackState,
    StructureInfo,
    constraint_id,
)
from .geometry import degradation_term, experimental_backoff
from .types import FloatMatrix, FloatVector, IntVector

_log = logging.getLogger(__name__)

ReferenceRule = Literal["primary", "u0", "minimax"]


@dataclass(frozen=True)
class ReferenceChoice:
    k_star: int
    rule: ReferenceRule
    feasible: IntVector
    violations: FloatVector
    warnings: tuple[str, ...] = field(default=())

    @property
    def tag(self) -> str:
        return {"primary": "reference", "u0": "fallback-u0", "minimax": "fallback-minimax"}[self.rule]


def backed_off_violations(
    history: History,
    spec: ProblemSpec,
    lip: LipschitzSet,
    struct: StructureInfo,
    slacks: SlackState,
    radius: float,
    t_next: float,
) -> FloatMatrix:
    """(n_records, n_gp + n_g + 1) backed-off constraint values minus slacks.

    The last column holds the worst violation of the box compressed by ``radius``. A record is a
    feasible reference when its whole row is nonpositive. Constraint columns are divided by
    ``spec.constraint_scale`` when one is given.
    """
    if history.intervals is None:
        raise ValueError("Intervals must be computed before selecting a reference.")
    _, upper = history.intervals
    u, t = history.u_matrix(), history.times()
    n, m = len(history), spec.n_gp + spec.n_g
    result = np.zeros((n, m + 1))
    for k in range(n):
        for j in range(spec.n_gp):
            fn = constraint_id(j)
            backoff = experimental_backoff(fn, u[k], t[k], t_next, radius, lip, struct, history.gradients[k][fn])
            result[k, j] = upper[k, fn] + backoff - slacks.slacks[j]
        for j, g in enumerate(spec.numerical_constraints):
            result[k, spec.n_gp + j] = g.ball_max(u[k], radius) - slacks.slacks[spec.n_gp + j]
    if spec.constraint_scale is not None:
        result[:, :m] /= spec.constraint_scale
    result[:, m] = np.maximum(spec.u_lower + radius - u, u + radius - spec.u_upper).max(axis=1)
    return result


def _lost_initial_point(
    history: History,
    spec: ProblemSpec,
    lip: LipschitzSet,
    struct: StructureInfo,
    slacks: SlackState,
    radius: float,
    t_next: float,
) -> bool:
    """Whether the first record is infeasible even without the excitation back-offs."""
    assert history.intervals is not None
    _, upper = history.intervals
    first = history.records[0]
    for j in range(spec.n_gp):
        fn = constraint_id(j)
        degradation = degradation_term(fn, first.u, radius, lip, struct, history.gradients[0][fn], first.time, t_next)
        if upper[0, fn] + degradation > slacks.slacks[j]:
            return True
    return any(
        g.evaluate(first.u) > slacks.slacks[spec.n_gp + j] for j, g in enumerate(spec.numerical_constraints)
    )


def _cost_dominant(
    history: History, lip: LipschitzSet, struct: StructureInfo, feasible: IntVector, t_now: float
) -> int:
    """Latest feasible record whose cost cannot exceed the best guaranteed cost of the feasible set."""
    assert history.intervals is not None
    lower, upper = history.intervals
    sources = BoundSources.from_history(history, COST, lip).subset(feasible)
    targets_t = np.full(len(feasible), t_now)
    structure = struct.for_function(COST)
    rise = np.diag(sources.increments(sources.u, targets_t, structure, upper=True))
    fall = np.diag(sources.increments(sources.u, targets_t, structure, upper=False))
    with np.errstate(invalid="ignore"):
        cost_lower = lower[feasible, COST] + fall
        cost_upper = upper[feasible, COST] + rise
    best_upper = np.min(cost_upper)
    for position in range(len(feasible) - 1, -1, -1):
        if cost_lower[position] <= best_upper:
            return int(feasible[position])
    return int(feasible[-1])


def select_reference(
    history: History,
    spec: ProblemSpec,
    lip: LipschitzSet,
    struct: StructureInfo,
    slacks: SlackState,
    radius: float,
    t_next: float,
) -> ReferenceChoice:
    """Pick the reference iterate.

    The primary rule takes the latest record that stays feasible with all back-offs, among those whose
    cost lower bound does not exceed the lowest cost upper bound of the feasible records. With a
    numerical cost the feasible record of least cost is taken instead. When no record qualifies the
    first record is used, and if even that one has become infeasible the record with the smallest worst
    violation is used, preferring later records on ties.
    """
    if len(history) == 0:
        raise ValueError("Cannot select a reference from an empty history.")
    violations = backed_off_violations(history, spec, lip, struct, slacks, radius, t_next)
    worst = violations.max(axis=1)
    feasible = np.flatnonzero(worst <= 0)

    if len(feasible):
        if spec.cost is not None:
            costs = [spec.cost.evaluate(history.records[k].u) for k in feasible]
            best = len(costs) - 1 - int(np.argmin(costs[::-1]))
            k_star = int(feasible[best])
        else:
            k_star = _cost_dominant(history, lip, struct, feasible, history.records[-1].time)
        return ReferenceChoice(k_star, "primary", feasible, worst)

    if not _lost_initial_point(history, spec, lip, struct, slacks, radius, t_next):
        _log.warning("no record satisfies the backed-off constraints, falling back to the first record")
        return ReferenceChoice(0, "u0", feasible, worst)

    k_star = len(worst) - 1 - int(np.argmin(worst[::-1]))
    message = f"first record no longer feasible, using least-violating record {k_star}"
    _log.warning(message)
    return ReferenceChoice(k_star, "minimax", feasible, worst, (message,))
