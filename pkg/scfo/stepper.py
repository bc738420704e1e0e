"""Filter gain line searches, slack management and the excitation override."""

import logging
from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np

from .core import (
    COST,
    BoundSources,
    GradientEstimate,
    History,
    LipschitzSet,
    ProblemSpec,
    Region,
    SlackPolicy,
    SlackState,
    StructureInfo,
    constraint_id,
    local_constants,
    local_hessian,
)
from .types import BoolVector, FloatVector, IntVector

_log = logging.getLogger(__name__)

GainVariant = Literal["full", "relaxed", "hold"]
ExcitationPredicate = Callable[[FloatVector, FloatVector, float], bool]


@dataclass(frozen=True)
class GainResult:
    gain: float
    variant: GainVariant


class GainSearch:
    """Line searches for the filter gain ``K`` along the projected step.

    Candidate points are ``reference + K (projected - reference)`` for ``K`` in ``[0, 1]``. A gain is
    accepted when, for every experimental constraint, the best upper bound over all records stays within
    the slack (plus, depending on the variant, the back-off keeping an excitation ball feasible at the next
    step), the numerical constraints stay within their slacks over the excitation ball and, for an
    experimental cost, the step passes the sufficient and the necessary cost-decrease tests.
    """

    def __init__(
        self,
        history: History,
        spec: ProblemSpec,
        lip: LipschitzSet,
        struct: StructureInfo,
        slacks: SlackState,
        k_star: int,
        projected: FloatVector,
        radius: float,
        t_next: float,
        t_after: Optional[float] = None,
        cost_box: Optional[GradientEstimate] = None,
        safeguard: bool = True,
        grid_points: int = 1001,
        refinements: int = 30,
    ):
        if history.intervals is None:
            raise ValueError("Intervals must be computed before the gain search.")
        self.history = history
        self.spec = spec
        self.lip = lip
        self.struct = struct
        self.slacks = slacks
        self.k_star = k_star
        self.reference = history.records[k_star].u
        self.projected = projected
        self.direction = projected - self.reference
        self.radius = radius
        self.t_next = t_next
        self.t_after = t_after
        self.cost_box = cost_box
        self.safeguard = safeguard
        self.grid = np.linspace(0.0, 1.0, grid_points)
        self.refinements = refinements

        u, t = history.u_matrix(), history.times()
        segment = np.vstack([self.reference, projected])
        self._segment_region = Region.hull(segment, t_next, t_next)

        def region_of(k: int) -> Region:
            return Region.hull(np.vstack([segment, u[k]]), t[k], t_next)

        self._lower, self._upper = history.intervals
        self._sources = {
            fn: BoundSources.from_history(history, fn, lip, region_of) for fn in range(1 + spec.n_gp)
            if fn != COST or spec.cost is None
        }

    def points(self, gains: FloatVector) -> FloatVector:
        result: FloatVector = self.reference[None, :] + gains[:, None] * self.direction[None, :]
        return result

    def feasibility_margin(self, j: int, gains: FloatVector) -> FloatVector:
        """Best upper bound over all records of experimental constraint ``j`` at each gain."""
        fn = constraint_id(j)
        increments = self._sources[fn].increments(
            self.points(gains), np.full(len(gains), self.t_next), self.struct.for_function(fn), upper=True
        )
        margin: FloatVector = (self._upper[:, fn][:, None] + increments).min(axis=0)
        return margin

    def _ball_term(self, fn: int, center: FloatVector, t_end: float) -> float:
        """Back-off of ``fn`` at a candidate point, without concavity relaxations."""
        region = Region.around(center, self.radius, self.t_next, t_end)
        constants = local_constants(self.lip, fn, region)
        dt = t_end - self.t_next
        degradation = max(constants.time_lower * dt, constants.time_upper * dt)
        return degradation + self.radius * float(np.linalg.norm(constants.magnitude))

    def experimental_ok(self, gains: FloatVector, ahead: bool, backoff: bool = True) -> BoolVector:
        ok = np.ones(len(gains), dtype=bool)
        points = self.points(gains)
        t_end = self.t_after if ahead and self.t_after is not None else self.t_next
        for j in range(self.spec.n_gp):
            margin = self.feasibility_margin(j, gains)
            d = self.slacks.slacks[j]
            ok &= margin <= d
            if backoff:
                terms = np.array([self._ball_term(constraint_id(j), p, t_end) for p in points])
                ok &= margin + terms <= d
        return ok

    def numerical_ok(self, gains: FloatVector) -> BoolVector:
        ok = np.ones(len(gains), dtype=bool)
        points = self.points(gains)
        for j, g in enumerate(self.spec.numerical_constraints):
            d = self.slacks.slacks[self.spec.n_gp + j]
            ok &= np.array([g.ball_max(p, self.radius) <= d for p in points])
        return ok

    def sufficient_decrease(self, gains: FloatVector) -> BoolVector:
        """Guaranteed cost decrease for every gradient in the (tightened) cost box and every bounded Hessian.

        The Hessian bounds are the local ones over the segment from the reference to the projected point.
        """
        if self.cost_box is None:
            return np.ones(len(gains), dtype=bool)
        d = self.direction
        slope = np.maximum(self.cost_box.lower * d, self.cost_box.upper * d).sum()
        outer = np.outer(d, d)
        M_lower, M_upper = local_hessian(self.lip, self._segment_region)
        curvature = np.maximum(M_lower * outer, M_upper * outer).sum()
        result: BoolVector = (gains == 0) | (slope + 0.5 * gains * curvature <= 0)
        return result

    def _cost_sources(self) -> Optional[tuple[IntVector, BoundSources]]:
        if not self.safeguard or self.spec.cost is not None:
            return None
        valid = np.flatnonzero(self.history.valid(COST))
        if len(valid) == 0:
            return None
        return valid, self._sources[COST].subset(valid)

    def cost_lower_bound(self, gains: FloatVector) -> FloatVector:
        """Lowest cost consistent with all records at each candidate point."""
        cost_sources = self._cost_sources()
        if cost_sources is None:
            return np.full(len(gains), -np.inf)
        valid, sources = cost_sources
        lowest = sources.increments(
            self.points(gains), np.full(len(gains), self.t_next), self.struct.for_function(COST), upper=False
        )
        result: FloatVector = (self._lower[valid, COST][:, None] + lowest).max(axis=0)
        return result

    def necessary_decrease(self, gains: FloatVector) -> BoolVector:
        """The lowest possible new cost must not exceed the highest possible reference cost."""
        cost_sources = self._cost_sources()
        if cost_sources is None:
            return np.ones(len(gains), dtype=bool)
        valid, sources = cost_sources
        highest = sources.increments(
            self.reference[None, :], np.array([self.t_next]), self.struct.for_function(COST), upper=True
        )
        reference_upper = float((self._upper[valid, COST][:, None] + highest).min())
        result: BoolVector = self.cost_lower_bound(gains) <= reference_upper
        return result

    def acceptable(self, gains: FloatVector, variant: GainVariant, necessary: bool = True) -> BoolVector:
        ahead = variant == "full"
        ok = self.experimental_ok(gains, ahead) & self.numerical_ok(gains) & self.sufficient_decrease(gains)
        if necessary:
            ok &= self.necessary_decrease(gains)
        return ok

    def _largest(self, accept: Callable[[FloatVector], BoolVector]) -> Optional[float]:
        ok = accept(self.grid)
        if not np.any(ok):
            return None
        i = int(np.flatnonzero(ok)[-1])
        if i == len(self.grid) - 1:
            return 1.0
        good, bad = float(self.grid[i]), float(self.grid[i + 1])
        for _ in range(self.refinements):
            middle = 0.5 * (good + bad)
            if accept(np.array([middle]))[0]:
                good = middle
            else:
                bad = middle
        return good

    def _minimize(
        self, accept: Callable[[FloatVector], BoolVector], objective: Callable[[FloatVector], FloatVector]
    ) -> Optional[float]:
        """Acceptable gain of least objective, ties broken towards the largest gain."""
        ok = accept(self.grid)
        if not np.any(ok):
            return None
        values = np.where(ok, objective(self.grid), np.inf)
        i = len(values) - 1 - int(np.argmin(values[::-1]))
        best_gain, best_value = float(self.grid[i]), float(values[i])
        a, b = float(self.grid[max(i - 1, 0)]), float(self.grid[min(i + 1, len(self.grid) - 1)])
        for _ in range(self.refinements):
            trial = np.array([a + (b - a) / 3, b - (b - a) / 3])
            trial_values = np.where(accept(trial), objective(trial), np.inf)
            for gain, value in zip(trial, trial_values):
                if value < best_value:
                    best_gain, best_value = float(gain), float(value)
            if trial_values[0] <= trial_values[1]:
                b = float(trial[1])
            else:
                a = float(trial[0])
        return best_gain

    def max_gain(self) -> GainResult:
        """Largest acceptable gain of the full search, then of the relaxed one, else zero.

        When the necessary-decrease test is what limits the gain, the gain of least cost lower bound among
        the acceptable ones is taken instead.
        """
        variants: list[GainVariant] = ["full", "relaxed"] if self.t_after is not None else ["relaxed"]
        for variant in variants:
            gain = self._largest(lambda gains: self.acceptable(gains, variant))
            if gain is None:
                continue
            if self._cost_sources() is not None:
                unguarded = self._largest(lambda gains: self.acceptable(gains, variant, necessary=False))
                if unguarded is not None and unguarded > gain:
                    best = self._minimize(lambda gains: self.acceptable(gains, variant), self.cost_lower_bound)
                    if best is not None:
                        _log.debug("necessary decrease binds, K = %.6f instead of %.6f", best, gain)
                        gain = best
            _log.debug("gain search (%s): K = %.6f", variant, gain)
            return GainResult(gain, variant)
        _log.warning("no acceptable gain, holding the reference")
        return GainResult(0.0, "hold")

    def min_cost_gain(self) -> GainResult:
        """Gain of least numerical cost among the acceptable ones."""
        assert self.spec.cost is not None
        cost = self.spec.cost

        def cost_of(gains: FloatVector) -> FloatVector:
            return np.array([cost.evaluate(p) for p in self.points(gains)])

        variants: list[GainVariant] = ["full", "relaxed"] if self.t_after is not None else ["relaxed"]
        for variant in variants:
            def accept(gains: FloatVector) -> BoolVector:
                return self.experimental_ok(gains, variant == "full") & self.numerical_ok(gains)

            gain = self._minimize(accept, cost_of)
            if gain is not None:
                return GainResult(gain, variant)
        _log.warning("no acceptable gain, holding the reference")
        return GainResult(0.0, "hold")


def feasibility_margin(search: GainSearch, j: int, gain: float) -> float:
    return float(search.feasibility_margin(j, np.array([gain]))[0])


def update_slacks(state: SlackState, policy: SlackPolicy, upper_bounds: FloatVector) -> SlackState:
    """Shrink the slack of every constraint whose latest upper bound is positive."""
    return SlackState(np.where(upper_bounds > 0, policy.beta * state.slacks, state.slacks))


def step_is_exciting(u_next: FloatVector, reference: FloatVector, radius: float) -> bool:
    return bool(np.linalg.norm(u_next - reference) >= radius)


def excitation_override(
    u_next: FloatVector,
    reference: FloatVector,
    radius: float,
    rng: np.random.Generator,
    is_exciting: ExcitationPredicate = step_is_exciting,
) -> tuple[FloatVector, bool]:
    """Replace a step too short to excite the plant with a random step of length ``radius``."""
    if radius <= 0 or is_exciting(u_next, reference, radius):
        return u_next, False
    direction = rng.standard_normal(len(reference))
    while (norm := np.linalg.norm(direction)) == 0:
        direction = rng.standard_normal(len(reference))
    return reference + radius * direction / norm, True
