"""Constraint back-offs that keep a whole excitation ball around the reference feasible."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    GradientEstimate,
    LipschitzSet,
    NumericalConstraint,
    ProblemSpec,
    Region,
    StructureInfo,
    constraint_id,
    local_constants,
)
from .types import FloatVector, GradientFunction, ScalarFunction

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BackoffSet:
    experimental: FloatVector
    numerical: FloatVector
    bound: float


def kappa_m(
    fn: int,
    center: FloatVector,
    radius: float,
    lip: LipschitzSet,
    struct: StructureInfo,
    gradient: Optional[GradientEstimate],
    t_start: float,
    t_end: float,
) -> FloatVector:
    """Largest absolute partial derivative of ``fn`` over the excitation ball.

    Indices declared concave on the ball use the gradient box at the center, the others use the local
    Lipschitz constants of the bounding box of the ball over ``[t_start, t_end]``.
    """
    region = Region.around(center, radius, t_start, t_end)
    magnitude = local_constants(lip, fn, region).magnitude
    concave = sorted(struct.local(fn, region).concave)
    if concave:
        if gradient is None:
            _log.debug("function %d: no gradient box at the ball center, using Lipschitz endpoints", fn)
        else:
            magnitude[concave] = np.maximum(np.abs(gradient.lower[concave]), np.abs(gradient.upper[concave]))
    return magnitude


def degradation_term(
    fn: int,
    center: FloatVector,
    radius: float,
    lip: LipschitzSet,
    struct: StructureInfo,
    gradient: Optional[GradientEstimate],
    t_start: float,
    t_end: float,
) -> float:
    """Worst increase of ``fn`` at the center between ``t_start`` and ``t_end``."""
    region = Region.around(center, radius, t_start, t_end)
    dt = t_end - t_start
    if struct.local(fn, region).eta_concave and gradient is not None:
        return max(gradient.time_lower * dt, gradient.time_upper * dt)
    constants = local_constants(lip, fn, region)
    return max(constants.time_lower * dt, constants.time_upper * dt)


def experimental_backoff(
    fn: int,
    center: FloatVector,
    t_ref: float,
    t_next: float,
    radius: float,
    lip: LipschitzSet,
    struct: StructureInfo,
    gradient: Optional[GradientEstimate] = None,
) -> float:
    """Back-off of an experimental constraint: degradation until ``t_next`` plus the ball term."""
    if t_next < t_ref:
        raise ValueError("Back-off requires t_next >= t_ref.")
    degradation = degradation_term(fn, center, radius, lip, struct, gradient, t_ref, t_next)
    kappa = kappa_m(fn, center, radius, lip, struct, gradient, t_ref, t_next)
    return degradation + radius * float(np.linalg.norm(kappa))


def numerical_backoff(constraint: NumericalConstraint, center: FloatVector, radius: float) -> float:
    return constraint.ball_max(center, radius) - constraint.evaluate(center)


def compute_backoffs(
    spec: ProblemSpec,
    lip: LipschitzSet,
    struct: StructureInfo,
    center: FloatVector,
    t_ref: float,
    t_next: float,
    radius: float,
    gradients: Sequence[Optional[GradientEstimate]],
) -> BackoffSet:
    """All back-offs for a reference at ``center`` measured at ``t_ref``."""
    experimental = np.array([
        experimental_backoff(constraint_id(j), center, t_ref, t_next, radius, lip, struct,
                             gradients[constraint_id(j)])
        for j in range(spec.n_gp)
    ])
    numerical = np.array([numerical_backoff(g, center, radius) for g in spec.numerical_constraints])
    return BackoffSet(experimental, numerical, radius)


@dataclass(frozen=True)
class SeparableQuadratic:
    """``constant + sum_i curvature_i (u_i - shift_i)**2 + slope_i u_i``."""

    curvature: FloatVector
    shift: FloatVector
    slope: FloatVector
    constant: float = 0.0

    def value(self, u: FloatVector) -> float:
        return float(self.constant + np.sum(self.curvature * (u - self.shift) ** 2 + self.slope * u))

    def gradient(self, u: FloatVector) -> FloatVector:
        result: FloatVector = 2.0 * self.curvature * (u - self.shift) + self.slope
        return result

    def _terms(self, x: FloatVector) -> FloatVector:
        result: FloatVector = self.curvature * (x - self.shift) ** 2 + self.slope * x
        return result


def ball_max_box_bound(quadratic: SeparableQuadratic, center: FloatVector, radius: float) -> float:
    """Maximum of a separable quadratic over the box inscribing the ball.

    Each one-dimensional term is maximized at an endpoint of its interval or at its vertex.
    """
    lo, hi = center - radius, center + radius
    best = np.maximum(quadratic._terms(lo), quadratic._terms(hi))
    a, b = quadratic.curvature, quadratic.slope
    concave = a < 0
    if np.any(concave):
        vertex = np.where(concave, quadratic.shift - b / (2.0 * np.where(concave, a, 1.0)), center)
        inside = concave & (vertex >= lo) & (vertex <= hi)
        best = np.where(inside, np.maximum(best, quadratic._terms(vertex)), best)
    return float(quadratic.constant + best.sum())


def separable_constraint(quadratic: SeparableQuadratic) -> NumericalConstraint:
    return NumericalConstraint(
        quadratic.value,
        quadratic.gradient,
        lambda c, r: ball_max_box_bound(quadratic, c, r),
    )


def sampled_ball_max(
    evaluate: ScalarFunction,
    center: FloatVector,
    radius: float,
    rng: np.random.Generator,
    n_samples: int = 2000,
) -> float:
    """Largest value over the center and random points of the ball boundary. Not a guaranteed bound."""
    if radius == 0:
        return evaluate(center)
    directions = rng.standard_normal((n_samples, len(center)))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    points = center + radius * directions
    return max(evaluate(center), max(evaluate(p) for p in points))


def sampled_constraint(
    evaluate: ScalarFunction, gradient: GradientFunction, n_samples: int = 2000, seed: int = 0
) -> NumericalConstraint:
    """Numerical constraint whose ball maximum is estimated by sampling."""
    _log.warning("ball maxima of a sampled constraint are estimates, not bounds")
    rng = np.random.default_rng(seed)

    def ball_max(center: FloatVector, radius: float) -> float:
        return sampled_ball_max(evaluate, center, radius, rng, n_samples)

    return NumericalConstraint(evaluate, gradient, ball_max, rigorous=False)
