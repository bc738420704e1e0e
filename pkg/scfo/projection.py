"""Robust projection of the optimization target with automatic choice of the projection parameters."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import linprog

from .core import GradientEstimate, ProblemSpec, ProjectionParams, SlackState
from .types import FloatMatrix, FloatVector

_log = logging.getLogger(__name__)

LP_MARGIN = 1e-9
# curvature given to the auxiliary slack variables of the robust projection
SLACK_REGULARIZATION = 1e-6
PHASE_ONE_HALVINGS = 10


class QpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class QpProblem:
    """``min 0.5 x'Hx + c'x  s.t.  Ax <= b,  lower <= x <= upper``."""

    hessian: FloatMatrix
    linear: FloatVector
    A: FloatMatrix
    b: FloatVector
    lower: FloatVector
    upper: FloatVector

    def __post_init__(self) -> None:
        n = len(self.linear)
        if self.hessian.shape != (n, n):
            raise ValueError("Hessian must be square and match the linear term.")
        if self.A.shape != (len(self.b), n):
            raise ValueError("Constraint matrix must have one column per variable.")
        if not np.allclose(self.hessian, self.hessian.T):
            raise ValueError("Hessian must be symmetric.")
        if np.linalg.eigvalsh(self.hessian).min() < -1e-10:
            raise ValueError("Hessian must be positive semidefinite.")

    @property
    def n(self) -> int:
        return len(self.linear)

    def objective(self, x: FloatVector) -> float:
        return float(0.5 * x @ self.hessian @ x + self.linear @ x)


@dataclass(frozen=True)
class QpResult:
    x: FloatVector
    status: QpStatus
    iterations: int


def _bound(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def lp_feasible(
    A: FloatMatrix,
    b: FloatVector,
    lower: FloatVector,
    upper: FloatVector,
    margin: float = LP_MARGIN,
) -> tuple[bool, Optional[FloatVector]]:
    """Look for a point inside the box satisfying every row of ``Ax <= b`` with at least ``margin`` to spare.

    The largest common slack ``t`` is maximized by linear programming, capped at 1.
    """
    n = len(lower)
    if np.any(lower > upper):
        return False, None
    if A.shape[0] == 0:
        both = np.isfinite(lower) & np.isfinite(upper)
        center = np.where(both, 0.5 * (lower + upper), np.clip(0.0, lower, upper))
        return True, center
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([A, np.ones((A.shape[0], 1))])
    bounds = [(_bound(lo), _bound(up)) for lo, up in zip(lower, upper)] + [(None, 1.0)]
    result = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    if result.status != 0:
        return False, None
    if -result.fun < margin:
        return False, None
    witness: FloatVector = np.clip(result.x[:n], lower, upper)
    return True, witness


def solve_qp(
    qp: QpProblem,
    tol: float = 1e-9,
    max_iter: Optional[int] = None,
    start: Optional[FloatVector] = None,
) -> QpResult:
    """Primal active-set method with Cholesky solves of the range-space system.

    Starts from ``start`` or from a feasible point found by linear programming.
    """
    n = qp.n
    finite_upper = np.flatnonzero(np.isfinite(qp.upper))
    finite_lower = np.flatnonzero(np.isfinite(qp.lower))
    eye = np.eye(n)
    G = np.vstack([qp.A, eye[finite_upper], -eye[finite_lower]])
    h = np.concatenate([qp.b, qp.upper[finite_upper], -qp.lower[finite_lower]])

    if start is None:
        feasible, start = lp_feasible(qp.A, qp.b, qp.lower, qp.upper, margin=-tol)
        if not feasible or start is None:
            return QpResult(np.zeros(n), QpStatus.INFEASIBLE, 0)
    x = np.array(start, dtype=float)

    try:
        factor = cho_factor(qp.hessian)
    except LinAlgError:
        shift = 1e-10 * max(1.0, float(np.trace(qp.hessian)))
        factor = cho_factor(qp.hessian + shift * eye)

    if max_iter is None:
        max_iter = 10 * (n + len(h)) + 50
    working: list[int] = []
    for iteration in range(1, max_iter + 1):
        gradient = qp.hessian @ x + qp.linear
        hg = cho_solve(factor, gradient)
        if working:
            active = G[working]
            h_active = cho_solve(factor, active.T)
            schur = active @ h_active
            try:
                multipliers = cho_solve(cho_factor(schur), -active @ hg)
            except LinAlgError:
                multipliers = np.linalg.lstsq(schur, -active @ hg, rcond=None)[0]
            step = -(hg + h_active @ multipliers)
        else:
            multipliers = np.zeros(0)
            step = -hg

        if np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(x)):
            if not working or multipliers.min() >= -tol:
                return QpResult(x, QpStatus.OPTIMAL, iteration)
            working.pop(int(np.argmin(multipliers)))
            continue

        rate = G @ step
        residual = np.maximum(h - G @ x, 0.0)
        candidates = rate > 1e-14 * (1.0 + np.linalg.norm(step))
        candidates[working] = False
        alpha, blocking = 1.0, None
        if np.any(candidates):
            ratios = np.full(len(h), np.inf)
            ratios[candidates] = residual[candidates] / rate[candidates]
            i = int(np.argmin(ratios))
            if ratios[i] < 1.0:
                alpha, blocking = float(ratios[i]), i
        x = x + alpha * step
        if blocking is not None:
            working.append(blocking)
    _log.warning("active-set solver hit its iteration limit (%d)", max_iter)
    return QpResult(x, QpStatus.ITERATION_LIMIT, max_iter)


@dataclass(frozen=True)
class ProjectionResult:
    point: FloatVector
    params: ProjectionParams
    robustness: float
    status: str
    active_experimental: tuple[int, ...] = ()
    active_numerical: tuple[int, ...] = ()
    cost_box: Optional[GradientEstimate] = None
    halvings: int = 0
    bisections: int = 0
    notes: tuple[str, ...] = field(default=())


@dataclass(frozen=True)
class _LinearRow:
    normal: FloatVector
    margin: float


@dataclass(frozen=True)
class _RobustRow:
    box: GradientEstimate
    margin: float


class _ProjectionSystem:
    """Constraints of the projection for one choice of projection parameters."""

    def __init__(
        self,
        reference: FloatVector,
        lower: FloatVector,
        upper: FloatVector,
        linear_rows: list[_LinearRow],
        robust_rows: list[_RobustRow],
    ):
        self.reference = reference
        self.lower = lower
        self.upper = upper
        self.linear_rows = linear_rows
        self.robust_rows = robust_rows

    def nominal(self) -> tuple[FloatMatrix, FloatVector]:
        """Rows using the gradient estimates only."""
        normals = [r.normal for r in self.linear_rows] + [r.box.estimate for r in self.robust_rows]
        margins = [r.margin for r in self.linear_rows] + [r.margin for r in self.robust_rows]
        if not normals:
            return np.zeros((0, len(self.reference))), np.zeros(0)
        A = np.array(normals)
        return A, A @ self.reference - np.array(margins)

    def robust(self, robustness: float) -> tuple[FloatMatrix, FloatVector, FloatVector, FloatVector]:
        """Slack reformulation over ``(u, s_1, ..., s_m)`` for boxes tightened by ``robustness``.

        A point satisfies these rows for some slacks exactly when every gradient in each box gives a
        descent of at least the row margin.
        """
        n, m = len(self.reference), len(self.robust_rows)
        width = n * (1 + m)
        rows, rhs = [], []
        for r in self.linear_rows:
            row = np.zeros(width)
            row[:n] = r.normal
            rows.append(row)
            rhs.append(r.normal @ self.reference - r.margin)
        for q, r in enumerate(self.robust_rows):
            box = r.box.tightened(robustness)
            s = slice(n * (1 + q), n * (2 + q))
            total = np.zeros(width)
            total[s] = 1.0
            rows.append(total)
            rhs.append(-r.margin)
            for bound in (box.lower, box.upper):
                block = np.zeros((n, width))
                block[:, :n] = np.diag(bound)
                block[:, s] = -np.eye(n)
                rows.extend(block)
                rhs.extend(bound * self.reference)
        A = np.array(rows).reshape(len(rhs), width)
        lower = np.concatenate([self.lower, np.full(n * m, -np.inf)])
        upper = np.concatenate([self.upper, np.full(n * m, np.inf)])
        return A, np.array(rhs), lower, upper


def project_target(
    target: FloatVector,
    reference: FloatVector,
    spec: ProblemSpec,
    params: ProjectionParams,
    slacks: SlackState,
    experimental_values: FloatVector,
    numerical_values: FloatVector,
    constraint_boxes: Sequence[GradientEstimate],
    cost_box: GradientEstimate,
    radius: float,
    bisection_tol: float = 0.01,
    lp_margin: float = LP_MARGIN,
) -> ProjectionResult:
    """Project ``target`` onto the local descent and feasibility halfspaces around ``reference``.

    Args:
        experimental_values: backed-off upper bounds of the experimental constraints at the reference.
        numerical_values: ball maxima of the numerical constraints around the reference.
        constraint_boxes: gradient boxes of the experimental constraints at the reference.
        cost_box: gradient box of the experimental cost, or the exact gradient of a numerical cost.

    The projection parameters are halved from their seeds until the projection with estimated gradients
    is feasible; if that never happens the reference is returned. The robustness level P is then
    bisected on the feasibility of the projection robust to boxes shrunk by P, and the final projection
    uses half of the largest feasible level found.
    """
    lower, upper = spec.u_lower + radius, spec.u_upper - radius
    d_exp, d_num = slacks.slacks[: spec.n_gp], slacks.slacks[spec.n_gp:]
    experimental_cost = spec.cost is None
    params = params.reset()
    floor = params.delta_phi_seed / 2 ** PHASE_ONE_HALVINGS

    halvings = 0
    while True:
        if params.delta_phi < floor:
            _log.debug("projection collapsed to the reference after %d halvings", halvings)
            return ProjectionResult(reference.copy(), params, 0.0, "collapsed", halvings=halvings)
        active_exp = tuple(j for j in range(spec.n_gp) if experimental_values[j] >= -params.eps_p + d_exp[j])
        active_num = tuple(j for j in range(spec.n_g) if numerical_values[j] >= -params.eps + d_num[j])
        linear_rows = [
            _LinearRow(spec.numerical_constraints[j].gradient(reference), params.delta_g) for j in active_num
        ]
        robust_rows = [_RobustRow(constraint_boxes[j], params.delta_gp) for j in active_exp]
        if experimental_cost:
            robust_rows.append(_RobustRow(cost_box, params.delta_phi))
        else:
            linear_rows.append(_LinearRow(cost_box.estimate, params.delta_phi))
        system = _ProjectionSystem(reference, lower, upper, linear_rows, robust_rows)
        A, b = system.nominal()
        if lp_feasible(A, b, lower, upper, lp_margin)[0]:
            break
        params = params.halved()
        halvings += 1

    bisections = 0
    if all(r.box.is_degenerate for r in robust_rows):
        robustness = 1.0
    else:
        feasible_level, infeasible_level = 0.0, 1.0
        while infeasible_level - feasible_level >= bisection_tol:
            level = 0.5 * (feasible_level + infeasible_level)
            A, b, box_lower, box_upper = system.robust(level)
            if lp_feasible(A, b, box_lower, box_upper, lp_margin)[0]:
                feasible_level = level
            else:
                infeasible_level = level
            bisections += 1
        robustness = 0.5 * feasible_level
    _log.debug("projection: %d halvings, %d bisections, robustness %.4f", halvings, bisections, robustness)

    tightened_cost = cost_box.tightened(robustness) if experimental_cost else cost_box
    A, b, box_lower, box_upper = system.robust(robustness)
    feasible, witness = lp_feasible(A, b, box_lower, box_upper, 0.0)
    if not feasible or witness is None:
        return ProjectionResult(
            reference.copy(), params, robustness, "qp-failed", active_exp, active_num, tightened_cost,
            halvings, bisections, ("no feasible start for the projection",),
        )
    n, width = len(reference), A.shape[1]
    curvature = np.concatenate([np.full(n, 2.0), np.full(width - n, SLACK_REGULARIZATION)])
    linear = np.concatenate([-2.0 * target, np.zeros(width - n)])
    qp = QpProblem(np.diag(curvature), linear, A, b, box_lower, box_upper)
    result = solve_qp(qp, start=witness)
    if result.status is not QpStatus.OPTIMAL:
        _log.warning("projection QP ended with status %s, keeping the reference", result.status.value)
        return ProjectionResult(
            reference.copy(), params, robustness, "qp-failed", active_exp, active_num, tightened_cost,
            halvings, bisections, (f"QP status {result.status.value}",),
        )
    point = np.clip(result.x[:n], lower, upper)
    return ProjectionResult(
        point, params, robustness, "projected", active_exp, active_num, tightened_cost, halvings, bisections
    )
