"""Shared data model of the optimization advisor.

Experimental functions are addressed by a function id: ``COST`` (0) is the experimental cost and
``constraint_id(j)`` (``j + 1``) is the j-th experimental constraint. Per-record arrays in
:class:`History` are laid out with one column per function id.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .types import BallMaximizer, BoolVector, FloatMatrix, FloatVector, GradientFunction, ScalarFunction

_log = logging.getLogger(__name__)

COST = 0


def constraint_id(j: int) -> int:
    """Function id of the j-th (0-based) experimental constraint."""
    return j + 1


class ProblemValidationError(ValueError):
    """Raised when a problem definition violates one or more invariants."""

    errors: list[str]

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def as_vector(values: Sequence[float] | FloatVector | float, n: Optional[int] = None) -> FloatVector:
    """Convert scalars and sequences to a float vector, broadcasting scalars to length n."""
    if isinstance(values, (float, int)):
        if n is None:
            return np.array([float(values)])
        return np.full(n, float(values))
    vector: FloatVector = np.array(values, dtype=float).reshape(-1)
    return vector


@dataclass(frozen=True)
class Region:
    """Axis-aligned box in decision space combined with a time interval."""

    lower: FloatVector
    upper: FloatVector
    t_start: float
    t_end: float

    @classmethod
    def around(cls, center: FloatVector, radius: float, t_start: float, t_end: float) -> "Region":
        """Bounding box of the ball of the given radius."""
        return cls(center - radius, center + radius, t_start, t_end)

    @classmethod
    def hull(cls, points: FloatMatrix, t_start: float, t_end: float) -> "Region":
        return cls(points.min(axis=0), points.max(axis=0), min(t_start, t_end), max(t_start, t_end))

    def corners(self) -> tuple[FloatMatrix, FloatVector]:
        """All corners of the region as (u, t) pairs."""
        n = len(self.lower)
        bits = (np.arange(2 ** (n + 1))[:, None] >> np.arange(n + 1)) & 1
        u = np.where(bits[:, :n] == 1, self.upper[None, :], self.lower[None, :])
        t = np.where(bits[:, n] == 1, self.t_end, self.t_start).astype(float)
        return u, t


@dataclass(frozen=True)
class FunctionConstants:
    """First-order Lipschitz bounds of a single experimental function."""

    lower: FloatVector
    upper: FloatVector
    time_lower: float
    time_upper: float

    @property
    def magnitude(self) -> FloatVector:
        result: FloatVector = np.maximum(np.abs(self.lower), np.abs(self.upper))
        return result

    def clamp(self, outer: "FunctionConstants") -> "FunctionConstants":
        """Clamp every constant into the intervals of ``outer``."""
        lower = np.clip(self.lower, outer.lower, outer.upper)
        upper = np.clip(self.upper, outer.lower, outer.upper)
        time_lower = float(np.clip(self.time_lower, outer.time_lower, outer.time_upper))
        time_upper = float(np.clip(self.time_upper, outer.time_lower, outer.time_upper))
        return FunctionConstants(
            np.minimum(lower, upper),
            np.maximum(lower, upper),
            min(time_lower, time_upper),
            max(time_lower, time_upper),
        )


LocalProvider = Callable[[int, Region], Optional[FunctionConstants]]
HessianProvider = Callable[[Region], Optional[tuple[FloatMatrix, FloatMatrix]]]


@dataclass
class LipschitzSet:
    """Lower and upper Lipschitz constants of all experimental functions.

    Args:
        g_lower, g_upper: (n_gp, n_u) first-order constants of the experimental constraints.
        g_time_lower, g_time_upper: (n_gp,) degradation constants of the constraints.
        cost_lower, cost_upper: (n_u,) first-order constants of the experimental cost.
        cost_time_lower, cost_time_upper: degradation constants of the cost.
        M_lower, M_upper: (n_u, n_u) second-order constants of the cost.
        local_provider: optional ``(function_id, region) -> FunctionConstants`` returning
            tighter constants valid on a region. Results are clamped into the global values.
        hessian_provider: optional ``region -> (M_lower, M_upper)`` returning second-order cost
            constants valid on a region, clamped into the global ones.
    """

    g_lower: FloatMatrix
    g_upper: FloatMatrix
    g_time_lower: FloatVector
    g_time_upper: FloatVector
    cost_lower: FloatVector
    cost_upper: FloatVector
    cost_time_lower: float
    cost_time_upper: float
    M_lower: FloatMatrix
    M_upper: FloatMatrix
    local_provider: Optional[LocalProvider] = None
    hessian_provider: Optional[HessianProvider] = None

    def __post_init__(self) -> None:
        self.cost_lower = as_vector(self.cost_lower)
        self.cost_upper = as_vector(self.cost_upper)
        n_u = len(self.cost_lower)
        self.g_lower = np.array(self.g_lower, dtype=float).reshape(-1, n_u)
        self.g_upper = np.array(self.g_upper, dtype=float).reshape(-1, n_u)
        self.g_time_lower = as_vector(self.g_time_lower)
        self.g_time_upper = as_vector(self.g_time_upper)
        self.cost_time_lower = float(self.cost_time_lower)
        self.cost_time_upper = float(self.cost_time_upper)
        self.M_lower = np.atleast_2d(np.array(self.M_lower, dtype=float))
        self.M_upper = np.atleast_2d(np.array(self.M_upper, dtype=float))

    @classmethod
    def symmetric(
        cls,
        g: FloatMatrix | Sequence[Sequence[float]],
        g_time: FloatVector | Sequence[float],
        cost: FloatVector | Sequence[float],
        cost_time: float,
        M: FloatMatrix | Sequence[Sequence[float]],
        local_provider: Optional[LocalProvider] = None,
    ) -> "LipschitzSet":
        """Build a set from magnitudes, i.e. lower = -magnitude and upper = +magnitude."""
        g_arr = np.abs(np.array(g, dtype=float))
        g_time_arr = np.abs(as_vector(g_time))
        cost_arr = np.abs(as_vector(cost))
        M_arr = np.abs(np.array(M, dtype=float))
        return cls(
            -g_arr, g_arr, -g_time_arr, g_time_arr, -cost_arr, cost_arr,
            -abs(cost_time), abs(cost_time), -M_arr, M_arr, local_provider,
        )

    @property
    def n_u(self) -> int:
        return int(self.cost_lower.shape[0])

    @property
    def n_gp(self) -> int:
        return int(self.g_lower.shape[0])

    def copy(self) -> "LipschitzSet":
        return replace(
            self,
            g_lower=self.g_lower.copy(),
            g_upper=self.g_upper.copy(),
            g_time_lower=self.g_time_lower.copy(),
            g_time_upper=self.g_time_upper.copy(),
            cost_lower=self.cost_lower.copy(),
            cost_upper=self.cost_upper.copy(),
            M_lower=self.M_lower.copy(),
            M_upper=self.M_upper.copy(),
        )

    def function_constants(self, fn: int) -> FunctionConstants:
        if fn == COST:
            return FunctionConstants(
                self.cost_lower.copy(), self.cost_upper.copy(), self.cost_time_lower, self.cost_time_upper
            )
        j = fn - 1
        return FunctionConstants(
            self.g_lower[j].copy(),
            self.g_upper[j].copy(),
            float(self.g_time_lower[j]),
            float(self.g_time_upper[j]),
        )

    def with_function_constants(self, fn: int, constants: FunctionConstants) -> "LipschitzSet":
        """Return a copy where the constants of one function are replaced."""
        result = self.copy()
        if fn == COST:
            result.cost_lower = constants.lower.copy()
            result.cost_upper = constants.upper.copy()
            result.cost_time_lower = constants.time_lower
            result.cost_time_upper = constants.time_upper
        else:
            j = fn - 1
            result.g_lower[j] = constants.lower
            result.g_upper[j] = constants.upper
            result.g_time_lower[j] = constants.time_lower
            result.g_time_upper[j] = constants.time_upper
        return result


def local_constants(lip: LipschitzSet, fn: int, region: Region) -> FunctionConstants:
    """Constants of ``fn`` valid on ``region``, clamped into the global intervals."""
    global_constants = lip.function_constants(fn)
    if lip.local_provider is None:
        return global_constants
    provided = lip.local_provider(fn, region)
    if provided is None:
        return global_constants
    return provided.clamp(global_constants)


def local_hessian(lip: LipschitzSet, region: Region) -> tuple[FloatMatrix, FloatMatrix]:
    """Second-order cost constants valid on ``region``, clamped into the global ones."""
    provided = None if lip.hessian_provider is None else lip.hessian_provider(region)
    if provided is None:
        return lip.M_lower.copy(), lip.M_upper.copy()
    lower = np.clip(provided[0], lip.M_lower, lip.M_upper)
    upper = np.clip(provided[1], lip.M_lower, lip.M_upper)
    return np.minimum(lower, upper), np.maximum(lower, upper)


@dataclass(frozen=True)
class FunctionStructure:
    """Partial concavity and convexity of one function.

    ``concave`` lists decision indices on which the function is declared concave; ``eta_concave`` = 1
    declares concavity in time as well. ``convex``/``eta_convex`` are the convex counterparts.
    """

    concave: frozenset[int] = frozenset()
    eta_concave: int = 0
    convex: frozenset[int] = frozenset()
    eta_convex: int = 0

    @classmethod
    def of(
        cls,
        concave: Sequence[int] = (),
        eta_concave: int = 0,
        convex: Sequence[int] = (),
        eta_convex: int = 0,
    ) -> "FunctionStructure":
        return cls(frozenset(concave), eta_concave, frozenset(convex), eta_convex)


StructureProvider = Callable[[int, Region], Optional[FunctionStructure]]


@dataclass(frozen=True)
class StructureInfo:
    cost: FunctionStructure
    constraints: tuple[FunctionStructure, ...]
    local_provider: Optional[StructureProvider] = None

    @classmethod
    def empty(cls, n_gp: int) -> "StructureInfo":
        return cls(FunctionStructure(), tuple(FunctionStructure() for _ in range(n_gp)))

    @property
    def conc_g(self) -> tuple[tuple[frozenset[int], int], ...]:
        return tuple((s.concave, s.eta_concave) for s in self.constraints)

    @property
    def conv_cost(self) -> tuple[frozenset[int], int]:
        return self.cost.convex, self.cost.eta_convex

    @property
    def conc_cost(self) -> tuple[frozenset[int], int]:
        return self.cost.concave, self.cost.eta_concave

    def for_function(self, fn: int) -> FunctionStructure:
        return self.cost if fn == COST else self.constraints[fn - 1]

    def local(self, fn: int, region: Region) -> FunctionStructure:
        if self.local_provider is not None:
            provided = self.local_provider(fn, region)
            if provided is not None:
                return provided
        return self.for_function(fn)


class NoiseKind(Enum):
    GAUSSIAN = "gaussian"
    CHEBYSHEV = "chebyshev"


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise assumed independent across functions and iterations.

    ``sigma`` is either one value for every function or one per function id.
    """

    kind: NoiseKind = NoiseKind.GAUSSIAN
    sigma: float | tuple[float, ...] = 0.0
    coverage: float = 0.99
    mean: float = 0.0
    truncated: bool = False

    def sigma_of(self, fn: int) -> float:
        if isinstance(self.sigma, tuple):
            return float(self.sigma[fn])
        return float(self.sigma)


@dataclass(frozen=True)
class SlackPolicy:
    """Slack limits for all constraints, experimental ones first and numerical ones after."""

    d_max: FloatVector
    integral_budget: FloatVector
    beta: FloatVector

    @classmethod
    def hard(cls, n: int) -> "SlackPolicy":
        """Policy forbidding any violation."""
        return cls(np.zeros(n), np.ones(n), np.zeros(n))

    @classmethod
    def maximal(cls, d_max: Sequence[float], integral_budget: Sequence[float]) -> "SlackPolicy":
        """Policy using the largest admissible reduction factor for each constraint."""
        d = as_vector(d_max)
        budget = as_vector(integral_budget)
        # a zero slack never shrinks, so its factor is irrelevant
        return cls(d, budget, np.where(d > 0, (budget - d) / budget, 0.0))

    @property
    def beta_bound(self) -> FloatVector:
        bound: FloatVector = (self.integral_budget - self.d_max) / self.integral_budget
        return bound


@dataclass(frozen=True)
class SlackState:
    slacks: FloatVector

    @classmethod
    def initial(cls, policy: SlackPolicy) -> "SlackState":
        return cls(policy.d_max.copy())


@dataclass(frozen=True)
class ProjectionParams:
    """Current projection parameters together with their seed magnitudes."""

    eps_p: float
    eps: float
    delta_gp: float
    delta_g: float
    delta_phi: float
    eps_p_seed: float
    eps_seed: float
    delta_gp_seed: float
    delta_g_seed: float
    delta_phi_seed: float

    @classmethod
    def from_seeds(
        cls, eps_p: float, eps: float, delta_gp: float, delta_g: float, delta_phi: float
    ) -> "ProjectionParams":
        return cls(eps_p, eps, delta_gp, delta_g, delta_phi, eps_p, eps, delta_gp, delta_g, delta_phi)

    def reset(self) -> "ProjectionParams":
        return self.from_seeds(
            self.eps_p_seed, self.eps_seed, self.delta_gp_seed, self.delta_g_seed, self.delta_phi_seed
        )

    def halved(self) -> "ProjectionParams":
        return replace(
            self,
            eps_p=self.eps_p / 2,
            eps=self.eps / 2,
            delta_gp=self.delta_gp / 2,
            delta_g=self.delta_g / 2,
            delta_phi=self.delta_phi / 2,
        )


@dataclass(frozen=True)
class GradientEstimate:
    """Gradient estimate and the box assumed to contain the true gradient at ``(u, time)``.

    The time-derivative triple is only meaningful for experimental functions.
    """

    estimate: FloatVector
    lower: FloatVector
    upper: FloatVector
    u: FloatVector
    time: float
    time_estimate: float = 0.0
    time_lower: float = 0.0
    time_upper: float = 0.0

    def __post_init__(self) -> None:
        tol = 1e-12 * (1.0 + float(np.max(np.abs(self.estimate), initial=0.0)))
        if np.any(self.lower > self.estimate + tol) or np.any(self.estimate > self.upper + tol):
            raise ValueError("Gradient estimate must lie inside its box.")
        if not self.time_lower - tol <= self.time_estimate <= self.time_upper + tol:
            raise ValueError("Time-derivative estimate must lie inside its interval.")

    @classmethod
    def exact(
        cls, gradient: FloatVector, u: FloatVector, time: float, time_derivative: float = 0.0
    ) -> "GradientEstimate":
        g = np.array(gradient, dtype=float)
        return cls(g, g.copy(), g.copy(), np.array(u, dtype=float), time,
                   time_derivative, time_derivative, time_derivative)

    @classmethod
    def from_constants(cls, constants: FunctionConstants, u: FloatVector, time: float) -> "GradientEstimate":
        """Box given by the Lipschitz constants alone, estimate at its center."""
        return cls(
            0.5 * (constants.lower + constants.upper),
            constants.lower.copy(),
            constants.upper.copy(),
            np.array(u, dtype=float),
            time,
            0.5 * (constants.time_lower + constants.time_upper),
            constants.time_lower,
            constants.time_upper,
        )

    @property
    def is_degenerate(self) -> bool:
        return bool(np.all(self.lower == self.upper))

    def tightened(self, robustness: float) -> "GradientEstimate":
        """Box shrunk towards the estimate: ``estimate + P (bound - estimate)``."""
        lower = self.estimate + robustness * (self.lower - self.estimate)
        upper = self.estimate + robustness * (self.upper - self.estimate)
        return replace(self, lower=np.minimum(lower, self.estimate), upper=np.maximum(upper, self.estimate))


GradientEstimator = Callable[[int, FloatVector, float], GradientEstimate]


@dataclass(frozen=True)
class Measurement:
    u: FloatVector
    time: float
    cost_hat: Optional[float]
    g_hat: FloatVector

    def value(self, fn: int) -> float:
        if fn == COST:
            return np.nan if self.cost_hat is None else float(self.cost_hat)
        return float(self.g_hat[fn - 1])


class History:
    """Ordered measurements with their gradient estimates and value intervals.

    Intervals are stored as (n_records, 1 + n_gp) arrays; they are reset on every append.
    Records before ``cost_start`` carry no information about the current cost.
    """

    records: list[Measurement]
    gradients: list[tuple[Optional[GradientEstimate], ...]]
    lower: Optional[FloatMatrix]
    upper: Optional[FloatMatrix]
    cost_start: int

    def __init__(self, n_u: int, n_gp: int):
        self.n_u = n_u
        self.n_gp = n_gp
        self.records = []
        self.gradients = []
        self.lower = None
        self.upper = None
        self.cost_start = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_functions(self) -> int:
        return 1 + self.n_gp

    def append(
        self,
        measurement: Measurement,
        gradients: Optional[Sequence[Optional[GradientEstimate]]] = None,
    ) -> None:
        if measurement.u.shape != (self.n_u,):
            raise ValueError(f"Measurement must have {self.n_u} decision variables.")
        if measurement.g_hat.shape != (self.n_gp,):
            raise ValueError(f"Measurement must have {self.n_gp} experimental constraint values.")
        if self.records and measurement.time < self.records[-1].time:
            raise ValueError("Measurement times must be nondecreasing.")
        if gradients is None:
            gradients = (None,) * self.n_functions
        if len(gradients) != self.n_functions:
            raise ValueError(f"Expected {self.n_functions} gradient entries, one per experimental function.")
        self.records.append(measurement)
        self.gradients.append(tuple(gradients))
        self.lower = None
        self.upper = None

    def reset_cost(self) -> None:
        """Forget the cost information of all records measured so far."""
        self.cost_start = len(self.records)
        self.lower = None
        self.upper = None

    @property
    def intervals(self) -> Optional[tuple[FloatMatrix, FloatMatrix]]:
        if self.lower is None or self.upper is None:
            return None
        return self.lower, self.upper

    def set_intervals(self, lower: FloatMatrix, upper: FloatMatrix) -> None:
        if lower.shape != (len(self), self.n_functions) or upper.shape != lower.shape:
            raise ValueError("Interval arrays must have one row per record and one column per function.")
        self.lower = lower
        self.upper = upper

    def u_matrix(self) -> FloatMatrix:
        return np.array([r.u for r in self.records], dtype=float).reshape(len(self), self.n_u)

    def times(self) -> FloatVector:
        return np.array([r.time for r in self.records], dtype=float)

    def valid(self, fn: int) -> BoolVector:
        """Records carrying a usable measurement of ``fn``."""
        mask = np.ones(len(self), dtype=bool)
        if fn == COST:
            mask[: self.cost_start] = False
            mask &= np.array([r.cost_hat is not None for r in self.records], dtype=bool)
        return mask

    def values(self, fn: int) -> FloatVector:
        values = np.array([r.value(fn) for r in self.records], dtype=float)
        values[~self.valid(fn)] = np.nan
        return values


@dataclass(frozen=True)
class BoundSources:
    """Per-record data needed to bound a function away from the measured records.

    Each record contributes a bound on the value of the function at another point and time by
    combining Lipschitz constants with gradient boxes on the declared concave or convex indices.
    """

    u: FloatMatrix
    time: FloatVector
    kappa_lower: FloatMatrix
    kappa_upper: FloatMatrix
    kappa_time_lower: FloatVector
    kappa_time_upper: FloatVector
    grad_lower: FloatMatrix
    grad_upper: FloatMatrix
    grad_time_lower: FloatVector
    grad_time_upper: FloatVector
    has_gradient: BoolVector

    @classmethod
    def from_history(
        cls,
        history: History,
        fn: int,
        lip: LipschitzSet,
        region_of: Optional[Callable[[int], Region]] = None,
    ) -> "BoundSources":
        n, n_u = len(history), history.n_u
        kappa_lower, kappa_upper = np.zeros((n, n_u)), np.zeros((n, n_u))
        kappa_time_lower, kappa_time_upper = np.zeros(n), np.zeros(n)
        grad_lower, grad_upper = np.zeros((n, n_u)), np.zeros((n, n_u))
        grad_time_lower, grad_time_upper = np.zeros(n), np.zeros(n)
        has_gradient = np.zeros(n, dtype=bool)
        global_constants = lip.function_constants(fn)
        for k in range(n):
            c = global_constants if region_of is None else local_constants(lip, fn, region_of(k))
            kappa_lower[k], kappa_upper[k] = c.lower, c.upper
            kappa_time_lower[k], kappa_time_upper[k] = c.time_lower, c.time_upper
            estimate = history.gradients[k][fn]
            if estimate is not None:
                has_gradient[k] = True
                grad_lower[k], grad_upper[k] = estimate.lower, estimate.upper
                grad_time_lower[k], grad_time_upper[k] = estimate.time_lower, estimate.time_upper
        return cls(
            history.u_matrix(), history.times(), kappa_lower, kappa_upper, kappa_time_lower,
            kappa_time_upper, grad_lower, grad_upper, grad_time_lower, grad_time_upper, has_gradient,
        )

    def subset(self, index: Sequence[int] | BoolVector) -> "BoundSources":
        idx = np.asarray(index)
        return BoundSources(*(getattr(self, name)[idx] for name in self.__dataclass_fields__))

    def increments(
        self,
        targets_u: FloatMatrix,
        targets_t: FloatVector,
        structure: FunctionStructure,
        upper: bool,
    ) -> FloatMatrix:
        """(n_sources, n_targets) change of the function bound when moving to each target.

        ``upper=True`` gives the increment of an upper bound (concave indices use the gradient box),
        ``upper=False`` the increment of a lower bound (convex indices use the gradient box).
        """
        pick = np.maximum if upper else np.minimum
        delta = targets_u[None, :, :] - self.u[:, None, :]
        terms = pick(self.kappa_lower[:, None, :] * delta, self.kappa_upper[:, None, :] * delta)
        index_set = structure.concave if upper else structure.convex
        eta = structure.eta_concave if upper else structure.eta_convex
        if index_set:
            grad_terms = pick(self.grad_lower[:, None, :] * delta, self.grad_upper[:, None, :] * delta)
            mask = np.zeros(delta.shape[2], dtype=bool)
            mask[sorted(index_set)] = True
            terms = np.where(mask[None, None, :] & self.has_gradient[:, None, None], grad_terms, terms)

        dt = targets_t[None, :] - self.time[:, None]
        time_terms = pick(self.kappa_time_lower[:, None] * dt, self.kappa_time_upper[:, None] * dt)
        if eta:
            grad_time = pick(self.grad_time_lower[:, None] * dt, self.grad_time_upper[:, None] * dt)
            time_terms = np.where(self.has_gradient[:, None], grad_time, time_terms)
        result: FloatMatrix = terms.sum(axis=2) + time_terms
        return result


@dataclass(frozen=True)
class NumericalConstraint:
    """Constraint known in closed form.

    ``ball_max(center, radius)`` must return the maximum of the constraint over the Euclidean ball or
    an upper bound of it. ``rigorous=False`` marks sampled estimates that are not guaranteed bounds.
    """

    evaluate: ScalarFunction
    gradient: GradientFunction
    ball_max: BallMaximizer
    rigorous: bool = True

    @classmethod
    def linear(cls, a: Sequence[float] | FloatVector, b: float = 0.0) -> "NumericalConstraint":
        """The constraint ``a.u + b``, whose ball maximum is exact."""
        a_vec = as_vector(a)
        norm = float(np.linalg.norm(a_vec))
        return cls(
            lambda u: float(a_vec @ u + b),
            lambda u: a_vec.copy(),
            lambda c, r: float(a_vec @ c + b + r * norm),
        )


@dataclass(frozen=True)
class NumericalCost:
    evaluate: ScalarFunction
    gradient: GradientFunction


class CostKind(Enum):
    EXPERIMENTAL = "experimental"
    NUMERICAL = "numerical"


@dataclass(frozen=True)
class ProblemSpec:
    n_u: int
    u_lower: FloatVector
    u_upper: FloatVector
    n_gp: int
    numerical_constraints: tuple[NumericalConstraint, ...] = ()
    cost: Optional[NumericalCost] = None
    constraint_scale: Optional[FloatVector] = field(default=None)

    @property
    def cost_kind(self) -> CostKind:
        return CostKind.EXPERIMENTAL if self.cost is None else CostKind.NUMERICAL

    @property
    def n_g(self) -> int:
        return len(self.numerical_constraints)

    @property
    def experimental_functions(self) -> list[int]:
        """Function ids measured by experiment."""
        first = COST if self.cost_kind is CostKind.EXPERIMENTAL else 1
        return list(range(first, self.n_gp + 1))


def validate_problem(
    spec: ProblemSpec,
    lip: LipschitzSet,
    struct: StructureInfo,
    slacks: Optional[SlackPolicy] = None,
    noise: Optional[NoiseModel] = None,
) -> list[str]:
    """Collect every invariant violation of a problem definition. An empty list means valid."""
    errors: list[str] = []
    n = spec.n_u
    if n < 1:
        errors.append("problem: at least one decision variable is required")
        return errors
    if spec.u_lower.shape != (n,) or spec.u_upper.shape != (n,):
        errors.append(f"problem: bounds must have length {n}")
    elif np.any(spec.u_lower >= spec.u_upper):
        errors.append("problem: lower bounds must be strictly below upper bounds")
    if spec.n_gp < 0:
        errors.append("problem: negative experimental constraint count")
    if spec.constraint_scale is not None and (
        len(spec.constraint_scale) != spec.n_gp + spec.n_g or np.any(spec.constraint_scale <= 0)
    ):
        errors.append(f"problem: constraint scale must hold {spec.n_gp + spec.n_g} positive values")

    shapes = {
        "g_lower": (lip.g_lower.shape, (spec.n_gp, n)),
        "g_upper": (lip.g_upper.shape, (spec.n_gp, n)),
        "g_time_lower": (lip.g_time_lower.shape, (spec.n_gp,)),
        "g_time_upper": (lip.g_time_upper.shape, (spec.n_gp,)),
        "cost_lower": (lip.cost_lower.shape, (n,)),
        "cost_upper": (lip.cost_upper.shape, (n,)),
        "M_lower": (lip.M_lower.shape, (n, n)),
        "M_upper": (lip.M_upper.shape, (n, n)),
    }
    mismatched = [
        f"lipschitz: {name} has shape {got}, expected {want}"
        for name, (got, want) in shapes.items()
        if got != want
    ]
    errors.extend(mismatched)
    if not mismatched:
        for j, i in zip(*np.nonzero(lip.g_lower >= lip.g_upper)):
            errors.append(
                f"lipschitz: constraint {j} dimension {i}: strict inequality required "
                f"(lower {lip.g_lower[j, i]:g} >= upper {lip.g_upper[j, i]:g})"
            )
        for j in np.flatnonzero(lip.g_time_lower > lip.g_time_upper):
            errors.append(f"lipschitz: constraint {j} time constants out of order")
        for i in np.flatnonzero(lip.cost_lower > lip.cost_upper):
            errors.append(f"lipschitz: cost dimension {i} constants out of order")
        if lip.cost_time_lower > lip.cost_time_upper:
            errors.append("lipschitz: cost time constants out of order")
        if np.any(lip.M_lower > lip.M_upper):
            errors.append("lipschitz: second-order constants out of order")

    if len(struct.constraints) != spec.n_gp:
        errors.append(f"structure: expected {spec.n_gp} constraint entries, got {len(struct.constraints)}")
    for fn, s in [(COST, struct.cost), *((constraint_id(j), s) for j, s in enumerate(struct.constraints))]:
        name = "cost" if fn == COST else f"constraint {fn - 1}"
        if s.eta_concave not in (0, 1) or s.eta_convex not in (0, 1):
            errors.append(f"structure: {name} flags must be 0 or 1")
        if any(not 0 <= i < n for i in s.concave | s.convex):
            errors.append(f"structure: {name} index sets must lie in 0..{n - 1}")

    if slacks is not None:
        m = spec.n_gp + spec.n_g
        if not (len(slacks.d_max) == len(slacks.integral_budget) == len(slacks.beta) == m):
            errors.append(f"slacks: policy must define {m} constraints")
        else:
            bound = slacks.beta_bound
            for j in range(m):
                d, budget, beta = slacks.d_max[j], slacks.integral_budget[j], slacks.beta[j]
                if d < 0:
                    errors.append(f"slacks: constraint {j} maximum slack must be nonnegative")
                if budget <= 0:
                    errors.append(f"slacks: constraint {j} violation budget must be positive")
                elif not 0 <= beta < 1:
                    errors.append(f"slacks: constraint {j} beta must lie in [0, 1)")
                elif beta > bound[j] + 1e-12:
                    errors.append(
                        f"slacks: constraint {j} beta {beta:g} exceeds (d^S-d_max)/d^S = {bound[j]:g}"
                    )

    if noise is not None:
        sigmas = noise.sigma if isinstance(noise.sigma, tuple) else (noise.sigma,)
        if any(s < 0 for s in sigmas):
            errors.append("noise: sigma must be nonnegative")
        if isinstance(noise.sigma, tuple) and len(noise.sigma) != 1 + spec.n_gp:
            errors.append(f"noise: expected {1 + spec.n_gp} sigma values")
        if noise.kind is NoiseKind.CHEBYSHEV and not 0 < noise.coverage < 1:
            errors.append("noise: coverage must lie strictly between 0 and 1")
    return errors


def ensure_valid(
    spec: ProblemSpec,
    lip: LipschitzSet,
    struct: StructureInfo,
    slacks: Optional[SlackPolicy] = None,
    noise: Optional[NoiseModel] = None,
) -> None:
    errors = validate_problem(spec, lip, struct, slacks, noise)
    if errors:
        for error in errors:
            _log.debug("validation: %s", error)
        raise ProblemValidationError(errors)
