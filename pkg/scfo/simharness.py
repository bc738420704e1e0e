"""Simulated plants and closed-loop scenario runs."""

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Literal, Optional, Sequence

import numpy as np

from .advisor import Advice, Advisor, AdvisorConfig
from .core import (
    COST,
    FunctionConstants,
    FunctionStructure,
    GradientEstimate,
    History,
    LipschitzSet,
    Measurement,
    NoiseKind,
    NoiseModel,
    NumericalCost,
    ProblemSpec,
    ProblemValidationError,
    ProjectionParams,
    Region,
    SlackPolicy,
    StructureInfo,
    as_vector,
)
from .geometry import SeparableQuadratic, separable_constraint
from .pretreat import GroupPolicy
from .types import FloatMatrix, FloatVector

_log = logging.getLogger(__name__)

U_LOWER = np.array([-0.5, 0.0])
U_UPPER = np.array([0.5, 0.8])
DEGRADATION_RATE = 1.0 / 500
DEGRADATION_CAP = 200.0
SWITCH_TIME = 50.0
LOCAL_MARGIN = 1e-3
# draws beyond this many standard deviations are rejected by truncated noise
TRUNCATION = 3.0


class Plant:
    """Two-input example plant with two experimental constraints and one numerical constraint.

    Time enters the degrading variants through ``min(t, DEGRADATION_CAP)``. The switching variant
    moves the cost minimum once ``t`` exceeds ``SWITCH_TIME``.
    """

    n_u = 2
    n_gp = 2

    def __init__(
        self,
        name: str,
        cost_center: Sequence[float] = (0.5, 0.4),
        cost_drift: float = 0.0,
        g1_drift: float = 0.0,
        g2_drift: float = 0.0,
        switch_center: Optional[Sequence[float]] = None,
    ):
        self.name = name
        self.cost_center = as_vector(cost_center)
        self.cost_drift = cost_drift
        self.g1_drift = g1_drift
        self.g2_drift = g2_drift
        self.switch_center = None if switch_center is None else as_vector(switch_center)
        self.u_lower = U_LOWER.copy()
        self.u_upper = U_UPPER.copy()
        self.quadratics = (SeparableQuadratic(np.array([-1.0, -1.0]), np.array([0.0, 0.15]), np.zeros(2), 0.01),)
        self.numerical_constraints = tuple(separable_constraint(q) for q in self.quadratics)

    def __repr__(self) -> str:
        return f"Plant({self.name!r})"

    @property
    def degrading(self) -> bool:
        return any(rate != 0 for rate in (self.cost_drift, self.g1_drift, self.g2_drift))

    @property
    def cost_is_static(self) -> bool:
        return self.cost_drift == 0 and self.switch_center is None

    def switched(self, t: float) -> bool:
        return self.switch_center is not None and t > SWITCH_TIME

    @staticmethod
    def _clock(t: float) -> tuple[float, float]:
        """Effective time and its derivative with respect to ``t``."""
        return min(t, DEGRADATION_CAP), 1.0 if t < DEGRADATION_CAP else 0.0

    def cost(self, u: FloatVector, t: float) -> float:
        return float(self.cost_values(np.asarray(u, dtype=float)[None, :], t)[0])

    def cost_values(self, points: FloatMatrix, t: float) -> FloatVector:
        """Cost at every row of ``points``."""
        offset = points - self._cost_center(t)
        result: FloatVector = (offset**2).sum(axis=1)
        return result

    def _cost_center(self, t: float) -> FloatVector:
        if self.switched(t):
            assert self.switch_center is not None
            return self.switch_center
        tau, _ = self._clock(t)
        return self.cost_center + np.array([0.0, self.cost_drift * tau])

    def constraint(self, j: int, u: FloatVector, t: float) -> float:
        return float(self.constraint_values(j, np.asarray(u, dtype=float)[None, :], t)[0])

    def constraint_values(self, j: int, points: FloatMatrix, t: float) -> FloatVector:
        """Experimental constraint ``j`` at every row of ``points``."""
        tau, _ = self._clock(t)
        u1, u2 = points[:, 0], points[:, 1]
        if j == 0:
            result: FloatVector = -6.0 * u1**2 - (3.5 + self.g1_drift * tau) * u1 + u2 - 0.6
        elif j == 1:
            result = 2.0 * u1**2 + 0.5 * u1 + u2 - 0.75 + self.g2_drift * tau
        else:
            raise IndexError(f"plant {self.name} has no experimental constraint {j}")
        return result

    def value(self, fn: int, u: FloatVector, t: float) -> float:
        return self.cost(u, t) if fn == COST else self.constraint(fn - 1, u, t)

    def gradient(self, fn: int, u: FloatVector, t: float) -> tuple[FloatVector, float]:
        """Derivatives of ``fn`` with respect to the inputs and to time."""
        u = np.asarray(u, dtype=float)
        tau, rate = self._clock(t)
        if fn == COST:
            offset = u - self._cost_center(t)
            if self.switched(t):
                return 2.0 * offset, 0.0
            return 2.0 * offset, -2.0 * self.cost_drift * rate * float(offset[1])
        u1 = float(u[0])
        if fn == 1:
            return np.array([-12.0 * u1 - 3.5 - self.g1_drift * tau, 1.0]), -self.g1_drift * rate * u1
        if fn == 2:
            return np.array([4.0 * u1 + 0.5, 1.0]), self.g2_drift * rate
        raise IndexError(f"plant {self.name} has no function {fn}")

    def numerical_values(self, u: FloatVector) -> FloatVector:
        return np.array([g.evaluate(u) for g in self.numerical_constraints])

    def numerical_values_on(self, points: FloatMatrix) -> FloatMatrix:
        """(n_points, n_g) values of the numerical constraints."""
        columns = [
            q.constant + (q.curvature * (points - q.shift) ** 2 + q.slope * points).sum(axis=1)
            for q in self.quadratics
        ]
        result: FloatMatrix = np.column_stack(columns) if columns else np.zeros((len(points), 0))
        return result

    def true_values(self, u: FloatVector, t: float) -> FloatVector:
        """Cost followed by every experimental constraint."""
        return np.array([self.value(fn, u, t) for fn in range(1 + self.n_gp)])


def builtin_plants() -> dict[str, Plant]:
    return {
        "static": Plant("static"),
        "degrading-plus": Plant(
            "degrading-plus", cost_drift=DEGRADATION_RATE, g1_drift=DEGRADATION_RATE, g2_drift=DEGRADATION_RATE
        ),
        "degrading-minus": Plant(
            "degrading-minus", cost_drift=DEGRADATION_RATE, g1_drift=DEGRADATION_RATE, g2_drift=-DEGRADATION_RATE
        ),
        # optimum inside the feasible set, no constraint active there
        "unconstrained": Plant("unconstrained", cost_center=(0.2, 0.4)),
        "switching": Plant("switching", switch_center=(-0.25, 0.6)),
    }


def _noise_draw(noise: NoiseModel, fn: int, rng: np.random.Generator) -> float:
    z = float(rng.standard_normal())
    while noise.truncated and abs(z) > TRUNCATION:
        z = float(rng.standard_normal())
    return noise.mean + noise.sigma_of(fn) * z


def measure(
    plant: Plant,
    u: FloatVector,
    t: float,
    noise: NoiseModel,
    rng: np.random.Generator | Sequence[np.random.Generator],
    numerical_cost: bool = False,
) -> Measurement:
    """Noisy measurement of every experimental function, one generator per function id if given."""
    streams = [rng] * (1 + plant.n_gp) if isinstance(rng, np.random.Generator) else list(rng)
    u = np.array(u, dtype=float)
    cost_hat = None
    if not numerical_cost:
        cost_hat = plant.cost(u, t) + _noise_draw(noise, COST, streams[COST])
    g_hat = np.array([
        plant.constraint(j, u, t) + _noise_draw(noise, j + 1, streams[j + 1]) for j in range(plant.n_gp)
    ])
    return Measurement(u, float(t), cost_hat, g_hat)


def artificial_gradient(
    plant: Plant,
    fn: int,
    u: FloatVector,
    t: float,
    alpha: float,
    lip: LipschitzSet,
    rng: np.random.Generator,
) -> GradientEstimate:
    """True derivatives corrupted by uniform noise scaled with the width of the Lipschitz intervals.

    The box is the estimate widened by the same scale on both sides, so it always contains the truth.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative.")
    constants = lip.function_constants(fn)
    gradient, time_derivative = plant.gradient(fn, np.asarray(u, dtype=float), t)
    width = alpha * (constants.upper - constants.lower)
    time_width = alpha * (constants.time_upper - constants.time_lower)
    estimate = gradient + width * rng.uniform(-1.0, 1.0, len(gradient))
    time_estimate = time_derivative + time_width * rng.uniform(-1.0, 1.0)
    return GradientEstimate(
        estimate, estimate - width, estimate + width, np.array(u, dtype=float), t,
        time_estimate, time_estimate - time_width, time_estimate + time_width,
    )


class ArtificialEstimator:
    """Gradient estimator closing the loop on a simulated plant."""

    def __init__(self, plant: Plant, alpha: float, lip: LipschitzSet, rng: np.random.Generator):
        self.plant = plant
        self.alpha = alpha
        self.lip = lip.copy()
        self.rng = rng

    def __call__(self, fn: int, u: FloatVector, t: float) -> GradientEstimate:
        return artificial_gradient(self.plant, fn, u, t, self.alpha, self.lip, self.rng)


def polynomial_local_lipschitz(
    plant: Plant, fn: int, region: Region, margin: float = LOCAL_MARGIN
) -> Optional[FunctionConstants]:
    """Exact derivative range of ``fn`` over ``region`` widened by ``margin``.

    The derivatives of every builtin plant are affine in the inputs and in time, so their extremes are
    attained at corners of the region. Regions crossing a kink of the plant clock or a cost switch are
    not affine and give ``None``, meaning the global constants apply.
    """
    if region.t_start < DEGRADATION_CAP < region.t_end:
        return None
    if fn == COST and plant.switch_center is not None and region.t_start <= SWITCH_TIME < region.t_end:
        return None
    u, t = region.corners()
    derivatives = [plant.gradient(fn, u_c, t_c) for u_c, t_c in zip(u, t)]
    grads = np.array([g for g, _ in derivatives])
    times = np.array([dt for _, dt in derivatives])
    return FunctionConstants(
        grads.min(axis=0) - margin,
        grads.max(axis=0) + margin,
        float(times.min()) - margin,
        float(times.max()) + margin,
    )



def polynomial_local_hessian(
    plant: Plant, region: Region, margin: float = LOCAL_MARGIN
) -> tuple[FloatMatrix, FloatMatrix]:
    """Cost Hessian range over ``region`` widened by ``margin``; every builtin cost is a unit quadratic."""
    hessian = 2.0 * np.eye(plant.n_u)
    return hessian - margin, hessian + margin


LipschitzKind = Literal["LU", "symmetric", "bad-M"]

COST_LOWER = (-2.1, -1.7)
COST_UPPER = (1.6, 0.9)
COST_TIME = 0.004
G_LOWER = ((-10.0, 0.0), (-2.0, 0.0))
G_UPPER = ((3.0, 2.0), (3.0, 2.0))
M_LOWER = ((1.0, -1.0), (-1.0, 1.0))
M_UPPER = ((3.0, 1.0), (1.0, 3.0))
BAD_M_LOWER = ((0.1, -2.0), (-2.0, 0.1))
BAD_M_UPPER = ((0.5, -1.5), (-1.5, 0.5))
BAD_M_COST_LOWER = (-1.4, -0.8)
BAD_M_COST_UPPER = (0.6, 0.8)


def example_lipschitz(kind: LipschitzKind, plant: Plant, local: bool = False) -> LipschitzSet:
    """Published constant sets of the example plants.

    ``"LU"`` holds lower and upper constants, ``"symmetric"`` their magnitudes only and ``"bad-M"`` the LU
    constraint constants with second-order cost constants that do not contain the true Hessian.
    """
    g_time_lower = np.array([-abs(plant.g1_drift) / 2, min(plant.g2_drift, 0.0)])
    g_time_upper = np.array([abs(plant.g1_drift) / 2, max(plant.g2_drift, 0.0)])
    cost_time = COST_TIME if plant.cost_drift else 0.0
    g_lower, g_upper = np.array(G_LOWER), np.array(G_UPPER)
    if kind == "LU":
        lip = LipschitzSet(
            g_lower, g_upper, g_time_lower, g_time_upper, COST_LOWER, COST_UPPER,
            -cost_time, cost_time, M_LOWER, M_UPPER,
        )
    elif kind == "symmetric":
        g_time = np.maximum(np.abs(g_time_lower), np.abs(g_time_upper))
        lip = LipschitzSet.symmetric(
            np.maximum(np.abs(g_lower), np.abs(g_upper)),
            g_time,
            np.maximum(np.abs(COST_LOWER), np.abs(COST_UPPER)),
            cost_time,
            M_UPPER,
        )
    elif kind == "bad-M":
        lip = LipschitzSet(
            g_lower, g_upper, g_time_lower, g_time_upper, BAD_M_COST_LOWER, BAD_M_COST_UPPER,
            -cost_time, cost_time, BAD_M_LOWER, BAD_M_UPPER,
        )
    else:
        raise ValueError(f"Unknown constant set {kind!r}.")
    if local:
        lip.local_provider = lambda fn, region: polynomial_local_lipschitz(plant, fn, region)
        lip.hessian_provider = lambda region: polynomial_local_hessian(plant, region)
    return lip


def example_structure(plant: Plant) -> StructureInfo:
    cost = FunctionStructure.of(convex=(0, 1), eta_convex=1)
    return StructureInfo(
        cost,
        (
            FunctionStructure.of(concave=(0, 1), eta_concave=0, convex=(1,), eta_convex=1),
            FunctionStructure.of(concave=(1,), eta_concave=1, convex=(0, 1), eta_convex=1),
        ),
    )


def grid(plant: Plant, n: int) -> FloatMatrix:
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(plant.u_lower, plant.u_upper)]
    points: FloatMatrix = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, plant.n_u)
    return points


def projection_seeds(plant: Plant, u0: FloatVector, horizon: float, n: int = 101) -> ProjectionParams:
    """Seeds of the projection parameters sized by the ranges of the plant functions.

    Constraint seeds are the depth of the most negative constraint value over the box and the time
    horizon, the cost seed is the decrease from ``u0`` to the lowest cost.
    """
    points = grid(plant, n)
    times = (0.0, horizon)
    smallest = 1e-3
    eps_p = max([smallest] + [
        -float(plant.constraint_values(j, points, t).min()) for j in range(plant.n_gp) for t in times
    ])
    numerical = plant.numerical_values_on(points)
    eps = max(smallest, -float(numerical.min())) if numerical.size else smallest
    lowest = min(float(plant.cost_values(points, t).min()) for t in times)
    delta_phi = max(smallest, plant.cost(u0, 0.0) - lowest)
    return ProjectionParams.from_seeds(eps_p, eps, eps_p, eps, delta_phi)


def grid_oracle(plant: Plant, t: float, n: int = 201) -> tuple[float, FloatVector]:
    """Least cost at time ``t`` over the grid points satisfying every constraint."""
    points = grid(plant, n)
    feasible = np.all(plant.numerical_values_on(points) <= 0, axis=1)
    for j in range(plant.n_gp):
        feasible &= plant.constraint_values(j, points, t) <= 0
    candidates = points[feasible]
    costs = plant.cost_values(candidates, t)
    best = int(np.argmin(costs))
    return float(costs[best]), candidates[best]


@dataclass(frozen=True)
class SlackSettings:
    d_max: tuple[float, ...]
    budget: tuple[float, ...]
    beta: Optional[tuple[float, ...]] = None

    def policy(self) -> SlackPolicy:
        if self.beta is None:
            return SlackPolicy.maximal(self.d_max, self.budget)
        return SlackPolicy(as_vector(self.d_max), as_vector(self.budget), as_vector(self.beta))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one closed-loop run."""

    plant: str = "degrading-minus"
    iterations: int = 100
    seed: int = 0
    u0: tuple[float, ...] = (-0.35, 0.1)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(sigma=0.01))
    alpha_sigma: float = 0.05
    excitation_radius: float = 0.02
    constants: Literal["global", "analytic-local"] = "global"
    lipschitz: LipschitzKind = "LU"
    slacks: Optional[SlackSettings] = None
    safeguard: bool = True
    second_order_check: bool = True
    excite: bool = True
    repeat_groups: GroupPolicy = "singleton-and-full"
    cost_kind: Literal["experimental", "numerical"] = "experimental"
    grid_points: int = 1001
    oracle_grid: int = 201

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        """Parse a JSON-like document, collecting every problem into a ProblemValidationError."""
        errors: list[str] = []
        known = {f.name for f in fields(cls)}
        errors += [f"config: unknown key {key!r}" for key in data if key not in known]
        values = {key: value for key, value in data.items() if key in known}

        try:
            config = cls(**cls._parse_nested(values, errors))
            errors += config.validate()
        except (TypeError, ValueError) as error:
            raise ProblemValidationError([*errors, f"config: {error}"]) from error
        if errors:
            raise ProblemValidationError(errors)
        return config

    @staticmethod
    def _parse_nested(values: dict[str, Any], errors: list[str]) -> dict[str, Any]:
        if "u0" in values:
            values["u0"] = tuple(float(x) for x in values["u0"])
        if "noise" in values:
            noise = dict(values["noise"])
            unknown = set(noise) - {"kind", "sigma", "p", "mean", "truncated"}
            errors += [f"config: unknown noise key {key!r}" for key in sorted(unknown)]
            try:
                kind = NoiseKind(noise.get("kind", "gaussian"))
            except ValueError:
                errors.append(f"config: unknown noise kind {noise.get('kind')!r}")
                kind = NoiseKind.GAUSSIAN
            sigma = noise.get("sigma", 0.0)
            values["noise"] = NoiseModel(
                kind,
                tuple(float(s) for s in sigma) if isinstance(sigma, list) else float(sigma),
                float(noise.get("p", 0.99)),
                float(noise.get("mean", 0.0)),
                bool(noise.get("truncated", False)),
            )
        if values.get("slacks") is not None:
            slacks = dict(values["slacks"])
            unknown = set(slacks) - {"d_max", "budget", "beta"}
            errors += [f"config: unknown slacks key {key!r}" for key in sorted(unknown)]
            beta = slacks.get("beta")
            values["slacks"] = SlackSettings(
                tuple(float(x) for x in slacks.get("d_max", ())),
                tuple(float(x) for x in slacks.get("budget", ())),
                None if beta is None else tuple(float(x) for x in beta),
            )
        return values

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["noise"] = {
            "kind": self.noise.kind.value,
            "sigma": list(self.noise.sigma) if isinstance(self.noise.sigma, tuple) else self.noise.sigma,
            "p": self.noise.coverage,
            "mean": self.noise.mean,
            "truncated": self.noise.truncated,
        }
        data["u0"] = list(self.u0)
        return data

    def validate(self) -> list[str]:
        errors = []
        plants = builtin_plants()
        if self.plant not in plants:
            errors.append(f"config: unknown plant {self.plant!r}, expected one of {sorted(plants)}")
            return errors
        plant = plants[self.plant]
        if self.iterations < 1:
            errors.append("config: iterations must be positive")
        if len(self.u0) != plant.n_u:
            errors.append(f"config: u0 must have {plant.n_u} entries")
        elif np.any(np.array(self.u0) < plant.u_lower) or np.any(np.array(self.u0) > plant.u_upper):
            errors.append("config: u0 must lie in the input box")
        if self.alpha_sigma < 0:
            errors.append("config: alpha_sigma must be nonnegative")
        if self.constants not in ("global", "analytic-local"):
            errors.append(f"config: unknown constants mode {self.constants!r}")
        if self.lipschitz not in ("LU", "symmetric", "bad-M"):
            errors.append(f"config: unknown constant set {self.lipschitz!r}")
        if self.repeat_groups not in ("singleton-and-full", "all"):
            errors.append(f"config: unknown repeat group policy {self.repeat_groups!r}")
        if self.cost_kind not in ("experimental", "numerical"):
            errors.append(f"config: unknown cost kind {self.cost_kind!r}")
        elif self.cost_kind == "numerical" and not plant.cost_is_static:
            errors.append(f"config: the cost of plant {self.plant!r} changes in time and cannot be numerical")
        if self.slacks is not None:
            m = plant.n_gp + len(plant.numerical_constraints)
            if len(self.slacks.d_max) != m or len(self.slacks.budget) != m:
                errors.append(f"config: slacks need {m} entries per list")
            elif self.slacks.beta is not None and len(self.slacks.beta) != m:
                errors.append(f"config: slacks need {m} beta entries")
        if self.oracle_grid < 2:
            errors.append("config: oracle_grid must be at least 2")
        return errors


@dataclass
class Setup:
    """Problem objects built from a scenario configuration."""

    plant: Plant
    spec: ProblemSpec
    lipschitz: LipschitzSet
    structure: StructureInfo
    advisor_config: AdvisorConfig


def build_setup(config: ScenarioConfig, advisor_seed: int = 0) -> Setup:
    plant = builtin_plants()[config.plant]
    cost = None
    if config.cost_kind == "numerical":
        cost = NumericalCost(lambda u: plant.cost(u, 0.0), lambda u: plant.gradient(COST, u, 0.0)[0])
    spec = ProblemSpec(
        plant.n_u, plant.u_lower.copy(), plant.u_upper.copy(), plant.n_gp, plant.numerical_constraints, cost
    )
    lip = example_lipschitz(config.lipschitz, plant, local=config.constants == "analytic-local")
    advisor_config = AdvisorConfig(
        excitation_radius=config.excitation_radius,
        projection_seeds=projection_seeds(plant, as_vector(config.u0), float(config.iterations)),
        slack_policy=None if config.slacks is None else config.slacks.policy(),
        noise=config.noise,
        grid_points=config.grid_points,
        repeat_groups=config.repeat_groups,
        second_order=config.second_order_check,
        safeguard=config.safeguard,
        excite=config.excite,
        seed=advisor_seed,
    )
    return Setup(plant, spec, lip, example_structure(plant), advisor_config)


@dataclass
class Trajectory:
    """Per-iteration rows of a run and its summary."""

    columns: list[str]
    rows: list[list[Any]]
    summary: dict[str, Any]
    advice: list[Advice] = field(default_factory=list, repr=False)

    def column(self, name: str) -> list[Any]:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]


def trajectory_columns(plant: Plant) -> list[str]:
    u = [f"u{i + 1}" for i in range(plant.n_u)]
    gp = [f"gp{j + 1}" for j in range(plant.n_gp)]
    g = [f"g{j + 1}" for j in range(len(plant.numerical_constraints))]
    slacks = [f"d_p{j + 1}" for j in range(plant.n_gp)] + [f"d{j + 1}" for j in range(len(plant.numerical_constraints))]
    return ["k", "time", *u, "cost", "cost_measured", *gp, *g, *slacks, "gain", "k_star", "scenario"]


def _summarize(
    config: ScenarioConfig, plant: Plant, columns: list[str], rows: list[list[Any]]
) -> dict[str, Any]:
    constraint_names = [c for c in columns if c.startswith(("gp", "g")) and c[-1].isdigit()]
    slack_names = [c for c in columns if c.startswith("d") and c[-1].isdigit()]
    index = {name: i for i, name in enumerate(columns)}
    violations = {}
    maxima = {}
    exceedances = {}
    for name, slack in zip(constraint_names, slack_names):
        values = [row[index[name]] for row in rows]
        violations[name] = math.fsum(max(0.0, v) for v in values)
        maxima[name] = max(values)
        exceedances[name] = sum(1 for row in rows if row[index[name]] > row[index[slack]])
    last = rows[-1]
    final_u = np.array([last[index[f"u{i + 1}"]] for i in range(plant.n_u)])
    final_time = float(last[index["time"]])
    oracle_cost, oracle_u = grid_oracle(plant, final_time, config.oracle_grid)
    final_cost = plant.cost(final_u, final_time)
    return {
        "plant": plant.name,
        "seed": config.seed,
        "iterations": config.iterations,
        "final_u": final_u.tolist(),
        "final_cost": final_cost,
        "oracle_cost": oracle_cost,
        "oracle_u": oracle_u.tolist(),
        "oracle_gap": final_cost - oracle_cost,
        "violation_integrals": violations,
        "max_violation": maxima,
        "slack_exceedances": exceedances,
        "scenario_counts": dict(Counter(row[index["scenario"]] for row in rows)),
    }


def run_scenario(config: ScenarioConfig) -> Trajectory:
    """Close the loop between an advisor and a builtin plant.

    The experiment of iteration ``k`` runs at time ``k``; the initial point is measured at time 0.
    Independent random streams drive the noise of every function, the gradient estimator and the
    excitation steps so that changing one setting leaves the other streams untouched.
    """
    errors = config.validate()
    if errors:
        raise ProblemValidationError(errors)
    noise_seq, gradient_seq, advisor_seq = np.random.SeedSequence(config.seed).spawn(3)
    advisor_seed = int(advisor_seq.generate_state(1)[0])
    setup = build_setup(config, advisor_seed)
    plant, spec = setup.plant, setup.spec
    noise_streams = [np.random.default_rng(s) for s in noise_seq.spawn(1 + plant.n_gp)]
    estimator = ArtificialEstimator(plant, config.alpha_sigma, setup.lipschitz, np.random.default_rng(gradient_seq))
    advisor = Advisor(spec, setup.lipschitz, setup.structure, setup.advisor_config, estimator)
    numerical_cost = spec.cost is not None

    def observe(u: FloatVector, t: float) -> tuple[Measurement, list[Optional[GradientEstimate]]]:
        measurement = measure(plant, u, t, config.noise, noise_streams, numerical_cost)
        gradients = [None if fn == COST and numerical_cost else estimator(fn, u, t) for fn in range(1 + plant.n_gp)]
        return measurement, gradients

    history = History(plant.n_u, plant.n_gp)
    history.append(*observe(as_vector(config.u0), 0.0))
    columns = trajectory_columns(plant)
    rows: list[list[Any]] = []
    advice_log = []
    reset_done = False
    for k in range(1, config.iterations + 1):
        t_next = float(k)
        if plant.switched(t_next) and not reset_done:
            _log.info("cost switched before iteration %d, forgetting earlier cost measurements", k)
            history.reset_cost()
            reset_done = True
        advice = advisor.advise(history, t_next, t_next + 1.0)
        measurement, gradients = observe(advice.u_next, t_next)
        history.append(measurement, gradients)
        advice_log.append(advice)

        u = advice.u_next
        rows.append([
            k, t_next, *u.tolist(), plant.cost(u, t_next),
            np.nan if measurement.cost_hat is None else measurement.cost_hat,
            *[plant.constraint(j, u, t_next) for j in range(plant.n_gp)],
            *plant.numerical_values(u).tolist(),
            *advice.diagnostics.slacks.slacks.tolist(),
            advice.gain, advice.k_star, advice.scenario,
        ])
        _log.debug("iteration %d: u = %s, scenario %s", k, u, advice.scenario)
    summary = _summarize(config, plant, columns, rows)
    summary["config"] = config.to_dict()
    return Trajectory(columns, rows, summary, advice_log)
