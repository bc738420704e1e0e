"""Data pretreatment: Lipschitz consistency checks and value intervals of past measurements."""

import itertools
import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import (
    COST,
    BoundSources,
    FunctionConstants,
    History,
    LipschitzSet,
    NoiseKind,
    NoiseModel,
    StructureInfo,
)
from .types import Band, FloatMatrix, FloatVector, IntVector

_log = logging.getLogger(__name__)

GroupPolicy = Literal["singleton-and-full", "all"]

# subsets of a repeat group are enumerated only up to this size
MAX_ENUMERATED_GROUP = 12
# magnitude given to zero constants when they are symmetrized
GROWTH_FLOOR = 1e-3
MAX_GROWTH_ROUNDS = 40


def noise_band(model: NoiseModel, n: int, fn: int = COST) -> Band:
    """Bounds (W_lower, W_upper) on the average noise of ``n`` independent measurements of ``fn``."""
    if n < 1:
        raise ValueError("Noise band requires at least one measurement.")
    sigma = model.sigma_of(fn)
    if sigma < 0:
        raise ValueError("Noise standard deviation must be nonnegative.")
    if model.kind is NoiseKind.GAUSSIAN:
        half_width = 3.0 * sigma / np.sqrt(n)
        return model.mean - half_width, model.mean + half_width
    if not 0 < model.coverage < 1:
        raise ValueError("Chebyshev coverage must lie strictly between 0 and 1.")
    c = 1.0 / np.sqrt(1.0 - model.coverage)
    half_width = c * sigma / np.sqrt(n)
    return model.mean - half_width, model.mean + half_width


@dataclass(frozen=True)
class SampleGroup:
    """Records measured at an identical decision point."""

    indices: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.indices)

    def subsets(self, policy: GroupPolicy = "singleton-and-full") -> list[tuple[int, ...]]:
        if policy == "all" and self.n <= MAX_ENUMERATED_GROUP:
            return [s for r in range(1, self.n + 1) for s in itertools.combinations(self.indices, r)]
        singletons = [(k,) for k in self.indices]
        return singletons + [self.indices] if self.n > 1 else singletons


def sample_groups(history: History, records: IntVector) -> list[SampleGroup]:
    groups: dict[bytes, list[int]] = {}
    u = history.u_matrix()
    for k in records:
        groups.setdefault(u[k].tobytes(), []).append(int(k))
    return [SampleGroup(tuple(g)) for g in groups.values()]


def conservative_intervals(history: History, fn: int, noise: NoiseModel) -> tuple[FloatVector, FloatVector]:
    """Single-measurement intervals that do not depend on any Lipschitz constant."""
    values = history.values(fn)
    w_lower, w_upper = noise_band(noise, 1, fn)
    return values - w_upper, values - w_lower


def _grow(lower: FloatVector, upper: FloatVector, rounds: int) -> tuple[FloatVector, FloatVector]:
    if rounds <= 5:
        return lower * 2.0 ** (-np.sign(lower)), upper * 2.0 ** np.sign(upper)
    if rounds <= 10:
        magnitude = 2.0 * np.maximum(np.abs(lower), np.abs(upper))
        magnitude = np.where(magnitude > 0, magnitude, GROWTH_FLOOR)
        return -magnitude, magnitude
    factor = 2.0 ** (rounds - 10)
    return lower * factor, upper * factor


@dataclass(frozen=True)
class ConsistencyResult:
    lipschitz: LipschitzSet
    rounds: int
    consistent: bool


def first_order_violations(
    u: FloatMatrix, t: FloatVector, lower: FloatVector, upper: FloatVector, constants: FunctionConstants
) -> int:
    """Number of ordered record pairs that contradict the first-order constants."""
    delta = u[None, :, :] - u[:, None, :]
    dt = t[None, :] - t[:, None]
    rise = np.maximum(constants.lower * delta, constants.upper * delta).sum(axis=2)
    rise += np.maximum(constants.time_lower * dt, constants.time_upper * dt)
    fall = np.minimum(constants.lower * delta, constants.upper * delta).sum(axis=2)
    fall += np.minimum(constants.time_lower * dt, constants.time_upper * dt)
    too_high = lower[None, :] > upper[:, None] + rise
    too_low = upper[None, :] < lower[:, None] + fall
    return int(np.count_nonzero(too_high | too_low))


def consistency_check_first_order(
    history: History, lip: LipschitzSet, fn: int, noise: NoiseModel
) -> ConsistencyResult:
    """Grow the first-order constants of ``fn`` until every pair of records is consistent with them."""
    records = np.flatnonzero(history.valid(fn))
    if len(records) < 2:
        return ConsistencyResult(lip, 0, True)
    lower, upper = conservative_intervals(history, fn, noise)
    u, t = history.u_matrix()[records], history.times()[records]
    lower, upper = lower[records], upper[records]

    constants = lip.function_constants(fn)
    rounds = 0
    while (violations := first_order_violations(u, t, lower, upper, constants)) > 0:
        if rounds >= MAX_GROWTH_ROUNDS:
            _log.warning("constants of function %d still contradict %d record pairs", fn, violations)
            return ConsistencyResult(lip.with_function_constants(fn, constants), rounds, False)
        rounds += 1
        grown_lower, grown_upper = _grow(
            np.append(constants.lower, constants.time_lower),
            np.append(constants.upper, constants.time_upper),
            rounds,
        )
        constants = FunctionConstants(
            grown_lower[:-1], grown_upper[:-1], float(grown_lower[-1]), float(grown_upper[-1])
        )
        _log.debug("function %d: %d inconsistent pairs, growth round %d", fn, violations, rounds)
    if rounds == 0:
        return ConsistencyResult(lip, 0, True)
    return ConsistencyResult(lip.with_function_constants(fn, constants), rounds, True)


def second_order_violations(
    u: FloatMatrix,
    t: FloatVector,
    lower: FloatVector,
    upper: FloatVector,
    grad_lower: FloatMatrix,
    grad_upper: FloatMatrix,
    has_gradient: np.ndarray,
    constants: FunctionConstants,
    M_lower: FloatMatrix,
    M_upper: FloatMatrix,
) -> int:
    """Number of ordered record pairs that contradict the second-order cost constants."""
    delta = u[None, :, :] - u[:, None, :]
    dt = t[None, :] - t[:, None]
    outer = delta[:, :, :, None] * delta[:, :, None, :]
    rise = np.maximum(grad_lower[:, None, :] * delta, grad_upper[:, None, :] * delta).sum(axis=2)
    rise += 0.5 * np.maximum(M_lower * outer, M_upper * outer).sum(axis=(2, 3))
    rise += np.maximum(constants.time_lower * dt, constants.time_upper * dt)
    fall = np.minimum(grad_lower[:, None, :] * delta, grad_upper[:, None, :] * delta).sum(axis=2)
    fall += 0.5 * np.minimum(M_lower * outer, M_upper * outer).sum(axis=(2, 3))
    fall += np.minimum(constants.time_lower * dt, constants.time_upper * dt)
    too_high = lower[None, :] > upper[:, None] + rise
    too_low = upper[None, :] < lower[:, None] + fall
    return int(np.count_nonzero((too_high | too_low) & has_gradient[:, None]))


def consistency_check_second_order(history: History, lip: LipschitzSet, noise: NoiseModel) -> ConsistencyResult:
    """Grow the second-order cost constants until every pair of records is consistent with them.

    Pairs are expanded around records carrying a cost gradient box. The first-order time constants
    are used as they are, so the first-order check should run beforehand.
    """
    records = np.flatnonzero(history.valid(COST))
    if len(records) < 2:
        return ConsistencyResult(lip, 0, True)
    sources = BoundSources.from_history(history, COST, lip).subset(records)
    lower, upper = conservative_intervals(history, COST, noise)
    lower, upper = lower[records], upper[records]
    constants = lip.function_constants(COST)

    M_lower, M_upper = lip.M_lower.copy(), lip.M_upper.copy()
    rounds = 0
    while (violations := second_order_violations(
        sources.u, sources.time, lower, upper, sources.grad_lower, sources.grad_upper,
        sources.has_gradient, constants, M_lower, M_upper,
    )) > 0:
        if rounds >= MAX_GROWTH_ROUNDS:
            _log.warning("second-order constants still contradict %d record pairs", violations)
            break
        rounds += 1
        M_lower, M_upper = _grow(M_lower, M_upper, rounds)
        _log.debug("cost: %d pairs inconsistent with second-order constants, round %d", violations, rounds)
    if rounds == 0:
        return ConsistencyResult(lip, 0, True)
    result = lip.copy()
    result.M_lower, result.M_upper = M_lower, M_upper
    return ConsistencyResult(result, rounds, violations == 0)


@dataclass(frozen=True)
class Intervals:
    """Lower and upper bounds of every experimental function at every record."""

    lower: FloatMatrix
    upper: FloatMatrix
    sweeps: int


def _group_bounds(
    history: History,
    fn: int,
    records: IntVector,
    sources: BoundSources,
    structure_eta: tuple[int, int],
    noise: NoiseModel,
    policy: GroupPolicy,
) -> tuple[FloatVector, FloatVector]:
    """Best bounds of every record over averaged groups of repeated measurements."""
    eta_concave, eta_convex = structure_eta
    values = history.values(fn)
    n = len(history)
    lower, upper = np.full(n, -np.inf), np.full(n, np.inf)
    for group in sample_groups(history, records):
        subsets = group.subsets(policy)
        for k in group.indices:
            for subset in subsets:
                idx = np.array(subset)
                dt = sources.time[idx] - sources.time[k]
                kappa_rise = np.maximum(sources.kappa_time_lower[k] * dt, sources.kappa_time_upper[k] * dt)
                kappa_fall = np.minimum(sources.kappa_time_lower[k] * dt, sources.kappa_time_upper[k] * dt)
                if sources.has_gradient[k]:
                    grad_rise = np.maximum(sources.grad_time_lower[k] * dt, sources.grad_time_upper[k] * dt)
                    grad_fall = np.minimum(sources.grad_time_lower[k] * dt, sources.grad_time_upper[k] * dt)
                    rise = eta_concave * grad_rise + (1 - eta_concave) * kappa_rise
                    fall = eta_convex * grad_fall + (1 - eta_convex) * kappa_fall
                else:
                    rise, fall = kappa_rise, kappa_fall
                w_lower, w_upper = noise_band(noise, len(idx), fn)
                mean = values[idx].mean()
                lower[k] = max(lower[k], mean - rise.mean() - w_upper)
                upper[k] = min(upper[k], mean - fall.mean() - w_lower)
    return lower, upper


def compute_intervals(
    history: History,
    lip: LipschitzSet,
    struct: StructureInfo,
    noise: NoiseModel,
    delta_r_min: float = 1e-6,
    groups: GroupPolicy = "singleton-and-full",
    max_sweeps: int = 10_000,
) -> Intervals:
    """Bounds on the noise-free value of every experimental function at every record.

    Bounds start from averaged repeated measurements and are then tightened by propagating the
    bounds of the other records through the Lipschitz constants and gradient boxes, sweep after sweep,
    until the largest improvement of a sweep drops to ``delta_r_min``. Intervals only ever narrow.
    Functions or records without a usable measurement get infinite bounds.
    """
    if delta_r_min <= 0:
        raise ValueError("delta_r_min must be positive.")
    n, n_f = len(history), history.n_functions
    lower, upper = np.full((n, n_f), -np.inf), np.full((n, n_f), np.inf)
    total_sweeps = 0
    for fn in range(n_f):
        records = np.flatnonzero(history.valid(fn))
        if len(records) == 0:
            continue
        structure = struct.for_function(fn)
        sources = BoundSources.from_history(history, fn, lip)
        lo, up = _group_bounds(
            history, fn, records, sources, (structure.eta_concave, structure.eta_convex), noise, groups
        )
        lo, up = lo[records], up[records]

        subset = sources.subset(records)
        rise = subset.increments(subset.u, subset.time, structure, upper=True)
        fall = subset.increments(subset.u, subset.time, structure, upper=False)
        for sweep in range(1, max_sweeps + 1):
            candidate_lower = (lo[:, None] + fall).max(axis=0)
            candidate_upper = (up[:, None] + rise).min(axis=0)
            new_lo = np.where(candidate_lower > lo, np.minimum(candidate_lower, up), lo)
            new_up = np.where(candidate_upper < up, np.maximum(candidate_upper, new_lo), up)
            improvement = max(float(np.max(new_lo - lo)), float(np.max(up - new_up)))
            lo, up = new_lo, new_up
            if improvement <= delta_r_min:
                break
        total_sweeps += sweep
        _log.debug("function %d: interval refinement finished after %d sweeps", fn, sweep)
        lower[records, fn], upper[records, fn] = lo, up
    return Intervals(lower, upper, total_sweeps)
