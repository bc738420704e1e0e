import logging

import numpy as np
import pytest

from scfo.core import COST, GradientEstimate, History, LipschitzSet, Measurement, NoiseKind, NoiseModel, StructureInfo
from scfo.pretreat import (
    MAX_GROWTH_ROUNDS,
    SampleGroup,
    compute_intervals,
    conservative_intervals,
    consistency_check_first_order,
    consistency_check_second_order,
    first_order_violations,
    noise_band,
    sample_groups,
)

SIGMA = 0.01
STRUCT = StructureInfo.empty(0)


def scalar_lipschitz(lower, upper, M_lower=0.0, M_upper=1.0):
    return LipschitzSet(np.zeros((0, 1)), np.zeros((0, 1)), [], [], [lower], [upper], 0.0, 0.0,
                        [[M_lower]], [[M_upper]])


def scalar_history(points, values, gradients=None):
    history = History(1, 0)
    for k, (u, value) in enumerate(zip(points, values)):
        estimate = None
        if gradients is not None:
            estimate = [GradientEstimate.exact(np.array([gradients[k]]), np.array([u]), 0.0)]
        history.append(Measurement(np.array([float(u)]), 0.0, float(value), np.zeros(0)), estimate)
    return history


def test_gaussian_band():
    noise = NoiseModel(sigma=SIGMA)
    assert noise_band(noise, 1) == pytest.approx((-0.03, 0.03))
    assert noise_band(noise, 4) == pytest.approx((-0.015, 0.015))


def test_chebyshev_band():
    noise = NoiseModel(NoiseKind.CHEBYSHEV, SIGMA, coverage=0.99)
    assert noise_band(noise, 1) == pytest.approx((-0.1, 0.1))
    shifted = NoiseModel(NoiseKind.CHEBYSHEV, SIGMA, coverage=0.99, mean=0.5)
    assert noise_band(shifted, 1) == pytest.approx((0.4, 0.6))


def test_band_per_function_sigma():
    noise = NoiseModel(sigma=(0.0, 0.02))
    assert noise_band(noise, 1, 0) == (0.0, 0.0)
    assert noise_band(noise, 1, 1) == pytest.approx((-0.06, 0.06))


def test_band_requires_measurements():
    with pytest.raises(ValueError):
        noise_band(NoiseModel(sigma=SIGMA), 0)


def test_group_subsets():
    assert len(SampleGroup((0, 1, 2)).subsets("all")) == 7
    assert SampleGroup((0, 1, 2)).subsets() == [(0,), (1,), (2,), (0, 1, 2)]
    assert SampleGroup((4,)).subsets() == [(4,)]


def test_sample_groups_collect_repeats():
    history = scalar_history([0.0, 0.5, 0.0, 0.5, 1.0], [0.0] * 5)
    groups = sample_groups(history, np.arange(5))
    assert sorted(g.indices for g in groups) == [(0, 2), (1, 3), (4,)]


def test_first_order_growth():
    history = scalar_history([0.0, 1.0], [0.0, 5.0])
    lip = scalar_lipschitz(-1.0, 1.0)
    result = consistency_check_first_order(history, lip, COST, NoiseModel())
    assert result.consistent
    assert result.rounds == 3
    assert result.lipschitz.cost_upper[0] >= 5.0
    assert lip.cost_upper[0] == 1.0


def test_first_order_consistent_data_is_untouched():
    points = np.linspace(0.0, 1.0, 6)
    lip = scalar_lipschitz(-1.0, 1.0)
    result = consistency_check_first_order(scalar_history(points, 0.5 * points), lip, COST, NoiseModel())
    assert result.rounds == 0
    assert result.lipschitz is lip


def test_first_order_wrong_sign_is_repaired():
    points = np.arange(5.0)
    history = scalar_history(points, -3.0 * points)
    result = consistency_check_first_order(history, scalar_lipschitz(0.5, 1.0), COST, NoiseModel())
    assert result.consistent
    constants = result.lipschitz.function_constants(COST)
    lower, upper = conservative_intervals(history, COST, NoiseModel())
    assert first_order_violations(points[:, None], np.zeros(5), lower, upper, constants) == 0
    assert constants.lower[0] <= -3.0


@pytest.mark.parametrize("seed", range(100))
def test_first_order_repair_of_random_histories(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    slope, curvature = rng.uniform(-3.0, 3.0, 2), float(rng.uniform(-1.0, 1.0))
    points = rng.uniform(-1.0, 1.0, (n, 2))
    values = points @ slope + 0.5 * curvature * (points**2).sum(axis=1) + rng.normal(0.0, SIGMA, n)
    history = History(2, 0)
    for k in range(n):
        history.append(Measurement(points[k], float(k), float(values[k]), np.zeros(0)))
    if seed % 2:
        # wrong sign
        lower, upper = -slope - 0.1 * np.abs(slope), -slope + 0.1 * np.abs(slope)
    else:
        lower, upper = (slope - abs(curvature)) / 10, (slope + abs(curvature)) / 10
    lip = LipschitzSet(np.zeros((0, 2)), np.zeros((0, 2)), [], [], lower, upper, 0.0, 0.0, np.zeros((2, 2)), np.eye(2))

    result = consistency_check_first_order(history, lip, COST, NoiseModel(sigma=SIGMA))
    assert result.consistent
    constants = result.lipschitz.function_constants(COST)
    width = 3 * SIGMA + 1e-9
    for k in range(n):
        for l in range(n):
            delta, dt = points[l] - points[k], float(l - k)
            rise = np.maximum(constants.lower * delta, constants.upper * delta).sum()
            rise += max(constants.time_lower * dt, constants.time_upper * dt)
            fall = np.minimum(constants.lower * delta, constants.upper * delta).sum()
            fall += min(constants.time_lower * dt, constants.time_upper * dt)
            assert values[l] - values[k] <= 2 * width + rise
            assert values[l] - values[k] >= fall - 2 * width


def test_growth_gives_up_on_contradictory_repeats(caplog):
    history = scalar_history([0.0, 0.0], [0.0, 1.0])
    with caplog.at_level(logging.WARNING, logger="scfo.pretreat"):
        result = consistency_check_first_order(history, scalar_lipschitz(-1.0, 1.0), COST, NoiseModel())
    assert not result.consistent
    assert result.rounds == MAX_GROWTH_ROUNDS
    assert "still contradict" in caplog.text


def test_second_order_valid_constants():
    points = np.array([0.0, 0.5, 1.0])
    history = scalar_history(points, points**2, gradients=2 * points)
    lip = scalar_lipschitz(-3.0, 3.0, 1.9, 2.1)
    result = consistency_check_second_order(history, lip, NoiseModel())
    assert result.rounds == 0
    assert result.consistent


def test_second_order_growth():
    points = np.array([0.0, 0.5, 1.0])
    history = scalar_history(points, points**2, gradients=2 * points)
    lip = scalar_lipschitz(-3.0, 3.0, -0.1, 0.1)
    result = consistency_check_second_order(history, lip, NoiseModel())
    assert result.consistent
    assert result.rounds > 0
    assert result.lipschitz.M_upper[0, 0] >= 2.0


def test_single_record_interval():
    history = scalar_history([0.2], [1.5])
    intervals = compute_intervals(history, scalar_lipschitz(-1.0, 1.0), STRUCT, NoiseModel(sigma=SIGMA))
    assert intervals.lower[0, COST] == pytest.approx(1.47)
    assert intervals.upper[0, COST] == pytest.approx(1.53)


def test_zero_noise_intervals_collapse():
    points = np.linspace(0.0, 1.0, 5)
    values = 0.5 * points + 0.1
    intervals = compute_intervals(scalar_history(points, values), scalar_lipschitz(-1.0, 1.0), STRUCT, NoiseModel())
    np.testing.assert_array_equal(intervals.lower[:, COST], values)
    np.testing.assert_array_equal(intervals.upper[:, COST], values)


def test_repeated_measurements_tighten():
    history = scalar_history([0.3, 0.3], [0.0, 0.0])
    intervals = compute_intervals(history, scalar_lipschitz(-1.0, 1.0), STRUCT, NoiseModel(sigma=SIGMA))
    half_width = 3 * SIGMA / np.sqrt(2)
    np.testing.assert_allclose(intervals.lower[:, COST], -half_width)
    np.testing.assert_allclose(intervals.upper[:, COST], half_width)


def test_intervals_only_narrow():
    rng = np.random.default_rng(3)
    points = rng.uniform(0.0, 1.0, 12)
    values = 0.5 * points + rng.normal(0.0, SIGMA, 12)
    history = scalar_history(points, values)
    lip, noise = scalar_lipschitz(-0.6, 0.6), NoiseModel(sigma=SIGMA)
    one_sweep = compute_intervals(history, lip, STRUCT, noise, max_sweeps=1)
    converged = compute_intervals(history, lip, STRUCT, noise)
    lower, upper = conservative_intervals(history, COST, noise)
    assert np.all(converged.lower[:, COST] >= one_sweep.lower[:, COST])
    assert np.all(converged.upper[:, COST] <= one_sweep.upper[:, COST])
    assert np.all(one_sweep.lower[:, COST] >= lower)
    assert np.all(one_sweep.upper[:, COST] <= upper)
    assert np.all(converged.lower <= converged.upper)


def test_interval_coverage():
    rng = np.random.default_rng(0)
    points = np.linspace(0.0, 1.0, 5)
    truth = 0.5 * points + 0.1
    lip, noise = scalar_lipschitz(-1.0, 1.0), NoiseModel(sigma=SIGMA)
    covered = 0
    for _ in range(200):
        history = scalar_history(points, truth + rng.normal(0.0, SIGMA, 5))
        intervals = compute_intervals(history, lip, STRUCT, noise)
        covered += np.count_nonzero((intervals.lower[:, COST] <= truth) & (truth <= intervals.upper[:, COST]))
    assert covered / 1000 >= 0.95


def test_unmeasured_cost_has_infinite_bounds():
    history = History(1, 1)
    history.append(Measurement(np.zeros(1), 0.0, None, np.array([-0.5])))
    lip = LipschitzSet([[-1.0]], [[1.0]], [0.0], [0.0], [-1.0], [1.0], 0.0, 0.0, [[0.0]], [[1.0]])
    intervals = compute_intervals(history, lip, StructureInfo.empty(1), NoiseModel())
    assert intervals.lower[0, COST] == -np.inf
    assert intervals.upper[0, COST] == np.inf
    assert intervals.lower[0, 1] == intervals.upper[0, 1] == -0.5


def test_interval_tolerance_must_be_positive():
    with pytest.raises(ValueError):
        compute_intervals(scalar_history([0.0], [0.0]), scalar_lipschitz(-1.0, 1.0), STRUCT, NoiseModel(), 0.0)
