import numpy as np
import pytest

from scfo.core import COST, NoiseModel, ProblemValidationError, Region, local_hessian
from scfo.simharness import (
    DEGRADATION_CAP,
    G_LOWER,
    G_UPPER,
    SWITCH_TIME,
    ScenarioConfig,
    artificial_gradient,
    builtin_plants,
    example_lipschitz,
    grid_oracle,
    measure,
    polynomial_local_hessian,
    polynomial_local_lipschitz,
    run_scenario,
)

SIGMA = 0.01
PLANTS = builtin_plants()


def test_plant_values():
    plant = PLANTS["degrading-minus"]
    assert plant.constraint(0, np.zeros(2), 0.0) == pytest.approx(-0.6)
    assert plant.constraint(1, np.array([0.5, 0.4]), 0.0) == pytest.approx(0.4)
    assert PLANTS["static"].cost(np.array([0.5, 0.4]), 0.0) == 0.0
    assert PLANTS["static"].numerical_values(np.array([0.0, 0.15])) == pytest.approx([0.01])


def test_degradation_stops_at_cap():
    plant = PLANTS["degrading-plus"]
    u = np.array([0.2, 0.3])
    assert plant.constraint(1, u, DEGRADATION_CAP) == plant.constraint(1, u, DEGRADATION_CAP + 50.0)
    assert plant.constraint(1, u, 10.0) > plant.constraint(1, u, 0.0)


def test_switching_cost():
    plant = PLANTS["switching"]
    assert plant.cost(np.array([-0.25, 0.6]), SWITCH_TIME + 1.0) == 0.0
    assert plant.cost(np.array([0.5, 0.4]), SWITCH_TIME) == 0.0


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-6
    for plant in PLANTS.values():
        for _ in range(100):
            u = rng.uniform(plant.u_lower, plant.u_upper)
            t = float(rng.uniform(0.0, 150.0))
            if abs(t - SWITCH_TIME) < 1e-3:
                continue
            for fn in range(1 + plant.n_gp):
                gradient, time_derivative = plant.gradient(fn, u, t)
                for i in range(plant.n_u):
                    step = np.zeros(plant.n_u)
                    step[i] = h
                    difference = (plant.value(fn, u + step, t) - plant.value(fn, u - step, t)) / (2 * h)
                    assert difference == pytest.approx(gradient[i], abs=1e-5)
                difference = (plant.value(fn, u, t + h) - plant.value(fn, u, t - h)) / (2 * h)
                assert difference == pytest.approx(time_derivative, abs=1e-5)


def test_exact_measurement():
    plant = PLANTS["degrading-minus"]
    u = np.array([-0.35, 0.1])
    measurement = measure(plant, u, 3.0, NoiseModel(), np.random.default_rng(0))
    assert measurement.cost_hat == plant.cost(u, 3.0)
    np.testing.assert_array_equal(measurement.g_hat, [plant.constraint(j, u, 3.0) for j in range(2)])
    assert measure(plant, u, 3.0, NoiseModel(), np.random.default_rng(0), numerical_cost=True).cost_hat is None


def test_noise_statistics():
    plant = PLANTS["static"]
    u = np.array([0.0, 0.2])
    rng = np.random.default_rng(4)
    errors = np.array([
        measure(plant, u, 0.0, NoiseModel(sigma=SIGMA), rng).g_hat[0] - plant.constraint(0, u, 0.0)
        for _ in range(20_000)
    ])
    assert errors.var() == pytest.approx(SIGMA**2, rel=0.05)
    assert abs(errors.mean()) < 5 * SIGMA / np.sqrt(20_000)


def test_truncated_noise():
    plant = PLANTS["static"]
    u = np.array([0.0, 0.2])
    rng = np.random.default_rng(8)
    noise = NoiseModel(sigma=SIGMA, truncated=True)
    errors = [measure(plant, u, 0.0, noise, rng).cost_hat - plant.cost(u, 0.0) for _ in range(5000)]
    assert max(abs(e) for e in errors) <= 3 * SIGMA + 1e-15


def test_measurement_is_reproducible():
    plant = PLANTS["degrading-plus"]
    u = np.array([0.1, 0.1])
    first = measure(plant, u, 1.0, NoiseModel(sigma=SIGMA), np.random.default_rng(42))
    second = measure(plant, u, 1.0, NoiseModel(sigma=SIGMA), np.random.default_rng(42))
    assert first.cost_hat == second.cost_hat
    np.testing.assert_array_equal(first.g_hat, second.g_hat)


def test_artificial_gradient_without_noise():
    plant = PLANTS["degrading-minus"]
    lip = example_lipschitz("LU", plant)
    u = np.array([0.1, 0.3])
    estimate = artificial_gradient(plant, 1, u, 5.0, 0.0, lip, np.random.default_rng(0))
    assert estimate.is_degenerate
    np.testing.assert_array_equal(estimate.estimate, plant.gradient(1, u, 5.0)[0])


def test_artificial_gradient_box():
    plant = PLANTS["degrading-minus"]
    lip = example_lipschitz("LU", plant)
    rng = np.random.default_rng(1)
    u = np.array([0.1, 0.3])
    truth = plant.gradient(1, u, 5.0)[0]
    for _ in range(2000):
        estimate = artificial_gradient(plant, 1, u, 5.0, 0.05, lip, rng)
        assert estimate.upper[0] - estimate.estimate[0] == pytest.approx(0.65)
        assert np.all(estimate.lower <= truth) and np.all(truth <= estimate.upper)
    with pytest.raises(ValueError):
        artificial_gradient(plant, 1, u, 5.0, -0.1, lip, rng)


def test_local_lipschitz_at_a_point():
    plant = PLANTS["static"]
    constants = polynomial_local_lipschitz(plant, 1, Region(np.array([0.1, 0.3]), np.array([0.1, 0.3]), 0.0, 0.0))
    assert constants is not None
    assert constants.upper[0] == pytest.approx(-4.699)
    assert constants.lower[0] == pytest.approx(-4.701)


def test_local_lipschitz_brackets_gradients():
    plant = PLANTS["degrading-minus"]
    region = Region(plant.u_lower, plant.u_upper, 0.0, 100.0)
    rng = np.random.default_rng(6)
    for fn in (1, 2):
        constants = polynomial_local_lipschitz(plant, fn, region)
        assert constants is not None
        assert np.all(constants.lower >= np.array(G_LOWER[fn - 1]) - 1e-3)
        assert np.all(constants.upper <= np.array(G_UPPER[fn - 1]) + 1e-3)
        for _ in range(2000):
            u = rng.uniform(plant.u_lower, plant.u_upper)
            gradient, time_derivative = plant.gradient(fn, u, float(rng.uniform(0.0, 100.0)))
            assert np.all(constants.lower <= gradient) and np.all(gradient <= constants.upper)
            assert constants.time_lower <= time_derivative <= constants.time_upper


def test_local_lipschitz_gives_up_across_kinks():
    plant = PLANTS["degrading-minus"]
    assert polynomial_local_lipschitz(plant, 1, Region(plant.u_lower, plant.u_upper, 150.0, 250.0)) is None
    switching = PLANTS["switching"]
    assert polynomial_local_lipschitz(switching, COST, Region(plant.u_lower, plant.u_upper, 40.0, 60.0)) is None


def test_local_hessian_of_example_constants():
    plant = PLANTS["static"]
    region = Region(plant.u_lower, plant.u_upper, 0.0, 10.0)
    lower, upper = polynomial_local_hessian(plant, region)
    np.testing.assert_allclose(lower, [[1.999, -0.001], [-0.001, 1.999]])
    lip = example_lipschitz("LU", plant, local=True)
    clamped_lower, clamped_upper = local_hessian(lip, region)
    np.testing.assert_allclose(clamped_lower, lower)
    np.testing.assert_allclose(clamped_upper, upper)
    assert example_lipschitz("LU", plant).hessian_provider is None


def test_interior_optimum_plant_keeps_its_constraints():
    plant = PLANTS["unconstrained"]
    assert plant.n_gp == 2
    assert len(plant.numerical_constraints) == 1
    assert plant.constraint(1, np.array([0.5, 0.4]), 0.0) == pytest.approx(0.4)
    cost, u = grid_oracle(plant, 0.0, 201)
    assert cost == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(u, [0.2, 0.4], atol=1e-12)


def test_grid_oracle_is_feasible():
    plant = PLANTS["static"]
    cost, u = grid_oracle(plant, 0.0, 101)
    assert all(plant.constraint(j, u, 0.0) <= 0 for j in range(2))
    assert plant.numerical_values(u)[0] <= 0
    assert cost <= plant.cost(np.array([-0.35, 0.1]), 0.0)


def test_config_parsing():
    config = ScenarioConfig.from_dict({
        "plant": "static",
        "noise": {"kind": "chebyshev", "sigma": 0.02, "p": 0.95},
        "slacks": {"d_max": [0.2, 0.2, 0.0], "budget": [5, 10, 1]},
    })
    assert config.noise.sigma == 0.02
    assert config.noise.coverage == 0.95
    assert config.slacks is not None
    np.testing.assert_allclose(config.slacks.policy().beta, [0.96, 0.98, 0.0])
    assert ScenarioConfig.from_dict(config.to_dict()) == config


def test_config_errors_are_collected():
    with pytest.raises(ProblemValidationError) as info:
        ScenarioConfig.from_dict({"plant": "nowhere", "colour": "red"})
    assert len(info.value.errors) == 2
    with pytest.raises(ProblemValidationError):
        config = {"plant": "static", "cost_kind": "numerical", "slacks": {"d_max": [0.1], "budget": [1]}}
        ScenarioConfig.from_dict(config)
    with pytest.raises(ProblemValidationError):
        ScenarioConfig.from_dict({"plant": "degrading-minus", "cost_kind": "numerical"})


def test_degrading_run_respects_slack_budgets():
    config = ScenarioConfig(
        plant="degrading-minus",
        iterations=20,
        grid_points=201,
        oracle_grid=51,
        slacks=ScenarioConfig.from_dict({"slacks": {"d_max": [0.2, 0.2, 0.0], "budget": [5, 10, 1]}}).slacks,
    )
    trajectory = run_scenario(config)
    assert len(trajectory.rows) == 20
    integrals = trajectory.summary["violation_integrals"]
    assert integrals["gp1"] <= 5.0
    assert integrals["gp2"] <= 10.0
    assert trajectory.column("k") == list(range(1, 21))


def test_runs_are_reproducible():
    config = ScenarioConfig(plant="switching", iterations=5, grid_points=101, oracle_grid=51)
    first, second = run_scenario(config), run_scenario(config)
    assert first.rows == second.rows


def test_numerical_cost_run():
    config = ScenarioConfig(plant="static", iterations=3, cost_kind="numerical", grid_points=101, oracle_grid=51)
    trajectory = run_scenario(config)
    assert all(np.isnan(c) for c in trajectory.column("cost_measured"))
