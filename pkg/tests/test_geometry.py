import numpy as np
import pytest

from scfo.core import GradientEstimate, FunctionStructure, LipschitzSet, NumericalConstraint, ProblemSpec, StructureInfo
from scfo.geometry import (
    SeparableQuadratic,
    ball_max_box_bound,
    compute_backoffs,
    experimental_backoff,
    kappa_m,
    numerical_backoff,
    sampled_constraint,
)
from scfo.simharness import builtin_plants, example_lipschitz

LIP = LipschitzSet(
    [[-10.0, 0.0], [-2.0, 0.0]],
    [[3.0, 2.0], [3.0, 2.0]],
    [-1e-3, 0.0],
    [1e-3, 1 / 500],
    [-2.1, -1.7],
    [1.6, 0.9],
    0.0,
    0.0,
    [[1.0, -1.0], [-1.0, 1.0]],
    [[3.0, 1.0], [1.0, 3.0]],
)
STRUCT = StructureInfo.empty(2)
CENTER = np.array([0.1, 0.3])


def disc_points(center, radius, rng, n):
    angles = rng.uniform(0.0, 2 * np.pi, n)
    radii = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    return center + np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def test_kappa_m_from_constants():
    np.testing.assert_array_equal(kappa_m(2, CENTER, 0.02, LIP, STRUCT, None, 0.0, 1.0), [3.0, 2.0])
    np.testing.assert_array_equal(kappa_m(1, CENTER, 0.02, LIP, STRUCT, None, 0.0, 1.0), [10.0, 2.0])


def test_kappa_m_zero_constants():
    lip = LipschitzSet([[-1e-9, -1e-9]], [[0.0, 0.0]], [0.0], [0.0], [-1.0, -1.0], [1.0, 1.0], 0.0, 0.0,
                       np.zeros((2, 2)), np.ones((2, 2)))
    np.testing.assert_allclose(kappa_m(1, CENTER, 0.1, lip, StructureInfo.empty(1), None, 0.0, 0.0), 0.0, atol=1e-9)


def test_kappa_m_uses_gradient_box_on_concave_indices():
    struct = StructureInfo(FunctionStructure(), (FunctionStructure.of(concave=(0,)), FunctionStructure()))
    box = GradientEstimate(np.array([-1.0, 1.0]), np.array([-1.5, 0.5]), np.array([-0.5, 1.5]), CENTER, 0.0)
    np.testing.assert_array_equal(kappa_m(1, CENTER, 0.02, LIP, struct, box, 0.0, 1.0), [1.5, 2.0])
    np.testing.assert_array_equal(kappa_m(1, CENTER, 0.02, LIP, struct, None, 0.0, 1.0), [10.0, 2.0])


def test_experimental_backoff():
    backoff = experimental_backoff(2, CENTER, 0.0, 1.0, 0.02, LIP, STRUCT)
    assert backoff == pytest.approx(0.002 + 0.02 * np.sqrt(13))


def test_backoff_without_excitation_or_time():
    assert experimental_backoff(1, CENTER, 3.0, 3.0, 0.0, LIP, STRUCT) == 0.0


def test_backoff_rejects_reversed_time():
    with pytest.raises(ValueError):
        experimental_backoff(1, CENTER, 2.0, 1.0, 0.02, LIP, STRUCT)


def test_linear_numerical_backoff():
    constraint = NumericalConstraint.linear([3.0, 4.0], -1.0)
    assert numerical_backoff(constraint, CENTER, 0.02) == pytest.approx(0.1)


def test_compute_backoffs():
    spec = ProblemSpec(2, np.array([-0.5, 0.0]), np.array([0.5, 0.8]), 2, (NumericalConstraint.linear([1.0, 0.0]),))
    backoffs = compute_backoffs(spec, LIP, STRUCT, CENTER, 0.0, 1.0, 0.02, [None, None, None])
    assert backoffs.experimental.shape == (2,)
    assert backoffs.experimental[1] == pytest.approx(0.002 + 0.02 * np.sqrt(13))
    assert backoffs.numerical == pytest.approx([0.02])
    assert backoffs.bound == 0.02


def test_concave_box_bound():
    quadratic = SeparableQuadratic(np.array([-1.0]), np.array([0.0]), np.array([0.0]))
    assert ball_max_box_bound(quadratic, np.array([0.1]), 0.02) == pytest.approx(-(0.08**2))
    assert ball_max_box_bound(quadratic, np.array([0.01]), 0.02) == 0.0


def test_box_bound_covers_ball():
    quadratic = SeparableQuadratic(np.array([-1.0, -1.0]), np.array([0.0, 0.15]), np.zeros(2), 0.01)
    center = np.array([0.3, 0.5])
    bound = ball_max_box_bound(quadratic, center, 0.02)
    assert bound == pytest.approx(0.01 - 0.28**2 - 0.33**2)
    points = disc_points(center, 0.02, np.random.default_rng(1), 10_000)
    assert max(quadratic.value(p) for p in points) <= bound


def test_sampled_constraint_is_marked():
    quadratic = SeparableQuadratic(np.array([1.0, 1.0]), np.zeros(2), np.zeros(2))
    constraint = sampled_constraint(quadratic.value, quadratic.gradient, n_samples=500)
    assert not constraint.rigorous
    assert constraint.ball_max(np.zeros(2), 0.0) == 0.0
    assert constraint.ball_max(np.zeros(2), 0.1) == pytest.approx(0.01)


def test_backoff_keeps_ball_feasible():
    rng = np.random.default_rng(7)
    plant = builtin_plants()["degrading-minus"]
    lip = example_lipschitz("LU", plant)
    struct = StructureInfo.empty(2)
    radius = 0.02
    for _ in range(100):
        center = rng.uniform(plant.u_lower + radius, plant.u_upper - radius)
        t_ref = float(rng.uniform(0.0, 100.0))
        t_next = t_ref + 1.0
        points = disc_points(center, radius, rng, 1000)
        for j in range(plant.n_gp):
            backoff = experimental_backoff(j + 1, center, t_ref, t_next, radius, lip, struct)
            worst = plant.constraint_values(j, points, t_next).max()
            assert worst <= plant.constraint(j, center, t_ref) + backoff + 1e-12
