"""Tests for the linearized far-field map and its adjoint."""

import numpy as np
import pytest

from helmrecon.engine.derivatives import (
    SolveCounter,
    apply_J,
    apply_J_values,
    apply_Jstar,
    assemble_jacobian,
    jacobian_operator,
    prepare,
)
from helmrecon.engine.dtn import build_dtn
from helmrecon.engine.lippmann_schwinger import build_ls, far_field_data
from helmrecon.engine.measurement import incidence_directions
from helmrecon.engine.models import ContrastField, Grid2D, MeasurementCircle
from helmrecon.engine.phantoms import PhantomSpec, sample_phantom
from helmrecon.engine.sine_basis import SineCoeffs, adjoint_evaluate, mode_count, synthesize
from helmrecon.engine.utils import relative_error, stack_complex

K = 2.0


@pytest.fixture(scope="module")
def lmap():
    spec = PhantomSpec("radial", {"amplitude": 0.5, "radius": 1.2})
    grid = Grid2D(33)
    circle = MeasurementCircle(20.0, 8)
    return prepare(K, sample_phantom(spec, grid), incidence_directions(3), circle)


def _mode(n: int, s_max: int = 3, index: int = 1) -> np.ndarray:
    unit = np.zeros(mode_count(s_max))
    unit[index] = 1.0
    return synthesize(SineCoeffs(s_max, unit), n)


def test_prepare_returns_model_far_field(lmap) -> None:
    assert lmap.model_far_field.values.shape == (3, 8)
    assert lmap.background.shape == (3, lmap.grid.size)
    assert np.linalg.norm(lmap.model_far_field.values) > 0


def test_model_far_field_matches_volume_solver() -> None:
    spec = PhantomSpec("radial", {"amplitude": 0.5, "radius": 1.2})
    grid = Grid2D(65)
    q = sample_phantom(spec, grid)
    circle = MeasurementCircle(20.0, 16)
    directions = incidence_directions(4)
    model = prepare(K, q, directions, circle).model_far_field.values
    data = far_field_data(build_ls(K, grid, q), directions, circle)
    assert relative_error(model, data) < 1e-4


def test_real_operator_adjoint_identity(lmap) -> None:
    op = jacobian_operator(lmap, 4)
    assert op.shape == (2 * 3 * 8, mode_count(4))
    assert op.check_adjoint(n_trials=3) < 1e-10


def test_complex_adjoint_pairing(lmap, rng: np.random.Generator) -> None:
    dq = rng.standard_normal(lmap.grid.shape)
    dq[0, :] = dq[-1, :] = dq[:, 0] = dq[:, -1] = 0.0
    r = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
    lhs = lmap.circle.weight * np.vdot(apply_J_values(lmap, dq), r)
    rhs = lmap.grid.spacing**2 * np.vdot(dq, apply_Jstar(lmap, r))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_derivative_matches_finite_difference(lmap) -> None:
    dq = _mode(lmap.grid.n_per_side)
    eps = 1e-6
    q0 = lmap.factorization.contrast.values
    moved = prepare(K, ContrastField(lmap.grid, q0 + eps * dq), lmap.directions, lmap.circle)
    difference = (moved.model_far_field.values - lmap.model_far_field.values) / eps
    linear = apply_J(lmap, ContrastField(lmap.grid, dq))
    assert linear.k == K
    assert relative_error(difference, linear.values) < 1e-4


def test_assembled_jacobian_matches_operator(lmap) -> None:
    matrix = assemble_jacobian(lmap, 3)
    assert matrix.shape == (3 * 8, mode_count(3))
    op = jacobian_operator(lmap, 3)
    unit = np.array([0.0, 1.0, 0.0])
    assert np.allclose(stack_complex(matrix[:, 1]), op.apply(unit), rtol=1e-12, atol=1e-14)


def test_single_layer_adjoint_agrees_weakly(lmap, rng: np.random.Generator) -> None:
    r = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
    discrete = adjoint_evaluate(apply_Jstar(lmap, r), 4).values
    continuous = adjoint_evaluate(apply_Jstar(lmap, r, method="single_layer"), 4).values
    assert relative_error(continuous, discrete) < 2e-2


def test_solve_counter_counts_right_hand_sides() -> None:
    grid = Grid2D(17)
    counter = SolveCounter()
    m = prepare(K, ContrastField.zeros(grid), incidence_directions(2),
                MeasurementCircle(20.0, 8), counter=counter)
    assert counter.solves == 2
    apply_J_values(m, _mode(17))
    assert counter.solves == 4
    apply_Jstar(m, np.ones((2, 8)))
    assert counter.solves == 6
    counter.add(3)
    assert m.counter.solves == 9


def test_input_validation(lmap) -> None:
    with pytest.raises(ValueError, match="perturbation has shape"):
        apply_J_values(lmap, np.zeros((5, 5)))
    with pytest.raises(ValueError, match="residual has shape"):
        apply_Jstar(lmap, np.zeros((2, 8)))
    with pytest.raises(ValueError, match="unknown adjoint method"):
        apply_Jstar(lmap, np.zeros((3, 8)), method="born")
    with pytest.raises(ValueError, match="different grid"):
        apply_J(lmap, ContrastField.zeros(Grid2D(17)))
    other = build_dtn(3.0, lmap.grid, lmap.factorization.contrast)
    with pytest.raises(ValueError, match="does not match"):
        prepare(K, lmap.factorization.contrast, lmap.directions, lmap.circle, factorization=other)
