"""Tests for the Lippmann-Schwinger data generator."""

import math

import numpy as np
import pytest

from helmrecon.engine.lippmann_schwinger import (
    LSOperator,
    _gaussian_moment,
    build_ls,
    far_field,
    far_field_data,
    kernel_table,
    quadrature_weights,
    solve_scatter,
    solve_scatter_many,
)
from helmrecon.engine.measurement import incidence_directions, incident_field
from helmrecon.engine.models import ContrastField, Grid2D, MeasurementCircle, PlaneWaveSource
from helmrecon.engine.phantoms import PhantomSpec, radial_farfield_oracle, sample_phantom
from helmrecon.engine.utils import relative_error


@pytest.mark.parametrize("order", [2, 4])
def test_quadrature_weights_integrate_constants(order: int) -> None:
    w = quadrature_weights(17, order)
    assert w.sum() == pytest.approx(math.pi**2)
    assert np.allclose(w, w.T)


def test_quadrature_weights_reject_unknown_order() -> None:
    with pytest.raises(ValueError, match="order must be 2 or 4"):
        quadrature_weights(17, 3)
    with pytest.raises(ValueError, match="at least 6"):
        quadrature_weights(5, 4)


def test_kernel_table_is_punctured_and_symmetric() -> None:
    table = kernel_table(2.0, 9)
    assert table.shape == (17, 17)
    assert table[8, 8] == 0
    assert np.allclose(table, table.T)
    assert np.allclose(table, table[::-1, ::-1])


def test_fft_apply_matches_dense_rows(rng: np.random.Generator) -> None:
    grid = Grid2D(9)
    op = LSOperator.build(2.0, grid)
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    dense = op.matrix_rows(0, grid.size) @ v.ravel()
    assert np.allclose(op.apply(v).ravel(), dense, rtol=1e-12, atol=1e-12)


def test_volume_potential_of_a_gaussian() -> None:
    k, width = 2.0, 0.3
    grid = Grid2D(129)
    x1, x2 = np.meshgrid(grid.axis, grid.axis, indexing="ij")
    v = np.exp(-0.5 * (x1**2 + x2**2) / width**2)
    value = LSOperator.build(k, grid).apply(v)[64, 64]
    exact = _gaussian_moment(k, width)
    assert abs(value - exact) <= 1e-3 * abs(exact)


def test_zero_contrast_scatters_nothing(circle: MeasurementCircle) -> None:
    grid = Grid2D(17)
    f = build_ls(2.0, grid, ContrastField.zeros(grid))
    assert f.method == "identity"
    assert np.all(solve_scatter(f, PlaneWaveSource(2.0, (1.0, 0.0))) == 0)
    assert np.all(far_field_data(f, incidence_directions(2), circle) == 0)


def test_dense_solution_satisfies_the_system(radial_spec: PhantomSpec) -> None:
    grid = Grid2D(17)
    f = build_ls(2.0, grid, sample_phantom(radial_spec, grid))
    assert f.method == "dense"
    u_inc = incident_field(PlaneWaveSource(2.0, (0.0, 1.0)), grid.nodes)
    u = f.solve(u_inc)
    assert np.allclose(f.apply_system(u).ravel(), u_inc, atol=1e-10)


def test_gmres_agrees_with_dense(radial_spec: PhantomSpec) -> None:
    grid = Grid2D(25)
    q = sample_phantom(radial_spec, grid)
    dense = build_ls(2.0, grid, q)
    iterative = build_ls(2.0, grid, q, dense_limit=0, workers=2)
    assert iterative.method == "gmres"
    sources = [PlaneWaveSource(2.0, tuple(d)) for d in incidence_directions(3)]
    for a, b in zip(solve_scatter_many(dense, sources), solve_scatter_many(iterative, sources)):
        assert relative_error(b, a) < 1e-8


def test_far_field_matches_radial_oracle(radial_spec: PhantomSpec) -> None:
    k = 2.0
    grid = Grid2D(65)
    circle = MeasurementCircle(20.0, 16)
    f = build_ls(k, grid, sample_phantom(radial_spec, grid))
    src = PlaneWaveSource(k, (1.0, 0.0))
    total = solve_scatter(f, src).ravel() + incident_field(src, grid.nodes)
    exact = radial_farfield_oracle(radial_spec, k, src.direction, circle)
    assert relative_error(far_field(f, total, circle), exact) < 1e-4


def test_far_field_data_rows_follow_directions(radial_spec: PhantomSpec) -> None:
    grid = Grid2D(17)
    circle = MeasurementCircle(20.0, 8)
    f = build_ls(1.5, grid, sample_phantom(radial_spec, grid))
    data = far_field_data(f, incidence_directions(4), circle)
    assert data.shape == (4, 8)
    # the radial contrast and the symmetric grid make the rows rotations of each other
    assert np.allclose(data[1], np.roll(data[0], 2), rtol=1e-8, atol=1e-12)


def test_input_validation(radial_spec: PhantomSpec) -> None:
    grid = Grid2D(17)
    q = sample_phantom(radial_spec, grid)
    with pytest.raises(ValueError, match="different grid"):
        build_ls(2.0, Grid2D(9), q)
    f = build_ls(2.0, grid, q)
    with pytest.raises(ValueError, match="does not match"):
        solve_scatter(f, PlaneWaveSource(3.0, (1.0, 0.0)))
    with pytest.raises(ValueError, match="entries"):
        f.solve(np.ones(5))
