"""Tests for the panel quadrature of the Helmholtz layer potentials."""

import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special

from helmrecon.engine.layer_potentials import (
    SIDE_LENGTH,
    SIDE_STARTS,
    SIDE_TANGENTS,
    build_boundary,
    gauss_rule,
    greens,
    lagrange_matrix,
    layer_matrices,
    log_moments,
    log_weights,
    side_breakpoints,
    side_interpolation,
)
from helmrecon.engine.models import HALF_WIDTH, Grid2D


def test_gauss_rule_integrates_polynomials() -> None:
    nodes, weights = gauss_rule(8)
    assert weights.sum() == pytest.approx(2.0)
    assert weights @ nodes**14 == pytest.approx(2.0 / 15.0)


def test_greens_is_the_outgoing_hankel_function() -> None:
    r = np.array([0.5, 3.0])
    assert np.allclose(greens(2.0, r), 0.25j * scipy.special.hankel1(0, 2.0 * r))


@pytest.mark.parametrize("tau", [0.0, 0.3, -0.77, 1.0, -1.0, 1.15])
def test_log_weights_against_adaptive_quadrature(tau: float) -> None:
    weights = log_weights(tau, 16)
    nodes, _ = gauss_rule(16)
    approx = weights @ np.cos(nodes)
    points = [tau] if abs(tau) < 1 else None
    exact, _ = scipy.integrate.quad(
        lambda s: math.log(abs(tau - s)) * math.cos(s), -1.0, 1.0, points=points, limit=200
    )
    assert approx == pytest.approx(exact, abs=1e-10)


def test_log_moment_of_constant_at_center() -> None:
    assert log_moments(0.0, 3)[0] == pytest.approx(-2.0)


def test_lagrange_matrix_reproduces_polynomials() -> None:
    nodes, _ = gauss_rule(6)
    targets = np.array([-0.9, 0.1, nodes[2], 0.75])
    interp = lagrange_matrix(nodes, targets)
    assert np.allclose(interp @ nodes**5, targets**5)
    assert np.allclose(interp.sum(axis=1), 1.0)


def test_side_breakpoints_refine_toward_corners() -> None:
    breaks = side_breakpoints(1.0, 0.05)
    assert breaks[0] == 0.0
    assert breaks[-1] == pytest.approx(SIDE_LENGTH)
    lengths = np.diff(breaks)
    assert lengths.max() <= 1.0 + 1e-12
    assert lengths[0] <= 0.05
    assert lengths[-1] <= 0.05
    assert np.all(lengths > 0)


def test_boundary_geometry() -> None:
    bd = build_boundary(3.0, Grid2D(33))
    assert bd.weights.sum() == pytest.approx(4 * SIDE_LENGTH)
    assert np.allclose(np.abs(bd.nodes).max(axis=1), HALF_WIDTH)
    # outward normals point away from the origin
    assert np.all(np.sum(bd.nodes * bd.normals, axis=1) > 0)
    assert bd.n_bdry == bd.nodes.shape[0]
    with pytest.raises(ValueError, match="panel order"):
        build_boundary(3.0, Grid2D(33), order=1)


def _plane_wave_data(k: float, points: np.ndarray, normals: np.ndarray):
    d = np.array([math.cos(0.4), math.sin(0.4)])
    u = np.exp(1j * k * points @ d)
    return u, 1j * k * (normals @ d) * u


def test_green_identity_off_the_boundary() -> None:
    k = 3.0
    bd = build_boundary(k, Grid2D(33))
    u, dudn = _plane_wave_data(k, bd.nodes, bd.normals)
    targets = np.array([[0.0, 0.0], [0.4, -0.9], [20.0, 0.0], [3.0, 2.5]])
    single, double = layer_matrices(bd, targets, k)
    rep = double @ u - single @ dudn
    inside = np.exp(1j * k * targets[:2] @ np.array([math.cos(0.4), math.sin(0.4)]))
    assert np.allclose(rep[:2], -inside, atol=1e-8)
    assert np.allclose(rep[2:], 0.0, atol=1e-8)


def test_green_identity_on_the_boundary() -> None:
    k = 3.0
    bd = build_boundary(k, Grid2D(33))
    u, dudn = _plane_wave_data(k, bd.nodes, bd.normals)
    targets = np.array([[0.2, -HALF_WIDTH], [HALF_WIDTH, 0.3], [-0.5, HALF_WIDTH]])
    single, double = layer_matrices(bd, targets, k)
    rep = double @ u - single @ dudn
    u_t, _ = _plane_wave_data(k, targets, np.zeros_like(targets))
    assert np.allclose(rep, -0.5 * u_t, atol=1e-6)


def test_side_interpolation_of_smooth_data() -> None:
    n = 65
    bd = build_boundary(2.0, Grid2D(n))
    interp = side_interpolation(bd, n)
    h = SIDE_LENGTH / (n - 1)
    samples = np.concatenate(
        [SIDE_STARTS[s] + (h * np.arange(n))[:, None] * SIDE_TANGENTS[s] for s in range(4)]
    )

    def f(p: np.ndarray) -> np.ndarray:
        return np.cos(p[:, 0]) + np.sin(2 * p[:, 1])

    assert interp.shape == (bd.n_bdry, 4 * n)
    assert np.allclose(interp @ f(samples), f(bd.nodes), atol=1e-6)
    with pytest.raises(ValueError, match="samples"):
        side_interpolation(bd, 5)
