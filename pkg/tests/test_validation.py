"""Tests for the discretization self-checks."""

import pytest

from helmrecon.engine import validation


def test_sine_basis_and_lsqr_checks_pass() -> None:
    for result in (validation.check_sine_basis(), validation.check_lsqr(n_systems=3)):
        assert result.passed, result
        assert result.value < result.threshold


def test_adjoint_check_detects_injected_fault() -> None:
    clean = validation.check_adjoint(n_trials=2)
    assert clean.passed
    faulty = validation.check_adjoint(fault=1e-3, n_trials=2)
    assert not faulty.passed
    assert faulty.value > 1e3 * clean.value
    assert "fault injected" in faulty.detail


def test_taylor_check_sees_second_order_remainder() -> None:
    result = validation.check_taylor()
    assert result.passed, result.detail
    assert "observed orders" in result.detail


@pytest.mark.slow
def test_forward_checks_pass() -> None:
    results = validation.check_forward()
    assert [r.name for r in results] == ["forward_ls", "forward_dtn"]
    assert all(r.passed for r in results), results
    assert all(r.threshold == 1e-4 for r in results)
