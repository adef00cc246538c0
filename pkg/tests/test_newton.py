"""Tests for the per-frequency Newton solver and the frequency sweep."""

import math

import numpy as np
import pytest

from helmrecon.engine import derivatives, newton
from helmrecon.engine.derivatives import assemble_jacobian, prepare
from helmrecon.engine.lsqr import LsqrResult
from helmrecon.engine.measurement import incidence_directions
from helmrecon.engine.models import (
    FarFieldSlice,
    Grid2D,
    GridRefinement,
    ContrastField,
    MeasurementCircle,
    MultiFreqDataset,
    NumericalError,
)
from helmrecon.engine.newton import (
    REPORT_COLUMNS,
    NewtonConfig,
    ReconstructionState,
    RunReport,
    initial_state,
    newton_single_frequency,
    recursive_linearization,
)
from helmrecon.engine.phantoms import PhantomSpec, sample_phantom
from helmrecon.engine.sine_basis import SineCoeffs, band_limit, evaluate, mode_count, project

FAST = NewtonConfig(max_newton_first=2, max_newton=1, lsqr_max_iter=50)


def _slice(spec: PhantomSpec, k: float) -> FarFieldSlice:
    q = sample_phantom(spec, Grid2D(33))
    return prepare(k, q, incidence_directions(2), MeasurementCircle(20.0, 8)).model_far_field


@pytest.fixture(scope="module")
def dataset() -> MultiFreqDataset:
    spec = PhantomSpec("radial", {"amplitude": 0.5, "radius": 1.2})
    return MultiFreqDataset.from_slices([_slice(spec, 1.0), _slice(spec, 1.25)])


def test_newton_config_validation_and_json() -> None:
    cfg = NewtonConfig(tol=1e-4, refinement="exact")
    assert cfg.refinement is GridRefinement.EXACT
    assert NewtonConfig.from_json(cfg.to_json()) == cfg
    assert cfg.to_json()["refinement"] == "exact"
    with pytest.raises(ValueError, match="tol must be positive"):
        NewtonConfig(tol=0.0)
    with pytest.raises(ValueError, match="positive integer"):
        NewtonConfig(max_newton=0)
    with pytest.raises(ValueError, match="unknown newton keys"):
        NewtonConfig.from_json({"damping": 0.5})


def test_initial_state_modes(radial_spec: PhantomSpec) -> None:
    projected = initial_state(1.0, FAST, "projection", radial_spec)
    assert projected.coeffs.s_max == band_limit(1.0) == 2
    assert len(projected.coeffs) == 1
    wider = initial_state(2.0, FAST, "projection", radial_spec)
    assert wider.coeffs.s_max == newton.PROJECTION_BAND
    assert projected.grid.n_per_side == FAST.min_intervals + 1
    assert projected.coeffs.values[0] > 0
    born = initial_state(1.0, FAST, "born", None)
    assert born.coeffs.s_max == 2
    assert not np.any(born.coeffs.values)
    with pytest.raises(ValueError, match="ground-truth"):
        initial_state(1.0, FAST, "projection", None)


def test_born_start_reduces_residual(dataset: MultiFreqDataset, radial_spec: PhantomSpec) -> None:
    state = initial_state(1.0, FAST, "born", None)
    new_state, record = newton_single_frequency(
        dataset.slices[0], state, FAST, first=True, truth=radial_spec
    )
    assert record.newton_iterations >= 1
    assert record.residual < 1.0
    assert record.modes == mode_count(2)
    assert record.n_measurements == 2 * 8
    assert record.condition is not None and record.condition >= 1.0
    assert record.solves > 0 and record.work_estimate > 0
    assert new_state.k == 1.0 and new_state.index == 0
    assert new_state.history == (record,)
    assert new_state.contrast.grid == new_state.grid


def test_rejected_step_flags_the_frequency(
    dataset: MultiFreqDataset, monkeypatch: pytest.MonkeyPatch
) -> None:
    def bad_lsqr(op, rhs, tol, max_iter):
        step = np.full(op.shape[1], 50.0)
        return LsqrResult(step, 1, 0.0, 0.0, "converged", False, 3)

    monkeypatch.setattr(newton, "lsqr", bad_lsqr)
    cfg = NewtonConfig(max_newton_first=3, condition=False)
    state = initial_state(1.0, cfg, "born", None)
    _, record = newton_single_frequency(dataset.slices[0], state, cfg, first=True)
    assert record.flagged
    assert record.newton_iterations == 1
    assert record.residual == pytest.approx(1.0)
    assert record.l2_error is None


def test_frequencies_must_not_decrease(dataset: MultiFreqDataset) -> None:
    state = ReconstructionState(SineCoeffs.zeros(2), Grid2D(9), k=2.0)
    with pytest.raises(ValueError, match="precede"):
        newton_single_frequency(dataset.slices[0], state, FAST)
    zero = dataset.slices[0].with_values(np.zeros((2, 8)))
    with pytest.raises(ValueError, match="identically zero"):
        newton_single_frequency(zero, ReconstructionState(SineCoeffs.zeros(2), Grid2D(9)), FAST)


def test_recursive_linearization_sweeps_upward(
    dataset: MultiFreqDataset, radial_spec: PhantomSpec
) -> None:
    seen = []
    state, report = recursive_linearization(
        dataset, FAST, "projection", truth=radial_spec,
        callback=lambda s, r: seen.append((s.k, r.k)),
    )
    assert seen == [(1.0, 1.0), (1.25, 1.25)]
    assert [r.k for r in report.records] == [1.0, 1.25]
    assert state.index == 1
    assert [r.modes for r in report.records] == [mode_count(2), mode_count(2)]
    assert all(math.isfinite(r.l2_error) for r in report.records)
    assert report.records[1].t_total >= report.records[0].t_total


def test_run_report_round_trip(dataset: MultiFreqDataset) -> None:
    state = initial_state(1.0, FAST, "born", None)
    _, record = newton_single_frequency(dataset.slices[0], state, FAST, first=True)
    report = RunReport().append(record).append(record)
    payload = report.to_json()
    assert payload["columns"] == list(REPORT_COLUMNS)
    assert RunReport.from_json(payload) == report
    assert "T_f" not in report.rows(timings=False)[0]


def test_solve_count_matches_work_model(dataset: MultiFreqDataset) -> None:
    cfg = NewtonConfig(max_newton_first=2, safeguard=False, condition=False, lsqr_max_iter=50)
    state = initial_state(1.0, cfg, "born", None)
    _, record = newton_single_frequency(dataset.slices[0], state, cfg, first=True)
    m, its, n_it = record.n_directions, record.newton_iterations, record.lsqr_iterations
    assert its >= 1
    # one linearization per iterate plus 2 N_it + 1 Jacobian products per LSQR solve
    assert record.solves == m * (1 + its) + m * (2 * n_it + its)
    assert record.work_estimate == (2 * n_it + its) * m * record.n_unknowns
    assert record.condition is None


def test_reconstruction_stays_in_band(
    dataset: MultiFreqDataset, radial_spec: PhantomSpec
) -> None:
    states = []
    recursive_linearization(
        dataset, FAST, "projection", truth=radial_spec, callback=lambda s, r: states.append(s)
    )
    for state in states:
        band = band_limit(state.k)
        assert state.coeffs.s_max == band
        wide = project(state.contrast, 8).matrix()
        inside = np.add.outer(np.arange(1, 8), np.arange(1, 8)) <= band
        assert np.all(np.abs(wide[~inside]) < 1e-12)
        assert np.any(wide[inside] != 0)


def test_in_band_data_is_a_fixed_point() -> None:
    coeffs = SineCoeffs(2, np.array([0.1]))
    grid = Grid2D(33)
    data = prepare(
        1.0, evaluate(coeffs, grid), incidence_directions(2), MeasurementCircle(20.0, 8)
    ).model_far_field
    state = ReconstructionState(coeffs, grid)
    new_state, record = newton_single_frequency(data, state, FAST, first=True)
    assert record.newton_iterations == 0
    assert record.lsqr_iterations == 0
    assert record.residual < 1e-12
    assert np.array_equal(new_state.coeffs.values, coeffs.values)


def test_born_step_matches_assembled_least_squares(dataset: MultiFreqDataset) -> None:
    cfg = NewtonConfig(max_newton_first=1, lsqr_tol=1e-12, safeguard=False, condition=False)
    data = dataset.slices[0]
    state = initial_state(1.0, cfg, "born", None)
    new_state, record = newton_single_frequency(data, state, cfg, first=True)
    assert record.newton_iterations == 1

    zero = ContrastField(state.grid, np.zeros(state.grid.shape))
    jac = assemble_jacobian(prepare(1.0, zero, data.directions, data.circle), 2)
    rhs = data.values.ravel()
    expected, *_ = np.linalg.lstsq(
        np.vstack([jac.real, jac.imag]), np.concatenate([rhs.real, rhs.imag]), rcond=None
    )
    assert np.allclose(new_state.coeffs.values, expected, rtol=1e-8, atol=0.0)


def test_report_is_deterministic(dataset: MultiFreqDataset, radial_spec: PhantomSpec) -> None:
    _, first = recursive_linearization(dataset, FAST, "projection", truth=radial_spec)
    _, second = recursive_linearization(dataset, FAST, "projection", truth=radial_spec)
    assert first.rows(timings=False) == second.rows(timings=False)


def test_broken_adjoint_stops_the_frequency(
    dataset: MultiFreqDataset, monkeypatch: pytest.MonkeyPatch
) -> None:
    exact = derivatives.apply_Jstar
    monkeypatch.setattr(
        derivatives, "apply_Jstar", lambda lmap, values: 2.0 * exact(lmap, values)
    )
    state = initial_state(1.0, FAST, "born", None)
    with pytest.raises(NumericalError, match="adjoint defect"):
        newton_single_frequency(dataset.slices[0], state, FAST, first=True)
    unchecked = NewtonConfig(max_newton_first=1, adjoint_check=False, condition=False)
    _, record = newton_single_frequency(dataset.slices[0], state, unchecked, first=True)
    assert record.newton_iterations == 1
