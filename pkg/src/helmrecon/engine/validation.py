"""Fast self-checks of the discretization, run by ``helmrecon validate``."""
from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import sine_basis
from .derivatives import apply_J_values, jacobian_operator, prepare
from .dtn import FieldSource, build_dtn, far_field_dtn, solve_with_source
from .lippmann_schwinger import build_ls, far_field, solve_scatter
from .lsqr import LinearOp, lsqr
from .measurement import incidence_directions, incident_field
from .models import ContrastField, Grid2D, MeasurementCircle, PhantomKind, PlaneWaveSource
from .phantoms import PhantomSpec, radial_farfield_oracle, sample_phantom
from .utils import relative_error

logger = logging.getLogger(__name__)

ORACLE_PHANTOM = PhantomSpec(PhantomKind.RADIAL, {"amplitude": 0.5, "radius": 1.2})
FORWARD_GRID = 65
FORWARD_TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def _check(name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    passed = bool(np.isfinite(value) and value < threshold)
    level = logging.INFO if passed else logging.ERROR
    logger.log(level, "check %s: %.3e (threshold %.1e)", name, value, threshold)
    return CheckResult(name, passed, float(value), threshold, detail)


def check_sine_basis(seed: int = 0) -> CheckResult:
    """Adjoint defect of evaluate/adjoint_evaluate plus the in-band round trip."""
    rng = np.random.default_rng(seed)
    s_max, grid = 8, Grid2D(33)
    c = sine_basis.SineCoeffs(s_max, rng.standard_normal(sine_basis.mode_count(s_max)))
    g = rng.standard_normal(grid.shape)
    lhs = grid.spacing**2 * np.sum(sine_basis.evaluate(c, grid).values * g)
    rhs = float(c.values @ sine_basis.adjoint_evaluate(g, s_max).values)
    defect = abs(lhs - rhs) / (abs(lhs) + abs(rhs))
    back = sine_basis.project(sine_basis.evaluate(c, grid), s_max)
    worst = max(defect, float(np.max(np.abs(back.values - c.values))))
    return _check("sine_basis", worst, 1e-12, "E/E* defect and projection round trip")


def check_lsqr(n_systems: int = 10, seed: int = 0) -> CheckResult:
    """LSQR against dense least squares on random 60×20 systems."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_systems):
        a = rng.standard_normal((60, 20))
        b = rng.standard_normal(60)
        result = lsqr(LinearOp.from_matrix(a), b, tol=1e-10, max_iter=200)
        exact = np.linalg.lstsq(a, b, rcond=None)[0]
        history = np.asarray(result.residual_history)
        if np.any(np.diff(history) > 1e-12 * history[0]):
            return _check("lsqr", math.inf, 1e-8, "residual history not monotone")
        worst = max(worst, relative_error(result.solution, exact))
    return _check("lsqr", worst, 1e-8, f"{n_systems} random 60x20 systems")


def _small_map(k: float = 2.0, n_per_side: int = 31, n_directions: int = 4):
    grid = Grid2D(n_per_side)
    q0 = sample_phantom(ORACLE_PHANTOM, grid)
    circle = MeasurementCircle(20.0, 8)
    return prepare(k, q0, incidence_directions(n_directions), circle)


def check_adjoint(
    *, fault: float = 0.0, n_trials: int = 5, seed: int = 0
) -> CheckResult:
    """``<J E c, y> = <c, E* J* y>`` on random vector pairs.

    ``fault`` perturbs the adjoint on purpose, to confirm the check can fail.
    """
    lmap = _small_map()
    op = jacobian_operator(lmap, 4)
    adjoint: Callable[[np.ndarray], np.ndarray] = op.apply_adjoint
    if fault:
        op = LinearOp(op.shape, op.apply, lambda y: (1.0 + fault) * adjoint(y))
    defect = op.check_adjoint(n_trials=n_trials, seed=seed)
    detail = "k=2, 31x31 grid, M=4" + (" (fault injected)" if fault else "")
    return _check("adjoint", defect, 1e-10, detail)


def check_taylor(k: float = 2.0, n_per_side: int = 31) -> CheckResult:
    """Observed order of the first-order Taylor remainder of the far-field map."""
    lmap = _small_map(k, n_per_side)
    grid = lmap.grid
    dq = sine_basis.synthesize(sine_basis.SineCoeffs(2, [1.0]), n_per_side)
    jdq = apply_J_values(lmap, dq)
    base = lmap.model_far_field.values
    remainders = []
    for step in (1e-3, 5e-4, 2.5e-4):
        shifted = ContrastField(grid, lmap.factorization.contrast.values + step * dq)
        moved = prepare(k, shifted, lmap.directions, lmap.circle).model_far_field.values
        remainders.append(float(np.linalg.norm(moved - base - step * jdq)))
    orders = [math.log2(a / b) for a, b in zip(remainders, remainders[1:])]
    # reported as a shortfall so the common "below threshold" rule applies
    return _check("taylor", max(0.0, 1.9 - min(orders)) + 1e-16, 1e-3,
                  f"observed orders {', '.join(f'{o:.2f}' for o in orders)}")


def check_forward(k: float = 2.0) -> list[CheckResult]:
    """Both forward solvers against the radial series solution."""
    circle = MeasurementCircle(20.0, 16)
    src = PlaneWaveSource(k, (1.0, 0.0))
    exact = radial_farfield_oracle(ORACLE_PHANTOM, k, src.direction, circle)

    ls_grid = Grid2D(FORWARD_GRID)
    q_ls = sample_phantom(ORACLE_PHANTOM, ls_grid)
    f_ls = build_ls(k, ls_grid, q_ls)
    total = solve_scatter(f_ls, src).ravel() + incident_field(src, ls_grid.nodes)
    ls_err = relative_error(far_field(f_ls, total, circle), exact)

    dtn_grid = Grid2D(FORWARD_GRID)
    f_dtn = build_dtn(k, dtn_grid, sample_phantom(ORACLE_PHANTOM, dtn_grid))
    sol = solve_with_source(f_dtn, FieldSource.plane_wave(src.direction))
    dtn_err = relative_error(far_field_dtn(f_dtn, sol.boundary, circle), exact)
    label = f"{FORWARD_GRID}x{FORWARD_GRID}"
    return [
        _check("forward_ls", ls_err, FORWARD_TOLERANCE, f"k={k}, {label} grid vs radial series"),
        _check("forward_dtn", dtn_err, FORWARD_TOLERANCE, f"k={k}, {label} grid vs radial series"),
    ]


def run_checks(*, adjoint_fault: float = 0.0) -> list[CheckResult]:
    results = [check_sine_basis(), check_lsqr(), check_adjoint(fault=adjoint_fault)]
    results.append(check_taylor())
    results.extend(check_forward())
    return results
