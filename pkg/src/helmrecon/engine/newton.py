"""Per-frequency Newton iterations chained by frequency continuation."""
from __future__ import annotations

import dataclasses
import logging
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np

from .derivatives import LinearizedMap, SolveCounter, jacobian_operator, prepare
from .lsqr import ADJOINT_TOLERANCE, estimate_condition, lsqr
from .models import (
    ContrastField,
    FarFieldSlice,
    Grid2D,
    GridRefinement,
    InitMode,
    MultiFreqDataset,
    NumericalError,
)
from .phantoms import PhantomSpec, phantom_function
from .sine_basis import SineCoeffs, band_limit, evaluate, project
from .utils import stack_complex, stopwatch

logger = logging.getLogger(__name__)

PROJECTION_BAND = 3
PROJECTION_GRID = 65

REPORT_COLUMNS: tuple[str, ...] = (
    "k",
    "N",
    "Modes",
    "M",
    "MP",
    "T_f",
    "N_it",
    "T_l",
    "T_t",
    "l2_error",
    "condition",
    "resonance_shift",
    "newton_iterations",
    "residual",
    "flagged",
    "solves",
    "work_estimate",
)
TIMING_COLUMNS = frozenset({"T_f", "T_l", "T_t"})


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-3
    max_newton_first: int = 8
    max_newton: int = 3
    lsqr_tol: float = 1e-3
    lsqr_max_iter: int = 200
    ppw: float = 20.0
    min_intervals: int = 32
    safeguard: bool = True
    refinement: GridRefinement = GridRefinement.POW2
    panel_order: int = 16
    condition: bool = True
    adjoint_check: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "refinement", GridRefinement(self.refinement))
        for name in ("tol", "lsqr_tol", "ppw"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in (
            "max_newton_first", "max_newton", "lsqr_max_iter", "panel_order", "min_intervals"
        ):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")

    def to_json(self) -> dict[str, Any]:
        payload = dataclasses.asdict(self)
        payload["refinement"] = self.refinement.value
        return payload

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> NewtonConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown newton keys: {sorted(unknown)}")
        return cls(**dict(payload))


@dataclass(frozen=True)
class FrequencyRecord:
    k: float
    n_unknowns: int
    modes: int
    n_directions: int
    n_measurements: int
    t_factor: float
    lsqr_iterations: int
    t_lsqr: float
    t_total: float
    l2_error: float | None
    condition: float | None
    resonance_shift: float
    newton_iterations: int
    residual: float
    flagged: bool
    solves: int
    work_estimate: int

    def row(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "N": self.n_unknowns,
            "Modes": self.modes,
            "M": self.n_directions,
            "MP": self.n_measurements,
            "T_f": self.t_factor,
            "N_it": self.lsqr_iterations,
            "T_l": self.t_lsqr,
            "T_t": self.t_total,
            "l2_error": self.l2_error,
            "condition": self.condition,
            "resonance_shift": self.resonance_shift,
            "newton_iterations": self.newton_iterations,
            "residual": self.residual,
            "flagged": self.flagged,
            "solves": self.solves,
            "work_estimate": self.work_estimate,
        }


@dataclass(frozen=True)
class RunReport:
    records: tuple[FrequencyRecord, ...] = ()

    def rows(self, *, timings: bool = True) -> list[dict[str, Any]]:
        rows = [r.row() for r in self.records]
        if not timings:
            rows = [{k: v for k, v in row.items() if k not in TIMING_COLUMNS} for row in rows]
        return rows

    def append(self, record: FrequencyRecord) -> RunReport:
        return RunReport(self.records + (record,))

    def to_json(self) -> dict[str, Any]:
        return {"columns": list(REPORT_COLUMNS), "rows": self.rows()}

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> RunReport:
        records = []
        for row in payload.get("rows", []):
            records.append(
                FrequencyRecord(
                    k=row["k"], n_unknowns=row["N"], modes=row["Modes"],
                    n_directions=row["M"], n_measurements=row["MP"], t_factor=row["T_f"],
                    lsqr_iterations=row["N_it"], t_lsqr=row["T_l"], t_total=row["T_t"],
                    l2_error=row.get("l2_error"), condition=row.get("condition"),
                    resonance_shift=row.get("resonance_shift", 0.0),
                    newton_iterations=row["newton_iterations"], residual=row["residual"],
                    flagged=bool(row["flagged"]), solves=row["solves"],
                    work_estimate=row.get("work_estimate", 0),
                )
            )
        return cls(tuple(records))


@dataclass(frozen=True, eq=False)
class ReconstructionState:
    """Current band-limited reconstruction; the grid field is derived from ``coeffs``."""

    coeffs: SineCoeffs
    grid: Grid2D
    k: float = 0.0
    index: int = -1
    history: tuple[FrequencyRecord, ...] = ()

    @property
    def contrast(self) -> ContrastField:
        return evaluate(self.coeffs, self.grid)


def _relative_l2(coeffs: SineCoeffs, truth: PhantomSpec, grid: Grid2D) -> float:
    x1, x2 = np.meshgrid(grid.axis, grid.axis, indexing="ij")
    exact = phantom_function(truth)(x1, x2)
    approx = evaluate(coeffs, grid).values
    return float(np.linalg.norm(approx - exact) / np.linalg.norm(exact))


def _verify_adjoint(lmap: LinearizedMap, s_max: int) -> None:
    """Dot-product test of the Jacobian pair, on a private solve counter."""
    side = dataclasses.replace(lmap, counter=SolveCounter())
    defect = jacobian_operator(side, s_max).check_adjoint()
    if defect > ADJOINT_TOLERANCE:
        raise NumericalError(
            f"Jacobian adjoint defect {defect:.2e} at k={lmap.k:g} exceeds {ADJOINT_TOLERANCE:g}"
        )
    logger.debug("k=%g: Jacobian adjoint defect %.1e", lmap.k, defect)


def newton_single_frequency(
    data: FarFieldSlice,
    state: ReconstructionState,
    cfg: NewtonConfig,
    *,
    first: bool = False,
    truth: PhantomSpec | None = None,
    elapsed_before: float = 0.0,
) -> tuple[ReconstructionState, FrequencyRecord]:
    """Newton iterations at the frequency of ``data``, warm-started from ``state``.

    Each iteration solves ``min |J E δc - r|`` with LSQR and takes the real
    update ``c + δc``. With the safeguard on, a step that raises the residual
    is halved once and otherwise rejected, which ends the frequency flagged.
    """
    if data.k < state.k:
        raise ValueError(f"data at k={data.k} precede the current frequency k={state.k}")
    start = time.perf_counter()
    k = data.k
    s_max = max(band_limit(k), state.coeffs.s_max)
    grid = Grid2D.for_wavenumber(
        k, cfg.ppw, min_intervals=max(2 * s_max, cfg.min_intervals), refinement=cfg.refinement
    )
    coeffs = state.coeffs.extend(s_max)
    counter = SolveCounter()
    data_norm = float(np.linalg.norm(data.values))
    if data_norm == 0:
        raise ValueError(f"far-field data at k={k} are identically zero")
    max_iter = cfg.max_newton_first if first else cfg.max_newton

    t_factor = 0.0

    def linearize(c: SineCoeffs):
        nonlocal t_factor
        lmap = prepare(
            k, evaluate(c, grid), data.directions, data.circle,
            counter=counter, order=cfg.panel_order, ppw=cfg.ppw,
        )
        t_factor += lmap.factorization.stats.t_interior + lmap.factorization.stats.t_bdry
        residual = data.values - lmap.model_far_field.values
        return lmap, residual, float(np.linalg.norm(residual)) / data_norm

    lmap, residual, rel = linearize(coeffs)
    logger.info(
        "k=%g n=%d modes=%d M=%d: initial residual %.3e",
        k, grid.n_per_side, len(coeffs), data.n_directions, rel,
    )
    newton_its = lsqr_its = 0
    t_lsqr = 0.0
    work = 0
    flagged = False
    condition: float | None = None
    while rel >= cfg.tol and newton_its < max_iter:
        op = jacobian_operator(lmap, s_max)
        if newton_its == 0 and cfg.adjoint_check:
            _verify_adjoint(lmap, s_max)
        if cfg.condition and condition is None:
            side = dataclasses.replace(lmap, counter=SolveCounter())
            condition = estimate_condition(jacobian_operator(side, s_max))
        with stopwatch() as lsqr_time:
            result = lsqr(op, stack_complex(residual), cfg.lsqr_tol, cfg.lsqr_max_iter)
        t_lsqr += lsqr_time[0]
        lsqr_its += result.n_iter
        work += result.n_products * data.n_directions * grid.size
        flagged |= result.flagged
        step = result.solution
        trial = SineCoeffs(s_max, coeffs.values + step)
        trial_map, trial_res, trial_rel = linearize(trial)
        if cfg.safeguard and trial_rel > rel:
            logger.warning("k=%g: residual rose to %.3e; halving the step", k, trial_rel)
            trial = SineCoeffs(s_max, coeffs.values + 0.5 * step)
            trial_map, trial_res, trial_rel = linearize(trial)
            if trial_rel > rel:
                logger.warning("k=%g: halved step rejected; frequency flagged", k)
                flagged = True
                newton_its += 1
                break
        coeffs, lmap, residual, rel = trial, trial_map, trial_res, trial_rel
        newton_its += 1
        logger.info(
            "k=%g newton %d: lsqr %d its (%s), residual %.3e",
            k, newton_its, result.n_iter, result.reason, rel,
        )

    record = FrequencyRecord(
        k=k,
        n_unknowns=grid.size,
        modes=len(coeffs),
        n_directions=data.n_directions,
        n_measurements=data.n_directions * data.n_receivers,
        t_factor=t_factor,
        lsqr_iterations=lsqr_its,
        t_lsqr=t_lsqr,
        t_total=elapsed_before + time.perf_counter() - start,
        l2_error=_relative_l2(coeffs, truth, grid) if truth is not None else None,
        condition=condition,
        resonance_shift=lmap.factorization.shift,
        newton_iterations=newton_its,
        residual=rel,
        flagged=flagged,
        solves=counter.solves,
        work_estimate=work,
    )
    new_state = ReconstructionState(
        coeffs, grid, k, state.index + 1, state.history + (record,)
    )
    return new_state, record


def initial_state(
    k: float, cfg: NewtonConfig, init_mode: InitMode | str, truth: PhantomSpec | None
) -> ReconstructionState:
    """Starting coefficients at the first frequency.

    ``projection`` projects the ground truth onto the lowest modes, at most
    ``PROJECTION_BAND`` and never past the band limit at ``k``; ``born``
    starts from zero so the first Newton step is the Born step.
    """
    mode = InitMode(init_mode)
    band = max(band_limit(k), 2)
    grid = Grid2D.for_wavenumber(
        k, cfg.ppw, min_intervals=max(2 * band, cfg.min_intervals), refinement=cfg.refinement
    )
    if mode is InitMode.PROJECTION:
        if truth is None:
            raise ValueError("projection initialization needs the ground-truth phantom")
        fine = Grid2D(PROJECTION_GRID)
        x1, x2 = np.meshgrid(fine.axis, fine.axis, indexing="ij")
        sampled = ContrastField(fine, phantom_function(truth)(x1, x2))
        return ReconstructionState(project(sampled, min(PROJECTION_BAND, band)), grid)
    return ReconstructionState(SineCoeffs.zeros(band), grid)


def recursive_linearization(
    dataset: MultiFreqDataset,
    cfg: NewtonConfig,
    init_mode: InitMode | str = InitMode.PROJECTION,
    truth: PhantomSpec | None = None,
    callback: Callable[[ReconstructionState, FrequencyRecord], None] | None = None,
) -> tuple[ReconstructionState, RunReport]:
    """Sweep the dataset's frequencies upward, one Newton solve per frequency."""
    state = initial_state(dataset.slices[0].k, cfg, init_mode, truth)
    report = RunReport()
    elapsed = 0.0
    for j, data in enumerate(dataset.slices):
        state, record = newton_single_frequency(
            data, state, cfg, first=(j == 0), truth=truth, elapsed_before=elapsed
        )
        elapsed = record.t_total
        report = report.append(record)
        if record.flagged:
            logger.warning("frequency k=%g finished flagged", record.k)
        if callback is not None:
            callback(state, record)
    logger.info("recursive linearization finished in %.1fs", elapsed)
    return state, report
