"""Fréchet derivative of the far-field map and its adjoint, by DtN solves."""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .dtn import DtNFactorization, FieldSource, build_dtn, solve_with_sources
from .lsqr import LinearOp
from .models import ContrastField, FarFieldSlice, Grid2D, MeasurementCircle
from .sine_basis import SineCoeffs, adjoint_evaluate, mode_count, synthesize
from .utils import stack_complex, unstack_complex

logger = logging.getLogger(__name__)

ADJOINT_METHODS = ("discrete", "single_layer")


@dataclass
class SolveCounter:
    """Number of forward solves (one per right-hand side) issued so far."""

    solves: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, count: int) -> None:
        with self._lock:
            self.solves += count


@dataclass(frozen=True, eq=False)
class LinearizedMap:
    """Background state at ``(k, q0)`` shared by every derivative application."""

    factorization: DtNFactorization
    background: np.ndarray
    directions: np.ndarray
    circle: MeasurementCircle
    model_far_field: FarFieldSlice
    counter: SolveCounter = field(default_factory=SolveCounter)

    @property
    def k(self) -> float:
        return self.factorization.k

    @property
    def grid(self) -> Grid2D:
        return self.factorization.grid

    @property
    def n_directions(self) -> int:
        return self.directions.shape[0]

    def far_map(self) -> scipy.sparse.csr_matrix:
        return self.factorization.far_map(self.circle)


def prepare(
    k: float,
    q0: ContrastField,
    directions: np.ndarray,
    circle: MeasurementCircle,
    *,
    factorization: DtNFactorization | None = None,
    counter: SolveCounter | None = None,
    **build_options,
) -> LinearizedMap:
    """Factor at ``(k, q0)`` and solve the ``M`` background problems.

    The model far field ``F_k[q0]`` comes back on the map.
    """
    directions = np.asarray(directions, dtype=float).reshape(-1, 2)
    f = factorization
    if f is None:
        f = build_dtn(k, q0.grid, q0, **build_options)
    elif not math.isclose(f.k, k, rel_tol=1e-12) or f.grid != q0.grid:
        raise ValueError(f"factorization at k={f.k} does not match the requested background")
    counter = counter if counter is not None else SolveCounter()
    solutions = solve_with_sources(f, [FieldSource.plane_wave(d) for d in directions])
    counter.add(len(solutions))
    background = np.vstack([s.total.ravel() for s in solutions])
    scattered = np.column_stack([s.field.ravel() for s in solutions])
    model = (f.far_map(circle) @ scattered).T
    slice_ = FarFieldSlice(k, directions, circle, model)
    return LinearizedMap(f, background, directions, circle, slice_, counter)


def _check_grid(lmap: LinearizedMap, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.shape != lmap.grid.shape:
        raise ValueError(f"perturbation has shape {values.shape}, grid is {lmap.grid.shape}")
    return values


def apply_J_values(lmap: LinearizedMap, dq: np.ndarray) -> np.ndarray:
    """``(M, P)`` far-field response to a perturbation given as grid values."""
    f = lmap.factorization
    dq = _check_grid(lmap, dq).reshape(-1)
    sources = f.k_eff**2 * (lmap.background * dq[None, :]).T
    v = f.field_values(f.solve(f.source_map(sources)))
    lmap.counter.add(lmap.n_directions)
    return np.asarray((lmap.far_map() @ v).T)


def apply_J(lmap: LinearizedMap, dq: ContrastField) -> FarFieldSlice:
    """Linearized far field: one radiating solve with source ``k² dq u0`` per incidence."""
    if dq.grid != lmap.grid:
        raise ValueError("perturbation lives on a different grid than the background")
    return lmap.model_far_field.with_values(apply_J_values(lmap, dq.values))


def apply_Jstar(
    lmap: LinearizedMap, residual: FarFieldSlice | np.ndarray, *, method: str = "discrete"
) -> np.ndarray:
    """Adjoint image on the grid, complex ``(n, n)``.

    ``discrete`` is the exact adjoint of :func:`apply_J` for the pairings
    ``w_r Σ conj(a) b`` on the receivers and ``h² Σ conj(a) b`` on the grid.
    ``single_layer`` discretizes the continuous adjoint instead, forcing each
    solve with the single layer of the conjugated residual.
    """
    values = residual.values if isinstance(residual, FarFieldSlice) else np.asarray(residual)
    expected = (lmap.n_directions, lmap.circle.n_receivers)
    if values.shape != expected:
        raise ValueError(f"residual has shape {values.shape}, expected {expected}")
    if method not in ADJOINT_METHODS:
        raise ValueError(f"unknown adjoint method {method!r}; choose from {ADJOINT_METHODS}")
    f = lmap.factorization
    k2 = f.k_eff**2
    if method == "single_layer":
        sources = [FieldSource.boundary_density(np.conj(row), lmap.circle) for row in values]
        solutions = solve_with_sources(f, sources)
        lmap.counter.add(len(solutions))
        image = sum(
            -k2 * np.conj(u0) * np.conj(sol.total.ravel())
            for u0, sol in zip(lmap.background, solutions)
        )
        return np.asarray(image).reshape(lmap.grid.shape)
    w = f.solve_adjoint(f.lift(lmap.far_map().conj().T @ values.T.astype(complex)))
    lmap.counter.add(lmap.n_directions)
    back = f.source_map_adjoint(w)
    image = np.sum(k2 * np.conj(lmap.background).T * back, axis=1)
    scale = lmap.circle.weight / lmap.grid.spacing**2
    return (scale * image).reshape(lmap.grid.shape)


def jacobian_operator(lmap: LinearizedMap, s_max: int) -> LinearOp:
    """Real operator ``c ↦ [Re; Im] J(E c)`` on band-``s_max`` sine coefficients."""
    n = lmap.grid.n_per_side
    shape = (lmap.n_directions, lmap.circle.n_receivers)
    weight = lmap.circle.weight

    def apply(c: np.ndarray) -> np.ndarray:
        dq = synthesize(SineCoeffs(s_max, np.asarray(c, dtype=float)), n)
        return stack_complex(apply_J_values(lmap, dq))

    def apply_adjoint(y: np.ndarray) -> np.ndarray:
        image = apply_Jstar(lmap, unstack_complex(y, shape))
        return np.real(adjoint_evaluate(image, s_max).values) / weight

    return LinearOp((2 * shape[0] * shape[1], mode_count(s_max)), apply, apply_adjoint)


def assemble_jacobian(lmap: LinearizedMap, s_max: int) -> np.ndarray:
    """Complex matrix of ``J E``, one column per sine mode, rows ``m * P + p``."""
    n = lmap.grid.n_per_side
    count = mode_count(s_max)
    columns = []
    for j in range(count):
        unit = np.zeros(count)
        unit[j] = 1.0
        columns.append(apply_J_values(lmap, synthesize(SineCoeffs(s_max, unit), n)).ravel())
    return np.column_stack(columns)
