"""Interior finite differences coupled to the radiating exterior through layer potentials.

The unknown is the radiating part ``v`` of the field at every grid node.
Interior nodes carry a compact fourth-order (Mehrstellen) discretization of
``Δv + k²(1 - q)v = g``. The outward flux at every side sample is an extra
unknown tied to the grid by a sixth-order one-sided stencil. Every boundary
node carries the exterior Green identity ``D v - c v - S ∂ν v = 0`` (``c = 1/2``
on edges, ``3/4`` at corners) plus ``i`` times the same representation taken
at a point pulled inward by ``INTERIOR_OFFSET``; the representation of
exterior data vanishes inside, and the added term removes the spurious
solutions the bare identity admits at interior Dirichlet eigenvalues.
Boundary traces and fluxes are sampled per side and interpolated onto
Gauss-Legendre panels.
"""
from __future__ import annotations

import enum
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .layer_potentials import (
    BoundaryDiscretization,
    build_boundary,
    greens,
    layer_matrices,
    side_interpolation,
)
from .measurement import incident_field
from .models import (
    HALF_WIDTH,
    ContrastField,
    Domain,
    Grid2D,
    MeasurementCircle,
    NumericalError,
    PlaneWaveSource,
    ResonanceError,
    SourceKind,
)
from .utils import stopwatch

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
RESONANCE_SHIFT = 1e-6
PANEL_ORDER = 16
# outward one-sided derivative, inward layers 0..6
FLUX_STENCIL = np.array(
    [49.0 / 20.0, -6.0, 7.5, -20.0 / 3.0, 3.75, -1.2, 1.0 / 6.0]
)
MIN_NODES = FLUX_STENCIL.size + 1
INTERIOR_OFFSET = 0.5
S_COND_LIMIT = 1e10


class Side(enum.IntEnum):
    BOTTOM = 0
    RIGHT = 1
    TOP = 2
    LEFT = 3


def side_index(
    n_per_side: int, side: int, j: np.ndarray, layer: np.ndarray | int = 0
) -> np.ndarray:
    """Flat grid index of sample ``j`` of ``side``, ``layer`` nodes inward."""
    n = n_per_side
    j = np.asarray(j)
    if side == Side.BOTTOM:
        i1, i2 = j, layer
    elif side == Side.RIGHT:
        i1, i2 = n - 1 - np.asarray(layer), j
    elif side == Side.TOP:
        i1, i2 = n - 1 - j, n - 1 - np.asarray(layer)
    else:
        i1, i2 = layer, n - 1 - j
    return np.asarray(i1) * n + np.asarray(i2)


@dataclass(frozen=True, eq=False)
class _Stencils:
    """Grid-size dependent sparse operators."""

    lap4: scipy.sparse.csr_matrix
    avg: scipy.sparse.csr_matrix
    trace: scipy.sparse.csr_matrix
    flux: scipy.sparse.csr_matrix
    boundary_nodes: np.ndarray
    boundary_jump: np.ndarray
    interior_nodes: np.ndarray


@lru_cache(maxsize=16)
def _stencils(n_per_side: int) -> _Stencils:
    n = n_per_side
    h = math.pi / (n - 1)
    inner = n - 2
    second = scipy.sparse.diags(
        [np.ones(inner), -2 * np.ones(inner), np.ones(inner)], [0, 1, 2], shape=(inner, n)
    ) / h**2
    select = scipy.sparse.diags([np.ones(inner)], [1], shape=(inner, n))
    kron = scipy.sparse.kron
    lap4 = kron(second, select) + kron(select, second) + (h**2 / 6) * kron(second, second)
    avg = kron(select, select) + (h**2 / 12) * (kron(second, select) + kron(select, second))

    samples = np.arange(n)
    rows, trace_cols = [], []
    flux_rows, flux_cols, flux_vals = [], [], []
    for side in Side:
        base = side * n
        rows.append(base + samples)
        trace_cols.append(side_index(n, side, samples))
        for layer, coeff in enumerate(FLUX_STENCIL):
            flux_rows.append(base + samples)
            flux_cols.append(side_index(n, side, samples, layer))
            flux_vals.append(np.full(n, coeff / h))
    trace = scipy.sparse.csr_matrix(
        (np.ones(4 * n), (np.concatenate(rows), np.concatenate(trace_cols))), shape=(4 * n, n * n)
    )
    flux = scipy.sparse.csr_matrix(
        (np.concatenate(flux_vals), (np.concatenate(flux_rows), np.concatenate(flux_cols))),
        shape=(4 * n, n * n),
    )
    unique = np.concatenate([side_index(n, side, samples[:-1]) for side in Side])
    jump = np.tile(np.r_[0.75, np.full(n - 2, 0.5)], 4)
    interior = np.array([i1 * n + i2 for i1 in range(1, n - 1) for i2 in range(1, n - 1)])
    return _Stencils(lap4.tocsr(), avg.tocsr(), trace, flux, unique, jump, interior)


def _through(dense: np.ndarray, sparse: scipy.sparse.spmatrix) -> np.ndarray:
    """Dense product ``dense @ sparse``."""
    return np.asarray((sparse.T @ dense.T).T)


def _boundary_targets(grid: Grid2D) -> np.ndarray:
    return grid.nodes[_stencils(grid.n_per_side).boundary_nodes]


def _offset_targets(grid: Grid2D) -> np.ndarray:
    return _boundary_targets(grid) * (1.0 - INTERIOR_OFFSET / HALF_WIDTH)


def _coupling_rows(k: float, grid: Grid2D, bd: BoundaryDiscretization) -> scipy.sparse.csr_matrix:
    """Boundary rows over the unknowns ``(v, w)``, ``w`` the side flux samples."""
    st = _stencils(grid.n_per_side)
    single, double = layer_matrices(bd, _boundary_targets(grid), k)
    single_in, double_in = layer_matrices(bd, _offset_targets(grid), k)
    interp = side_interpolation(bd, grid.n_per_side)
    d_side = scipy.sparse.csr_matrix(_through(double + 1j * double_in, interp))
    s_side = scipy.sparse.csr_matrix(_through(single + 1j * single_in, interp))
    jump = scipy.sparse.csr_matrix(
        (st.boundary_jump, (np.arange(st.boundary_nodes.size), st.boundary_nodes)),
        shape=(st.boundary_nodes.size, grid.size),
    )
    return scipy.sparse.hstack([d_side @ st.trace - jump, -s_side]).tocsr()


@lru_cache(maxsize=8)
def _cached_coupling(
    k: float, n_per_side: int, order: int
) -> tuple[scipy.sparse.csr_matrix, float]:
    grid = Grid2D(n_per_side)
    with stopwatch() as elapsed:
        rows = _coupling_rows(k, grid, build_boundary(k, grid, order))
    return rows, elapsed[0]


@dataclass(frozen=True)
class BoundarySamples:
    """Trace and outward flux of the radiating field, ``(4, n)`` per side."""

    trace: np.ndarray
    flux: np.ndarray


@dataclass(frozen=True)
class DtnSolution:
    field: np.ndarray
    incident: np.ndarray
    boundary: BoundarySamples

    @property
    def total(self) -> np.ndarray:
        return self.field + self.incident


@dataclass(frozen=True)
class ForwardStats:
    n_unknowns: int
    n_bdry: int
    t_interior: float
    t_bdry: float
    t_solve: float = 0.0


@dataclass(frozen=True, eq=False)
class FieldSource:
    """Right-hand side of a DtN solve."""

    kind: SourceKind
    direction: tuple[float, float] | None = None
    values: np.ndarray | None = None
    circle: MeasurementCircle | None = None

    def __post_init__(self) -> None:
        try:
            kind = SourceKind(self.kind)
        except ValueError:
            raise ValueError(f"unsupported source kind: {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        if kind is SourceKind.PLANE_WAVE and self.direction is None:
            raise ValueError("plane-wave source needs a direction")
        if kind is SourceKind.VOLUME_SOURCE and self.values is None:
            raise ValueError("volume source needs grid values")
        if kind is SourceKind.BOUNDARY_DENSITY and (self.values is None or self.circle is None):
            raise ValueError("boundary density needs values and a receiver circle")

    @classmethod
    def plane_wave(cls, direction: Sequence[float]) -> FieldSource:
        return cls(SourceKind.PLANE_WAVE, direction=(float(direction[0]), float(direction[1])))

    @classmethod
    def volume(cls, values: np.ndarray) -> FieldSource:
        return cls(SourceKind.VOLUME_SOURCE, values=np.asarray(values))

    @classmethod
    def boundary_density(cls, values: np.ndarray, circle: MeasurementCircle) -> FieldSource:
        return cls(SourceKind.BOUNDARY_DENSITY, values=np.asarray(values), circle=circle)


@dataclass(frozen=True, eq=False)
class DtNFactorization:
    """Sparse LU of the coupled interior/boundary system at fixed ``(k, q0)``.

    ``k`` is the requested wavenumber; ``k_eff`` differs from it only when a
    near-resonance forced the shifted retry.
    """

    k: float
    k_eff: float
    grid: Grid2D
    contrast: ContrastField
    boundary: BoundaryDiscretization
    system: scipy.sparse.csc_matrix
    lu: scipy.sparse.linalg.SuperLU
    stats: ForwardStats
    condition: float
    _far_maps: dict = field(default_factory=dict, repr=False)

    @property
    def shift(self) -> float:
        return self.k_eff - self.k

    @property
    def stencils(self) -> _Stencils:
        return _stencils(self.grid.n_per_side)

    @property
    def n_flux(self) -> int:
        return 4 * self.grid.n_per_side

    def source_map(self, g: np.ndarray) -> np.ndarray:
        """System right-hand side for volume data ``g`` (flat or ``(N, m)``)."""
        st = self.stencils
        g = np.asarray(g, dtype=complex)
        interior = st.avg @ g
        pad = np.zeros((self.system.shape[0] - interior.shape[0],) + g.shape[1:], dtype=complex)
        return np.concatenate([interior, pad])

    def source_map_adjoint(self, y: np.ndarray) -> np.ndarray:
        """Conjugate transpose of :meth:`source_map`."""
        st = self.stencils
        inner = st.interior_nodes.size
        return st.avg.T @ np.asarray(y)[:inner]

    def field_values(self, x: np.ndarray) -> np.ndarray:
        """Grid part of a system vector (rows of a block)."""
        return np.asarray(x)[: self.grid.size]

    def lift(self, y: np.ndarray) -> np.ndarray:
        """Transpose of :meth:`field_values`: zero-pad grid values to the system size."""
        y = np.asarray(y, dtype=complex)
        pad = np.zeros((self.n_flux,) + y.shape[1:], dtype=complex)
        return np.concatenate([y, pad])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(np.asarray(rhs, dtype=complex))

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(np.asarray(rhs, dtype=complex), trans="H")

    def samples(self, x: np.ndarray) -> BoundarySamples:
        """Side samples of a system vector, or of bare grid values via the flux stencil."""
        st = self.stencils
        flat = np.asarray(x).reshape(-1)
        n, size = self.grid.n_per_side, self.grid.size
        v = flat[:size]
        flux = flat[size : size + self.n_flux] if flat.size > size else st.flux @ v
        return BoundarySamples((st.trace @ v).reshape(4, n), np.asarray(flux).reshape(4, n))

    def representation(self, samples: BoundarySamples, points: np.ndarray) -> np.ndarray:
        """``D v - S ∂ν v`` at arbitrary ``points``; vanishes inside Ω for exterior data."""
        single, double = layer_matrices(self.boundary, np.atleast_2d(points), self.k_eff)
        interp = side_interpolation(self.boundary, self.grid.n_per_side)
        return (
            _through(double, interp) @ samples.trace.ravel()
            - _through(single, interp) @ samples.flux.ravel()
        )

    def far_side_matrices(self, circle: MeasurementCircle) -> tuple[np.ndarray, np.ndarray]:
        """Dense maps from side trace and flux samples to the receivers."""
        key = (circle.radius, circle.n_receivers)
        if key not in self._far_maps:
            single, double = layer_matrices(self.boundary, circle.points, self.k_eff)
            interp = side_interpolation(self.boundary, self.grid.n_per_side)
            self._far_maps[key] = (_through(double, interp), _through(single, interp))
        return self._far_maps[key]

    def far_map(self, circle: MeasurementCircle) -> scipy.sparse.csr_matrix:
        """Receiver values of the representation, as a map on grid values."""
        d_side, s_side = self.far_side_matrices(circle)
        st = self.stencils
        return (
            scipy.sparse.csr_matrix(d_side) @ st.trace - scipy.sparse.csr_matrix(s_side) @ st.flux
        ).tocsr()

    def radiated_power(self, samples: BoundarySamples) -> float:
        """``Im ∮ conj(v) ∂ν v`` over ∂Ω; nonnegative for radiating fields."""
        interp = side_interpolation(self.boundary, self.grid.n_per_side)
        trace = interp @ samples.trace.ravel()
        flux = interp @ samples.flux.ravel()
        return float(np.imag(np.sum(self.boundary.weights * np.conj(trace) * flux)))


def _factor(
    k: float, grid: Grid2D, q0: ContrastField, bdry: BoundaryDiscretization | None, order: int
) -> tuple[scipy.sparse.csc_matrix, scipy.sparse.linalg.SuperLU | None, BoundaryDiscretization,
           float, float]:
    st = _stencils(grid.n_per_side)
    if bdry is None:
        coupling, t_bdry = _cached_coupling(float(k), grid.n_per_side, order)
        bd = build_boundary(k, grid, order)
    else:
        bd = bdry
        with stopwatch() as elapsed:
            coupling = _coupling_rows(k, grid, bd)
        t_bdry = elapsed[0]
    with stopwatch() as elapsed:
        kappa2 = scipy.sparse.diags(k**2 * (1.0 - q0.flat))
        n_flux = 4 * grid.n_per_side
        interior = scipy.sparse.hstack(
            [st.lap4 + st.avg @ kappa2, scipy.sparse.csr_matrix((st.interior_nodes.size, n_flux))]
        )
        flux = scipy.sparse.hstack([-st.flux, scipy.sparse.identity(n_flux, format="csr")])
        system = scipy.sparse.vstack([interior, flux, coupling]).tocsc()
        try:
            lu = scipy.sparse.linalg.splu(system)
        except RuntimeError as exc:
            logger.warning("sparse LU failed at k=%g: %s", k, exc)
            lu = None
    return system, lu, bd, elapsed[0], t_bdry


def _condition(system: scipy.sparse.csc_matrix, lu: scipy.sparse.linalg.SuperLU) -> float:
    size = system.shape[0]
    inverse = scipy.sparse.linalg.LinearOperator(
        (size, size),
        matvec=lambda x: lu.solve(np.asarray(x, dtype=complex).reshape(-1)),
        rmatvec=lambda x: lu.solve(np.asarray(x, dtype=complex).reshape(-1), trans="H"),
        dtype=complex,
    )
    estimate = scipy.sparse.linalg.norm(system, 1) * scipy.sparse.linalg.onenormest(inverse)
    return float(estimate) if np.isfinite(estimate) else math.inf


def build_dtn(
    k: float,
    grid: Grid2D,
    q0: ContrastField,
    bdry: BoundaryDiscretization | None = None,
    *,
    order: int = PANEL_ORDER,
    cond_limit: float = COND_LIMIT,
    ppw: float | None = None,
) -> DtNFactorization:
    """Factor the coupled system at ``(k, q0)``.

    A condition estimate above ``cond_limit`` triggers one retry at
    ``k(1 + 1e-6)``; the shift is recorded on the result.

    Raises:
        ValueError: Grid mismatch or a grid with fewer than ``MIN_NODES`` nodes per side.
        ResonanceError: The system stays near-singular after the retry.
    """
    if q0.grid != grid:
        raise ValueError("contrast is sampled on a different grid")
    if grid.n_per_side < MIN_NODES:
        raise ValueError(
            f"DtN solver needs at least {MIN_NODES} nodes per side, got {grid.n_per_side}"
        )
    if ppw is not None and grid.points_per_wavelength(k) < ppw:
        logger.warning(
            "grid n=%d gives %.1f points per wavelength at k=%g (want %g)",
            grid.n_per_side, grid.points_per_wavelength(k), k, ppw,
        )
    for k_try in (k, k * (1.0 + RESONANCE_SHIFT)):
        system, lu, bd, t_interior, t_bdry = _factor(k_try, grid, q0, bdry, order)
        cond = _condition(system, lu) if lu is not None else math.inf
        if cond <= cond_limit:
            if k_try != k:
                logger.warning("near-resonance at k=%g; solving at shifted k=%.9g", k, k_try)
            logger.info(
                "factored DtN system n=%d at k=%g (cond %.2e, %.2fs)",
                grid.n_per_side, k, cond, t_interior,
            )
            stats = ForwardStats(grid.size, bd.n_bdry, t_interior, t_bdry)
            return DtNFactorization(k, k_try, grid, q0, bd, system, lu, stats, cond)
        logger.warning("DtN system at k=%.9g has condition estimate %.2e", k_try, cond)
    raise ResonanceError(f"interior system near-singular at k={k} even after shifting")


def _single_layer_field(
    density: np.ndarray, circle: MeasurementCircle, k: float, points: np.ndarray
) -> np.ndarray:
    """``Σ_p w_r G(x, x_p) f_p`` at ``points`` for densities ``(m, P)``."""
    diff = points[:, None, :] - circle.points[None, :, :]
    kernel = greens(k, np.hypot(diff[..., 0], diff[..., 1]))
    return circle.weight * (kernel @ np.atleast_2d(density).T)


def solve_with_sources(f: DtNFactorization, sources: Sequence[FieldSource]) -> list[DtnSolution]:
    """Solve one blocked system for several right-hand sides."""
    nodes = f.grid.nodes
    size = f.grid.size
    g = np.empty((size, len(sources)), dtype=complex)
    incident = np.zeros((size, len(sources)), dtype=complex)
    k2q = f.k_eff**2 * f.contrast.flat
    for col, src in enumerate(sources):
        if src.kind is SourceKind.PLANE_WAVE:
            incident[:, col] = incident_field(PlaneWaveSource(f.k_eff, src.direction), nodes)
            g[:, col] = k2q * incident[:, col]
        elif src.kind is SourceKind.VOLUME_SOURCE:
            values = np.asarray(src.values, dtype=complex).reshape(-1)
            if values.shape[0] != size:
                raise ValueError(f"volume source has {values.shape[0]} entries, grid has {size}")
            g[:, col] = values
        else:
            density = np.asarray(src.values, dtype=complex).reshape(-1)
            if density.shape[0] != src.circle.n_receivers:
                raise ValueError(
                    f"density has {density.shape[0]} entries, circle has {src.circle.n_receivers}"
                )
            incident[:, col] = _single_layer_field(density, src.circle, f.k_eff, nodes)[:, 0]
            g[:, col] = k2q * incident[:, col]
    with stopwatch() as elapsed:
        x = f.solve(f.source_map(g))
    logger.debug("DtN solve of %d right-hand sides took %.3fs", len(sources), elapsed[0])
    shape = f.grid.shape
    return [
        DtnSolution(
            f.field_values(x[:, m]).reshape(shape),
            incident[:, m].reshape(shape),
            f.samples(x[:, m]),
        )
        for m in range(len(sources))
    ]


def solve_with_source(f: DtNFactorization, source: FieldSource) -> DtnSolution:
    """Radiating solution for a single right-hand side.

    ``PLANE_WAVE`` returns the scattered field, ``VOLUME_SOURCE`` the radiating
    solution of ``Δv + k²(1 - q0)v = g``, and ``BOUNDARY_DENSITY`` the field
    scattered by ``q0`` from the single layer of the density on the receiver
    circle, which is carried as the incident part.
    """
    if not isinstance(source, FieldSource):
        raise ValueError(f"unsupported source {source!r}")
    return solve_with_sources(f, [source])[0]


def far_field_dtn(
    f: DtNFactorization, samples: BoundarySamples, circle: MeasurementCircle
) -> np.ndarray:
    """Green's representation ``D v - S ∂ν v`` of the radiating field at the receivers."""
    if np.any(Domain().contains(circle.points)):
        raise ValueError("receivers must lie strictly outside the domain")
    n = f.grid.n_per_side
    if samples.trace.shape != (4, n) or samples.flux.shape != (4, n):
        raise ValueError(f"boundary samples must have shape (4, {n})")
    d_side, s_side = f.far_side_matrices(circle)
    return d_side @ samples.trace.ravel() - s_side @ samples.flux.ravel()


@dataclass(frozen=True, eq=False)
class DtNOperators:
    """Layer-potential matrices on the panel nodes and the two DtN maps.

    ``t_ext`` maps Dirichlet data at panel nodes to exterior Neumann data;
    ``t_int`` maps values at the unique boundary grid nodes to side flux
    samples of the interior solution.
    """

    single: np.ndarray
    double: np.ndarray
    t_int: np.ndarray
    t_ext: np.ndarray


def dtn_operators(f: DtNFactorization, *, s_cond_limit: float = S_COND_LIMIT) -> DtNOperators:
    """Dense DtN maps for diagnostics; cost grows cubically with the grid side.

    ``t_ext`` is the least-squares solution of ``S T = D - I/2``.

    Raises:
        NumericalError: ``S`` is near-singular, as at an interior Dirichlet
            eigenvalue of the square.
    """
    bd = f.boundary
    single, double = layer_matrices(bd, bd.nodes, f.k_eff)
    s_cond = float(np.linalg.cond(single))
    if not s_cond <= s_cond_limit:
        raise NumericalError(
            f"single-layer matrix is near-singular at k={f.k_eff:g} (cond {s_cond:.2e}); "
            "exterior DtN map is not determined"
        )
    t_ext = np.linalg.lstsq(single, double - 0.5 * np.eye(bd.n_bdry), rcond=None)[0]

    st = f.stencils
    inner = st.interior_nodes
    kappa2 = scipy.sparse.diags(f.k_eff**2 * (1.0 - f.contrast.flat))
    interior_rows = (st.lap4 + st.avg @ kappa2).tocsc()
    a_ii = interior_rows[:, inner].astype(complex).tocsc()
    a_ib = interior_rows[:, st.boundary_nodes].toarray()
    flux = st.flux.tocsc()
    sol = scipy.sparse.linalg.splu(a_ii).solve(-a_ib.astype(complex))
    t_int = flux[:, st.boundary_nodes].toarray() + flux[:, inner] @ sol
    return DtNOperators(single, double, np.asarray(t_int), t_ext)
