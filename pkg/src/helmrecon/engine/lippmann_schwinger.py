"""Lippmann-Schwinger volume integral solver used to generate synthetic data."""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.signal
import scipy.sparse
import scipy.sparse.linalg
import scipy.special

from .layer_potentials import greens
from .measurement import incident_field
from .models import (
    ContrastField,
    Domain,
    Grid2D,
    MeasurementCircle,
    NumericalError,
    PlaneWaveSource,
)
from .utils import stopwatch

logger = logging.getLogger(__name__)

DENSE_LIMIT = 20000
GMRES_RTOL = 1e-10
GMRES_RESTART = 60
_CHUNK_ENTRIES = 1 << 22
_GREGORY_ENDS = (3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0)
# widths of the two calibration Gaussians, in grid spacings
_CALIBRATION_WIDTHS = (12.0, 20.0)


def quadrature_weights(n_per_side: int, order: int) -> np.ndarray:
    """Tensor-product weights (including ``h²``) of the trapezoid or Gregory rule."""
    if order not in (2, 4):
        raise ValueError(f"quadrature order must be 2 or 4, got {order}")
    if order == 4 and n_per_side < 6:
        raise ValueError(f"fourth-order weights need at least 6 nodes per side, got {n_per_side}")
    h = math.pi / (n_per_side - 1)
    w = np.ones(n_per_side)
    if order == 2:
        w[0] = w[-1] = 0.5
    else:
        w[:3] = _GREGORY_ENDS
        w[-3:] = _GREGORY_ENDS[::-1]
    return h * h * np.outer(w, w)


def kernel_table(k: float, n_per_side: int) -> np.ndarray:
    """``G(h|a, b|)`` on integer offsets ``|a|, |b| < n``, zero at the origin."""
    h = math.pi / (n_per_side - 1)
    offsets = np.arange(-(n_per_side - 1), n_per_side)
    r = h * np.hypot(offsets[:, None], offsets[None, :])
    table = np.zeros(r.shape, dtype=complex)
    nonzero = r > 0
    table[nonzero] = greens(k, r[nonzero])
    return table


def _gaussian_moment(k: float, width: float) -> complex:
    """``∫ G(|y|) exp(-|y|²/(2 s²)) dy`` over the plane."""
    imag = 2 * math.pi * width**2 * math.exp(-0.5 * (k * width) ** 2) / 4
    real, _ = scipy.integrate.quad(
        lambda r: scipy.special.y0(k * r) * math.exp(-0.5 * (r / width) ** 2) * r,
        0.0,
        12 * width,
        limit=500,
        epsabs=1e-15 * width**2,
        epsrel=1e-13,
    )
    return complex(-2 * math.pi * real / 4, imag)


@lru_cache(maxsize=32)
def correction_weights(k: float, h: float) -> tuple[complex, complex]:
    """Coefficients ``τ0, τ1`` of the local correction ``h²[τ0 v + τ1 Δ_h v]``.

    Chosen so the punctured lattice sum plus the correction integrates two
    radial Gaussians of widths 12h and 20h against ``G`` exactly.
    """
    reach = math.ceil(12 * _CALIBRATION_WIDTHS[-1])
    offsets = np.arange(-reach, reach + 1)
    r = h * np.hypot(offsets[:, None], offsets[None, :])
    nonzero = r > 0
    g = greens(k, r[nonzero])
    system = np.empty((2, 2), dtype=complex)
    rhs = np.empty(2, dtype=complex)
    for row, factor in enumerate(_CALIBRATION_WIDTHS):
        width = factor * h
        lattice = h * h * np.sum(g * np.exp(-0.5 * (r[nonzero] / width) ** 2))
        rhs[row] = (_gaussian_moment(k, width) - lattice) / (h * h)
        system[row] = (1.0, 4.0 * (math.exp(-0.5 * (h / width) ** 2) - 1.0))
    tau0, tau1 = np.linalg.solve(system, rhs)
    logger.debug("correction weights at k=%g h=%.4g: tau0=%s tau1=%s", k, h, tau0, tau1)
    return complex(tau0), complex(tau1)


def _self_fraction(n_per_side: int) -> np.ndarray:
    frac = np.ones((n_per_side, n_per_side))
    frac[0, :] *= 0.5
    frac[-1, :] *= 0.5
    frac[:, 0] *= 0.5
    frac[:, -1] *= 0.5
    return frac


@dataclass(frozen=True, eq=False)
class LSOperator:
    """Discretized volume potential ``v ↦ ∫_Ω G(x - y) v(y) dy`` on a grid."""

    k: float
    grid: Grid2D
    order: int
    weights: np.ndarray
    kernel: np.ndarray
    tau: tuple[complex, complex]

    @classmethod
    def build(cls, k: float, grid: Grid2D, order: int = 4) -> LSOperator:
        n = grid.n_per_side
        return cls(
            k=k,
            grid=grid,
            order=order,
            weights=quadrature_weights(n, order),
            kernel=kernel_table(k, n),
            tau=correction_weights(float(k), grid.spacing),
        )

    def local_correction(self, v: np.ndarray) -> np.ndarray:
        h2 = self.grid.spacing**2
        out = self.tau[0] * _self_fraction(self.grid.n_per_side) * v
        lap = np.zeros_like(out)
        lap[1:-1, 1:-1] = (
            v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4 * v[1:-1, 1:-1]
        )
        return h2 * (out + self.tau[1] * lap)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Volume potential of grid values ``v`` (shape ``(n, n)``)."""
        v = np.asarray(v, dtype=complex).reshape(self.grid.shape)
        conv = scipy.signal.fftconvolve(self.kernel, self.weights * v, mode="valid")
        return conv + self.local_correction(v)

    @cached_property
    def correction_matrix(self) -> scipy.sparse.csr_matrix:
        n = self.grid.n_per_side
        h2 = self.grid.spacing**2
        interior = np.ones(n)
        interior[[0, -1]] = 0.0
        second = scipy.sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n))
        eye = scipy.sparse.identity(n)
        lap = scipy.sparse.kron(second, eye) + scipy.sparse.kron(eye, second)
        mask = scipy.sparse.diags(np.kron(interior, interior))
        diag = scipy.sparse.diags(_self_fraction(n).ravel())
        return (h2 * (self.tau[0] * diag + self.tau[1] * (mask @ lap))).tocsr()

    def matrix_rows(self, start: int, stop: int) -> np.ndarray:
        """Rows ``start:stop`` of the dense volume-potential matrix."""
        n = self.grid.n_per_side
        idx = np.arange(n)
        rows = np.arange(start, stop)
        i1, i2 = np.divmod(rows, n)
        a = i1[:, None] + (n - 1) - idx[None, :]
        b = i2[:, None] + (n - 1) - idx[None, :]
        block = self.kernel[a[:, :, None], b[:, None, :]].reshape(len(rows), n * n)
        block *= self.weights.ravel()[None, :]
        block += self.correction_matrix[start:stop].toarray()
        return block


@dataclass(frozen=True, eq=False)
class LSFactorization:
    """Reusable solver for ``(I + k² V diag(q)) u = rhs`` at fixed ``(k, q)``."""

    operator: LSOperator
    contrast: ContrastField
    method: str
    lu: tuple[np.ndarray, np.ndarray] | None = None
    t_factor: float = 0.0
    workers: int = 1
    _far_cache: dict = field(default_factory=dict, repr=False)

    @property
    def k(self) -> float:
        return self.operator.k

    @property
    def grid(self) -> Grid2D:
        return self.operator.grid

    def apply_system(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=complex).reshape(self.grid.shape)
        return u + self.k**2 * self.operator.apply(self.contrast.values * u)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for one right-hand side (grid-shaped or flat)."""
        b = np.asarray(rhs, dtype=complex)
        shape = b.shape
        b = b.reshape(-1)
        if b.shape[0] != self.grid.size:
            raise ValueError(f"right-hand side has {b.shape[0]} entries, grid has {self.grid.size}")
        if self.method == "identity":
            return b.copy().reshape(shape)
        if self.method == "dense":
            return scipy.linalg.lu_solve(self.lu, b).reshape(shape)
        return self._gmres(b).reshape(shape)

    def solve_many(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for the columns of ``rhs`` (shape ``(N, m)``)."""
        b = np.asarray(rhs, dtype=complex)
        if self.method == "identity":
            return b.copy()
        if self.method == "dense":
            return scipy.linalg.lu_solve(self.lu, b)
        with ThreadPoolExecutor(max_workers=max(1, self.workers)) as pool:
            cols = list(pool.map(self._gmres, b.T))
        return np.column_stack(cols)

    def _gmres(self, b: np.ndarray) -> np.ndarray:
        size = self.grid.size
        op = scipy.sparse.linalg.LinearOperator(
            (size, size), matvec=lambda u: self.apply_system(u).ravel(), dtype=complex
        )
        x, info = scipy.sparse.linalg.gmres(
            op, b, rtol=GMRES_RTOL, atol=0.0, restart=GMRES_RESTART, maxiter=50
        )
        if info != 0:
            raise NumericalError(f"GMRES did not converge at k={self.k} (info={info})")
        return x


def build_ls(
    k: float,
    grid: Grid2D,
    q: ContrastField,
    *,
    order: int = 4,
    dense_limit: int = DENSE_LIMIT,
    ppw: float = 10.0,
    workers: int = 1,
) -> LSFactorization:
    """Factor the Lippmann-Schwinger system at ``(k, q)``.

    Grids up to ``dense_limit`` unknowns get a dense LU; larger ones are
    solved by restarted GMRES with FFT convolution.
    """
    if q.grid != grid:
        raise ValueError("contrast is sampled on a different grid")
    if not k > 0:
        raise ValueError(f"wavenumber must be positive, got {k}")
    resolution = grid.points_per_wavelength(k)
    if resolution < ppw:
        logger.warning(
            "grid n=%d gives %.1f points per wavelength at k=%g (want %g)",
            grid.n_per_side, resolution, k, ppw,
        )
    operator = LSOperator.build(k, grid, order)
    if not np.any(q.values):
        return LSFactorization(operator, q, "identity", workers=workers)
    if grid.size > dense_limit:
        logger.info("LS system with %d unknowns solved iteratively", grid.size)
        return LSFactorization(operator, q, "gmres", workers=workers)

    size = grid.size
    with stopwatch() as elapsed:
        system = np.empty((size, size), dtype=complex)
        scale = k**2 * q.flat
        chunk = max(1, _CHUNK_ENTRIES // size)
        for start in range(0, size, chunk):
            stop = min(start + chunk, size)
            system[start:stop] = operator.matrix_rows(start, stop) * scale[None, :]
            system[start:stop, start:stop] += np.eye(stop - start)
        lu, piv = scipy.linalg.lu_factor(system, overwrite_a=True, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.min() <= 1e-14 * pivots.max():
            raise NumericalError(
                f"Lippmann-Schwinger system is singular at k={k} (transmission anomaly?)"
            )
    logger.info("factored LS system n=%d at k=%g in %.2fs", grid.n_per_side, k, elapsed[0])
    return LSFactorization(operator, q, "dense", (lu, piv), elapsed[0], workers)


def solve_scatter(f: LSFactorization, src: PlaneWaveSource) -> np.ndarray:
    """Scattered field ``u - u_inc`` on the grid, shape ``(n, n)``."""
    if not math.isclose(src.k, f.k, rel_tol=1e-12):
        raise ValueError(f"source wavenumber {src.k} does not match factorization k={f.k}")
    u_inc = incident_field(src, f.grid.nodes)
    u = f.solve(u_inc)
    return (u - u_inc).reshape(f.grid.shape)


def solve_scatter_many(
    f: LSFactorization, sources: Sequence[PlaneWaveSource]
) -> list[np.ndarray]:
    """Scattered fields for several incidences sharing ``f``."""
    for src in sources:
        if not math.isclose(src.k, f.k, rel_tol=1e-12):
            raise ValueError(f"source wavenumber {src.k} does not match factorization k={f.k}")
    u_inc = np.column_stack([incident_field(src, f.grid.nodes) for src in sources])
    u = f.solve_many(u_inc)
    return [(u[:, m] - u_inc[:, m]).reshape(f.grid.shape) for m in range(len(sources))]


def _receiver_matrix(f: LSFactorization, circle: MeasurementCircle) -> np.ndarray:
    key = (circle.radius, circle.n_receivers)
    if key not in f._far_cache:
        diff = circle.points[:, None, :] - f.grid.nodes[None, :, :]
        r = np.hypot(diff[..., 0], diff[..., 1])
        f._far_cache[key] = greens(f.k, r) * f.operator.weights.ravel()[None, :]
    return f._far_cache[key]


def far_field(f: LSFactorization, u_total: np.ndarray, circle: MeasurementCircle) -> np.ndarray:
    """Scattered field at the receivers: ``-k² Σ_y w_y G(x_p, y) q(y) u(y)``."""
    if np.any(Domain().contains(circle.points)):
        raise ValueError("receivers must lie outside the domain")
    u = np.asarray(u_total, dtype=complex).reshape(-1)
    if u.shape[0] != f.grid.size:
        raise ValueError(f"total field has {u.shape[0]} entries, grid has {f.grid.size}")
    return -(f.k**2) * (_receiver_matrix(f, circle) @ (f.contrast.flat * u))


def far_field_data(
    f: LSFactorization, directions: np.ndarray, circle: MeasurementCircle
) -> np.ndarray:
    """``(M, P)`` matrix of far-field values, one row per incidence direction."""
    sources = [PlaneWaveSource(f.k, tuple(d)) for d in np.asarray(directions)]
    scattered = solve_scatter_many(f, sources)
    rows = []
    for src, u_s in zip(sources, scattered):
        total = u_s.ravel() + incident_field(src, f.grid.nodes)
        rows.append(far_field(f, total, circle))
    return np.vstack(rows)
