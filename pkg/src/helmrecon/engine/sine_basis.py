"""Band-limited sine series on Ω: evaluation, adjoint and projection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .models import ContrastField, Grid2D

INDEX_ORDER = "shell-lexicographic"


def mode_count(s_max: int) -> int:
    """Number of pairs ``m1, m2 >= 1`` with ``m1 + m2 <= s_max``.

    Examples:
        >>> mode_count(2), mode_count(8), mode_count(64)
        (1, 28, 2016)
    """
    if s_max < 2:
        raise ValueError(f"band limit {s_max} admits no sine modes")
    return s_max * (s_max - 1) // 2


def band_limit(k: float) -> int:
    """Maximum total mode order ``⌊2k⌋`` recoverable at wavenumber ``k``."""
    return math.floor(2 * k + 1e-12)


@lru_cache(maxsize=64)
def _pairs(s_max: int) -> tuple[np.ndarray, np.ndarray]:
    m1 = [a for s in range(2, s_max + 1) for a in range(1, s)]
    m2 = [s - a for s in range(2, s_max + 1) for a in range(1, s)]
    first = np.array(m1, dtype=int)
    second = np.array(m2, dtype=int)
    first.flags.writeable = False
    second.flags.writeable = False
    return first, second


def index_pairs(s_max: int) -> list[tuple[int, int]]:
    """Admissible ``(m1, m2)`` ordered by shell ``m1 + m2`` then ``m1``."""
    mode_count(s_max)
    m1, m2 = _pairs(s_max)
    return list(zip(m1.tolist(), m2.tolist()))


@dataclass(frozen=True, eq=False)
class SineCoeffs:
    """Coefficients of ``Σ c sin(m1(x1 + π/2)) sin(m2(x2 + π/2))``."""

    s_max: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values)
        if values.dtype.kind not in "fc":
            values = values.astype(float)
        expected = mode_count(self.s_max)
        if values.shape != (expected,):
            raise ValueError(
                f"band {self.s_max} needs {expected} coefficients, got shape {values.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, s_max: int) -> SineCoeffs:
        return cls(s_max, np.zeros(mode_count(s_max)))

    def __len__(self) -> int:
        return self.values.shape[0]

    def extend(self, s_max: int) -> SineCoeffs:
        """Same series in a wider band; new modes start at zero."""
        if s_max < self.s_max:
            raise ValueError(f"cannot shrink band {self.s_max} to {s_max}")
        values = np.zeros(mode_count(s_max), dtype=self.values.dtype)
        values[: len(self)] = self.values
        return SineCoeffs(s_max, values)

    def matrix(self) -> np.ndarray:
        """Coefficients laid out as ``C[m1 - 1, m2 - 1]``."""
        m1, m2 = _pairs(self.s_max)
        out = np.zeros((self.s_max - 1, self.s_max - 1), dtype=self.values.dtype)
        out[m1 - 1, m2 - 1] = self.values
        return out


def sine_matrix(n_per_side: int, s_max: int) -> np.ndarray:
    """``Φ[i, m - 1] = sin(m i h)`` with rows of boundary nodes exactly zero."""
    i = np.arange(n_per_side)[:, None]
    m = np.arange(1, s_max)[None, :]
    phi = np.sin(m * i * (math.pi / (n_per_side - 1)))
    phi[0, :] = 0.0
    phi[-1, :] = 0.0
    return phi


def synthesize(coeffs: SineCoeffs, n_per_side: int) -> np.ndarray:
    """Grid values ``Φ C Φᵀ`` of the series; complex coefficients allowed."""
    phi = sine_matrix(n_per_side, coeffs.s_max)
    return phi @ coeffs.matrix() @ phi.T


def evaluate(coeffs: SineCoeffs, grid: Grid2D) -> ContrastField:
    """The series sampled on ``grid``; vanishes on ∂Ω."""
    if np.iscomplexobj(coeffs.values):
        raise ValueError("contrast coefficients must be real")
    return ContrastField(grid, synthesize(coeffs, grid.n_per_side))


def adjoint_evaluate(values: np.ndarray | ContrastField, s_max: int) -> SineCoeffs:
    """Adjoint of :func:`evaluate` for the grid pairing ``h² Σ f g``.

    The grid size is read from ``values``; the sums over interior nodes are a
    type-I sine transform whenever the band fits on the grid.
    """
    if isinstance(values, ContrastField):
        values = values.values
    g = np.asarray(values)
    n = g.shape[0]
    if g.shape != (n, n) or n < 2:
        raise ValueError(f"expected square grid values, got shape {g.shape}")
    m1, m2 = _pairs(s_max)
    h2 = (math.pi / (n - 1)) ** 2
    if n >= 3 and s_max - 1 <= n - 2:
        transform = scipy.fft.dstn(g[1:-1, 1:-1], type=1) / 4.0
        out = transform[m1 - 1, m2 - 1]
    else:
        phi = sine_matrix(n, s_max)
        out = (phi.T @ g @ phi)[m1 - 1, m2 - 1]
    return SineCoeffs(s_max, h2 * out)


def project(q: ContrastField, s_max: int) -> SineCoeffs:
    """Orthogonal projection of ``q`` onto the band, grid inner product.

    On ``n >= 2 s_max`` nodes per side the modes are mutually orthogonal with
    squared norm ``(π/2)²``, so the projection is a scaled sine transform.
    """
    n = q.grid.n_per_side
    if n < 2 * s_max:
        raise ValueError(
            f"grid with {n} nodes per side undersamples band {s_max}; need {2 * s_max}"
        )
    raw = adjoint_evaluate(q.values, s_max)
    return SineCoeffs(s_max, raw.values * (4.0 / math.pi**2))
