"""Data models shared across the helmrecon engine."""
from __future__ import annotations

import dataclasses
import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

HALF_WIDTH = math.pi / 2
FORMAT_VERSION = 1


class NumericalError(RuntimeError):
    """A solver could not produce a trustworthy answer."""


class ResonanceError(NumericalError):
    """The interior system stayed near-singular after the frequency shift."""


class InitMode(str, enum.Enum):
    PROJECTION = "projection"
    BORN = "born"


class SourceKind(str, enum.Enum):
    PLANE_WAVE = "plane_wave"
    VOLUME_SOURCE = "volume_source"
    BOUNDARY_DENSITY = "boundary_density"


class PhantomKind(str, enum.Enum):
    GAUSSIAN1 = "gaussian1"
    HERMITE_SUM = "hermite_sum"
    SYNTHETIC_HEAD = "synthetic_head"
    SYNTHETIC_THORAX = "synthetic_thorax"
    RADIAL = "radial"


class GridRefinement(str, enum.Enum):
    POW2 = "pow2"
    EXACT = "exact"


@dataclass(frozen=True)
class Domain:
    """The square Ω = [−π/2, π/2]² every contrast lives in."""

    half_width: float = HALF_WIDTH
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not math.isclose(self.half_width, HALF_WIDTH, rel_tol=0.0, abs_tol=1e-15):
            raise ValueError(f"domain half width is fixed at pi/2, got {self.half_width}")
        if tuple(self.center) != (0.0, 0.0):
            raise ValueError(f"domain must be centered at the origin, got {self.center}")

    @property
    def bounds(self) -> tuple[float, float]:
        return (-self.half_width, self.half_width)

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.all(np.abs(pts) <= self.half_width + tol, axis=-1)


@dataclass(frozen=True)
class Grid2D:
    """Vertex-centered uniform grid on Ω, boundary nodes included.

    Values on the grid are stored as ``(n, n)`` arrays indexed ``[i1, i2]``
    with ``x1 = axis[i1]`` and ``x2 = axis[i2]``; flattening is C order, so
    node ``(i1, i2)`` has flat index ``i1 * n + i2``.
    """

    n_per_side: int
    domain: Domain = field(default_factory=Domain)

    def __post_init__(self) -> None:
        if int(self.n_per_side) != self.n_per_side or self.n_per_side < 2:
            raise ValueError(f"grid needs at least 2 nodes per side, got {self.n_per_side}")

    @property
    def spacing(self) -> float:
        return 2 * self.domain.half_width / (self.n_per_side - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_per_side, self.n_per_side)

    @property
    def size(self) -> int:
        return self.n_per_side * self.n_per_side

    @cached_property
    def axis(self) -> np.ndarray:
        lo, _ = self.domain.bounds
        return lo + self.spacing * np.arange(self.n_per_side)

    @cached_property
    def nodes(self) -> np.ndarray:
        x1, x2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask

    def points_per_wavelength(self, k: float) -> float:
        return 2 * math.pi / (k * self.spacing)

    @classmethod
    def for_wavenumber(
        cls,
        k: float,
        ppw: float,
        *,
        min_intervals: int = 0,
        refinement: GridRefinement | str = GridRefinement.POW2,
    ) -> Grid2D:
        """Smallest grid resolving ``k`` with ``ppw`` points per wavelength.

        Ω is ``k/2`` wavelengths across, so ``n - 1 >= ppw * k / 2``.
        """
        if k <= 0 or ppw <= 0:
            raise ValueError(f"wavenumber and ppw must be positive, got k={k}, ppw={ppw}")
        intervals = max(math.ceil(ppw * k / 2 - 1e-9), int(min_intervals), 8)
        if GridRefinement(refinement) is GridRefinement.POW2:
            intervals = 1 << (intervals - 1).bit_length()
        return cls(intervals + 1)

    def restrict(self, fine_values: np.ndarray) -> np.ndarray:
        """Sample values of a finer nested grid at this grid's nodes."""
        values = np.asarray(fine_values)
        n_fine = values.shape[0]
        if values.shape != (n_fine, n_fine) or (n_fine - 1) % (self.n_per_side - 1):
            raise ValueError(
                f"grid with {n_fine} nodes per side does not nest {self.n_per_side}"
            )
        step = (n_fine - 1) // (self.n_per_side - 1)
        return values[::step, ::step]


@dataclass(frozen=True, eq=False)
class ContrastField:
    """Real contrast ``q`` sampled on a grid."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self) -> None:
        raw = np.asarray(self.values)
        if np.iscomplexobj(raw):
            if np.any(raw.imag != 0):
                raise ValueError("contrast values must be real")
            raw = raw.real
        values = np.array(raw, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("contrast values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid2D) -> ContrastField:
        return cls(grid, np.zeros(grid.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def index_positive(self) -> bool:
        """Whether the index of refraction ``1 - q`` is positive at every node."""
        return bool(np.all(1.0 - self.values > 0))

    def norm(self) -> float:
        """Grid L² norm with uniform weight ``h²``."""
        return float(self.grid.spacing * np.linalg.norm(self.values))

    def __add__(self, other: ContrastField) -> ContrastField:
        if other.grid != self.grid:
            raise ValueError("contrasts live on different grids")
        return ContrastField(self.grid, self.values + other.values)


@dataclass(frozen=True)
class PlaneWaveSource:
    k: float
    direction: tuple[float, float]

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise ValueError(f"wavenumber must be positive, got {self.k}")
        d = tuple(float(v) for v in self.direction)
        if len(d) != 2 or abs(math.hypot(*d) - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector, got {self.direction}")
        object.__setattr__(self, "direction", d)

    @classmethod
    def from_angle(cls, k: float, angle: float) -> PlaneWaveSource:
        return cls(k, (math.cos(angle), math.sin(angle)))


@dataclass(frozen=True)
class MeasurementCircle:
    """Receivers at ``θ_p = 2πp/P`` on a circle of radius ``R`` enclosing Ω."""

    radius: float
    n_receivers: int

    def __post_init__(self) -> None:
        if not self.radius > math.pi / math.sqrt(2):
            raise ValueError(f"receiver circle radius {self.radius} does not enclose the domain")
        if self.n_receivers < 1:
            raise ValueError(f"need at least one receiver, got {self.n_receivers}")

    @cached_property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_receivers) / self.n_receivers

    @cached_property
    def points(self) -> np.ndarray:
        return self.radius * np.column_stack([np.cos(self.angles), np.sin(self.angles)])

    @property
    def weight(self) -> float:
        """Trapezoidal arc-length weight of each receiver."""
        return 2 * math.pi * self.radius / self.n_receivers


@dataclass(frozen=True)
class FrequencyStep:
    k: float
    n_directions: int
    n_receivers: int


@dataclass(frozen=True, eq=False)
class FarFieldSlice:
    """Scattered field at the receivers for every incidence direction at one ``k``."""

    k: float
    directions: np.ndarray
    circle: MeasurementCircle
    values: np.ndarray

    def __post_init__(self) -> None:
        directions = np.array(self.directions, dtype=float).reshape(-1, 2)
        values = np.array(self.values, dtype=complex)
        expected = (directions.shape[0], self.circle.n_receivers)
        if values.shape != expected:
            raise ValueError(f"far-field values have shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"far-field data at k={self.k} contains non-finite entries")
        if not np.allclose(np.hypot(directions[:, 0], directions[:, 1]), 1.0, atol=1e-12):
            raise ValueError("incidence directions must be unit vectors")
        directions.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "values", values)

    @property
    def n_directions(self) -> int:
        return self.directions.shape[0]

    @property
    def n_receivers(self) -> int:
        return self.circle.n_receivers

    def with_values(self, values: np.ndarray) -> FarFieldSlice:
        return dataclasses.replace(self, values=values)


@dataclass(frozen=True)
class NoiseSpec:
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ValueError(f"noise level must be nonnegative, got {self.delta}")


@dataclass(frozen=True)
class MultiFreqDataset:
    slices: tuple[FarFieldSlice, ...]
    noise_level: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        slices = tuple(self.slices)
        if not slices:
            raise ValueError("dataset has no frequency slices")
        ks = [s.k for s in slices]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError(f"dataset frequencies must be strictly increasing, got {ks}")
        object.__setattr__(self, "slices", slices)

    @property
    def frequencies(self) -> list[float]:
        return [s.k for s in self.slices]

    def steps(self) -> list[FrequencyStep]:
        return [FrequencyStep(s.k, s.n_directions, s.n_receivers) for s in self.slices]

    @classmethod
    def from_slices(
        cls, slices: Sequence[FarFieldSlice], noise: NoiseSpec | None = None
    ) -> MultiFreqDataset:
        noise = noise or NoiseSpec()
        return cls(tuple(slices), noise.delta, noise.seed)
