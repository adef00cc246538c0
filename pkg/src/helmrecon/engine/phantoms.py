"""Ground-truth contrasts and a radial far-field reference solution."""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
import scipy.integrate
import scipy.special

from .models import ContrastField, Grid2D, MeasurementCircle, NumericalError, PhantomKind

logger = logging.getLogger(__name__)

_DEFAULTS: dict[PhantomKind, dict[str, float]] = {
    PhantomKind.GAUSSIAN1: {"amplitude": 1.5, "width": 50.0},
    PhantomKind.HERMITE_SUM: {"sigma": 0.5},
    PhantomKind.SYNTHETIC_HEAD: {"scale": 1.0},
    PhantomKind.SYNTHETIC_THORAX: {"scale": 1.0},
    PhantomKind.RADIAL: {"amplitude": 0.5, "radius": 1.2},
}

# (center x1, center x2, semi-axis a, semi-axis b, rotation, amplitude)
# Contrast of the head ranges over about [-0.15, 0.35].
HEAD_BUMPS: tuple[tuple[float, ...], ...] = (
    (0.0, 0.0, 1.40, 1.15, 0.0, 0.25),
    (0.0, 0.0, 1.25, 1.00, 0.0, -0.15),
    (-0.45, 0.70, 0.22, 0.17, 0.0, -0.12),
    (0.45, 0.70, 0.22, 0.17, 0.0, -0.12),
    (0.0, 0.95, 0.12, 0.16, 0.0, -0.08),
    (-0.16, -0.05, 0.11, 0.36, 0.2, 0.06),
    (0.16, -0.05, 0.11, 0.36, -0.2, 0.06),
    (0.0, -0.55, 0.30, 0.22, 0.0, 0.04),
)

# Contrast of the thorax ranges over about [-0.12, 0.45].
THORAX_BUMPS: tuple[tuple[float, ...], ...] = (
    (0.0, 0.0, 1.45, 1.05, 0.0, 0.15),
    (-0.58, 0.08, 0.40, 0.66, 0.15, -0.27),
    (0.58, 0.08, 0.40, 0.66, -0.15, -0.27),
    (0.18, -0.15, 0.32, 0.26, 0.5, 0.10),
    (0.0, -0.78, 0.13, 0.13, 0.0, 0.30),
    (0.0, 0.55, 0.08, 0.20, 0.0, 0.05),
)


@dataclass(frozen=True)
class PhantomSpec:
    """Which ground-truth contrast to build and with what parameters.

    ``strict_index`` controls whether ``1 - q <= 0`` anywhere is an error.
    ``None`` means strict for every kind except ``gaussian1``, whose core is
    above one for the published amplitude and is only warned about.
    """

    kind: PhantomKind = PhantomKind.GAUSSIAN1
    params: Mapping[str, float] = field(default_factory=dict)
    strict_index: bool | None = None

    def __post_init__(self) -> None:
        kind = PhantomKind(self.kind)
        object.__setattr__(self, "kind", kind)
        unknown = set(self.params) - set(_DEFAULTS[kind])
        if unknown:
            raise ValueError(f"unknown parameters for phantom {kind.value}: {sorted(unknown)}")
        object.__setattr__(self, "params", {**_DEFAULTS[kind], **dict(self.params)})

    @property
    def strictly_supported(self) -> bool:
        """Whether the contrast and all its derivatives vanish on ∂Ω."""
        return self.kind in {
            PhantomKind.SYNTHETIC_HEAD,
            PhantomKind.SYNTHETIC_THORAX,
            PhantomKind.RADIAL,
        }

    def to_json(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"kind": self.kind.value, "params": dict(self.params)}
        if self.strict_index is not None:
            payload["strict_index"] = self.strict_index
        return payload

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> PhantomSpec:
        unknown = set(payload) - {"kind", "params", "strict_index"}
        if unknown:
            raise ValueError(f"unknown phantom keys: {sorted(unknown)}")
        return cls(
            kind=PhantomKind(payload.get("kind", PhantomKind.GAUSSIAN1.value)),
            params=dict(payload.get("params", {})),
            strict_index=payload.get("strict_index"),
        )


def bump(rho: np.ndarray) -> np.ndarray:
    """``exp(1 - 1/(1 - ρ²))`` for ``ρ < 1`` and zero beyond; equals 1 at 0."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - rho[inside] ** 2))
    return out


def _ellipses(x: np.ndarray, y: np.ndarray, bumps, scale: float) -> np.ndarray:
    total = np.zeros_like(x)
    for cx, cy, a, b, angle, amp in bumps:
        c, s = math.cos(angle), math.sin(angle)
        u = (x - cx) * c + (y - cy) * s
        v = -(x - cx) * s + (y - cy) * c
        total += amp * bump(np.sqrt((u / a) ** 2 + (v / b) ** 2))
    return scale * total


def phantom_function(spec: PhantomSpec) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Vectorized closed form ``q(x1, x2)`` of ``spec``."""
    p = spec.params
    if spec.kind is PhantomKind.GAUSSIAN1:
        return lambda x, y: p["amplitude"] * np.exp(-(x**2 + y**2) / p["width"])
    if spec.kind is PhantomKind.HERMITE_SUM:
        sigma = p["sigma"]

        def hermite(x: np.ndarray, y: np.ndarray) -> np.ndarray:
            xs, ys = x / sigma, y / sigma
            return (
                0.15 * (1 - xs) ** 2 * np.exp(-(xs**2 + (ys + 1) ** 2))
                - np.exp(-(ys**2 + (xs + 1) ** 2)) / 60.0
                - sigma * (0.4 * x - xs**3 - ys**5) * np.exp(-(x**2 + y**2) / sigma**2)
            )

        return hermite
    if spec.kind is PhantomKind.SYNTHETIC_HEAD:
        return lambda x, y: _ellipses(x, y, HEAD_BUMPS, p["scale"])
    if spec.kind is PhantomKind.SYNTHETIC_THORAX:
        return lambda x, y: _ellipses(x, y, THORAX_BUMPS, p["scale"])
    profile = radial_profile(spec)
    return lambda x, y: profile(np.hypot(x, y))


def radial_profile(spec: PhantomSpec) -> Callable[[np.ndarray], np.ndarray]:
    """``q(r)`` of a radial phantom: ``A·bump(r/a)``, supported in ``r < a``."""
    if spec.kind is not PhantomKind.RADIAL:
        raise ValueError(
            f"phantom {spec.kind.value} is not radially symmetric with compact support"
        )
    amplitude, radius = spec.params["amplitude"], spec.params["radius"]
    if not 0 < radius < math.pi / 2:
        raise ValueError(f"radial support {radius} must lie inside the domain")
    return lambda r: amplitude * bump(np.asarray(r, dtype=float) / radius)


def sample_phantom(spec: PhantomSpec, grid: Grid2D) -> ContrastField:
    """Evaluate the phantom at the nodes of ``grid``."""
    x1, x2 = np.meshgrid(grid.axis, grid.axis, indexing="ij")
    field_ = ContrastField(grid, phantom_function(spec)(x1, x2))
    strict = spec.strict_index
    if strict is None:
        strict = spec.kind is not PhantomKind.GAUSSIAN1
    if not field_.index_positive():
        message = (
            f"phantom {spec.kind.value} has 1 - q <= 0 "
            f"(max q = {float(field_.values.max()):.4g})"
        )
        if strict:
            raise ValueError(message)
        logger.warning("%s; the medium is evanescent there", message)
    return field_


def _radial_solution_at_edge(
    amplitude: float, radius: float, k: float, order: int
) -> tuple[float, float]:
    """Value and derivative at ``r = radius`` of the regular radial solution.

    Integration starts at ``r0`` from the two-term series ``r^n (1 - c r²/(4(n+1)))``
    normalized by ``r0^n``; ``r0`` grows with ``n`` to keep the solution in range.
    """
    c = k**2 * (1.0 - amplitude)
    r0 = radius * 10.0 ** (-min(3.0, 180.0 / order)) if order else radius * 1e-3
    y0 = [
        1.0 - c * r0**2 / (4 * (order + 1)),
        order / r0 - c * (order + 2) * r0 / (4 * (order + 1)),
    ]

    def rhs(r: float, y: np.ndarray) -> list[float]:
        rho2 = (r / radius) ** 2
        q = amplitude * math.exp(1.0 - 1.0 / (1.0 - rho2)) if rho2 < 1.0 else 0.0
        return [y[1], -y[1] / r - (k**2 * (1.0 - q) - order**2 / r**2) * y[0]]

    sol = scipy.integrate.solve_ivp(
        rhs, (r0, radius), y0, method="DOP853", rtol=1e-12, atol=1e-300
    )
    if not sol.success:
        raise NumericalError(f"radial integration failed for mode {order}: {sol.message}")
    return float(sol.y[0, -1]), float(sol.y[1, -1])


@lru_cache(maxsize=32)
def _mode_coefficients(amplitude: float, radius: float, k: float) -> np.ndarray:
    """Outgoing coefficients ``b_n``, ``n >= 0``, of a radial bump contrast."""
    if amplitude == 0:
        return np.zeros(1, dtype=complex)
    ka = k * radius
    max_order = math.ceil(ka) + 60
    coeffs: list[complex] = []
    largest = 0.0
    quiet = 0
    for order in range(max_order + 1):
        psi, dpsi = _radial_solution_at_edge(amplitude, radius, k, order)
        jn = scipy.special.jv(order, ka)
        djn = scipy.special.jvp(order, ka)
        hn = scipy.special.hankel1(order, ka)
        dhn = scipy.special.h1vp(order, ka)
        coeff = -(1j**order) * (k * djn * psi - dpsi * jn) / (k * dhn * psi - dpsi * hn)
        coeffs.append(complex(coeff))
        largest = max(largest, abs(coeff))
        if order > ka and abs(coeff) <= 1e-15 * largest:
            quiet += 1
            if quiet >= 2:
                logger.debug("radial series converged with %d modes", order + 1)
                out = np.array(coeffs)
                out.flags.writeable = False
                return out
        else:
            quiet = 0
    raise NumericalError(f"radial series did not converge within {max_order + 1} modes")


def radial_farfield_oracle(
    spec: PhantomSpec,
    k: float,
    direction: tuple[float, float],
    circle: MeasurementCircle,
) -> np.ndarray:
    """Scattered field at the receivers for a radial contrast, by separation of variables.

    Each angular mode ``n`` solves the radial equation inside the support and
    is matched to ``i^n J_n + b_n H_n`` outside; the series is summed until the
    coefficients fall below ``1e-15`` of the largest one.
    """
    radial_profile(spec)
    coeffs = _mode_coefficients(
        float(spec.params["amplitude"]), float(spec.params["radius"]), float(k)
    )
    orders = np.arange(coeffs.shape[0])
    weights = np.where(orders == 0, 1.0, 2.0)
    phi_d = math.atan2(direction[1], direction[0])
    rel = circle.angles - phi_d
    radial = scipy.special.hankel1(orders, k * circle.radius)
    terms = (weights * coeffs * radial)[:, None] * np.cos(orders[:, None] * rel[None, :])
    return terms.sum(axis=0)
