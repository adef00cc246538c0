"""Incident fields, measurement noise and the frequency schedule."""
from __future__ import annotations

import logging
import math

import numpy as np

from .models import FarFieldSlice, FrequencyStep, NoiseSpec, PlaneWaveSource

logger = logging.getLogger(__name__)


def incident_field(src: PlaneWaveSource, points: np.ndarray) -> np.ndarray:
    """Evaluate ``exp(i k x·d)`` at ``points`` (shape ``(..., 2)``)."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != 2:
        raise ValueError(f"points must have a trailing dimension of 2, got {pts.shape}")
    return np.exp(1j * src.k * (pts @ np.asarray(src.direction)))


def incidence_directions(count: int) -> np.ndarray:
    """Unit vectors at angles ``2πm/M``, ``m = 0..M-1``."""
    if count < 1:
        raise ValueError(f"need at least one incidence direction, got {count}")
    angles = 2 * np.pi * np.arange(count) / count
    return np.column_stack([np.cos(angles), np.sin(angles)])


def apply_noise(slice_: FarFieldSlice, spec: NoiseSpec) -> FarFieldSlice:
    """Add complex Gaussian noise with relative size ``delta`` to every row.

    Each incidence row ``u`` becomes ``u + delta * |u| / |e| * e`` with
    ``e = e1 + i e2`` drawn from a generator seeded by ``spec.seed`` (all
    ``e1`` entries first), so every row moves by exactly ``delta`` relative.
    """
    if spec.delta == 0:
        return slice_
    rng = np.random.default_rng(spec.seed)
    shape = slice_.values.shape
    eps = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    row_norm = np.linalg.norm(slice_.values, axis=1)
    eps_norm = np.linalg.norm(eps, axis=1)
    scale = spec.delta * row_norm / eps_norm
    return slice_.with_values(slice_.values + scale[:, None] * eps)


def noise_seeds(seed: int, count: int) -> list[int]:
    """Independent per-slice seeds spawned from one root seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]


def schedule(
    k_min: float, k_max: float, dk: float, receiver_factor: float = 4.0
) -> list[FrequencyStep]:
    """Frequencies ``k_j = k_min + j dk`` with ``M_j = ⌊2k_j⌋`` and ``P_j = ⌊c k_j⌋``.

    Args:
        k_min: Lowest wavenumber, at least 1.
        k_max: Highest wavenumber included (inclusive up to rounding).
        dk: Positive frequency increment.
        receiver_factor: The factor ``c`` in the receiver count.

    Returns:
        One :class:`FrequencyStep` per frequency, ascending.

    Examples:
        >>> [s.k for s in schedule(1.0, 2.0, 0.25)]
        [1.0, 1.25, 1.5, 1.75, 2.0]
        >>> schedule(16.0, 16.0, 1.0)[0].n_directions
        32
    """
    if k_min < 1:
        raise ValueError(f"k_min must be at least 1, got {k_min}")
    if dk <= 0:
        raise ValueError(f"dk must be positive, got {dk}")
    if receiver_factor <= 0:
        raise ValueError(f"receiver factor must be positive, got {receiver_factor}")
    steps: list[FrequencyStep] = []
    j = 0
    while True:
        k = round(k_min + j * dk, 12)
        if k > k_max + 1e-12:
            break
        steps.append(
            FrequencyStep(
                k=k,
                n_directions=math.floor(2 * k + 1e-12),
                n_receivers=math.floor(receiver_factor * k + 1e-12),
            )
        )
        j += 1
    if not steps:
        raise ValueError(f"empty frequency schedule for k_min={k_min}, k_max={k_max}")
    logger.debug("schedule has %d frequencies from %g to %g", len(steps), steps[0].k, steps[-1].k)
    return steps
