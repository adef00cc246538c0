"""Tests for incident fields, noise and the frequency schedule."""

import numpy as np
import pytest

from helmrecon.engine.measurement import (
    apply_noise,
    incidence_directions,
    incident_field,
    noise_seeds,
    schedule,
)
from helmrecon.engine.models import FarFieldSlice, MeasurementCircle, NoiseSpec, PlaneWaveSource


def test_incident_field_is_a_unit_plane_wave() -> None:
    src = PlaneWaveSource(3.0, (1.0, 0.0))
    points = np.array([[0.0, 0.0], [np.pi / 3, 5.0]])
    values = incident_field(src, points)
    assert values[0] == pytest.approx(1.0)
    assert values[1] == pytest.approx(np.exp(1j * np.pi))
    with pytest.raises(ValueError, match="trailing dimension"):
        incident_field(src, np.zeros((2, 3)))


def test_incidence_directions_are_equispaced() -> None:
    d = incidence_directions(4)
    assert np.allclose(d, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)
    with pytest.raises(ValueError):
        incidence_directions(0)


def _slice(rng: np.random.Generator) -> FarFieldSlice:
    circle = MeasurementCircle(20.0, 12)
    values = rng.standard_normal((3, 12)) + 1j * rng.standard_normal((3, 12))
    return FarFieldSlice(2.0, incidence_directions(3), circle, values)


def test_noise_has_exact_relative_size_per_row(rng: np.random.Generator) -> None:
    clean = _slice(rng)
    noisy = apply_noise(clean, NoiseSpec(0.05, seed=7))
    rel = np.linalg.norm(noisy.values - clean.values, axis=1) / np.linalg.norm(
        clean.values, axis=1
    )
    assert np.allclose(rel, 0.05)


def test_noise_is_reproducible_and_zero_level_is_identity(rng: np.random.Generator) -> None:
    clean = _slice(rng)
    first = apply_noise(clean, NoiseSpec(0.1, seed=3))
    second = apply_noise(clean, NoiseSpec(0.1, seed=3))
    other = apply_noise(clean, NoiseSpec(0.1, seed=4))
    assert np.array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)
    assert apply_noise(clean, NoiseSpec()) is clean


def test_noise_seeds_are_deterministic_and_distinct() -> None:
    seeds = noise_seeds(11, 5)
    assert seeds == noise_seeds(11, 5)
    assert len(set(seeds)) == 5


def test_schedule_counts() -> None:
    steps = schedule(1.0, 2.0, 0.25)
    assert [s.k for s in steps] == [1.0, 1.25, 1.5, 1.75, 2.0]
    assert [s.n_directions for s in steps] == [2, 2, 3, 3, 4]
    assert [s.n_receivers for s in steps] == [4, 5, 6, 7, 8]
    assert schedule(1.0, 14.25, 0.25)[-1].k == 14.25
    assert len(schedule(1.0, 14.25, 0.25)) == 54


@pytest.mark.parametrize(
    ("k_min", "k_max", "dk", "message"),
    [(0.5, 2.0, 0.25, "k_min"), (1.0, 2.0, 0.0, "dk"), (2.0, 1.0, 0.25, "empty")],
)
def test_schedule_rejects_bad_ranges(k_min: float, k_max: float, dk: float, message: str) -> None:
    with pytest.raises(ValueError, match=message):
        schedule(k_min, k_max, dk)
