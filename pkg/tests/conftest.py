"""Test configuration ensuring local packages are importable."""

from __future__ import annotations

import pathlib
import sys

import numpy as np
import pytest

ROOT = pathlib.Path(__file__).resolve().parents[1]
SRC = ROOT / "src"

for path in (SRC, ROOT):
    path_str = str(path)
    if path_str not in sys.path:
        sys.path.insert(0, path_str)

from helmrecon.engine.models import Grid2D, MeasurementCircle, PhantomKind  # noqa: E402
from helmrecon.engine.phantoms import PhantomSpec  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid() -> Grid2D:
    return Grid2D(17)


@pytest.fixture
def circle() -> MeasurementCircle:
    return MeasurementCircle(20.0, 16)


@pytest.fixture
def radial_spec() -> PhantomSpec:
    return PhantomSpec(PhantomKind.RADIAL, {"amplitude": 0.5, "radius": 1.2})
