"""Experiment configuration: JSON documents, presets and validation."""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from .engine.measurement import schedule
from .engine.models import (
    FrequencyStep,
    GridRefinement,
    InitMode,
    MeasurementCircle,
    NoiseSpec,
    PhantomKind,
)
from .engine.newton import NewtonConfig
from .engine.phantoms import PhantomSpec

logger = logging.getLogger(__name__)

# newton keys configured at the top level instead
_TOP_LEVEL_NEWTON = frozenset({"ppw", "refinement"})

# preset name -> (k_max, ppw_inversion)
PRESETS: dict[str, tuple[float, float]] = {
    "gaussian1": (14.25, 20.0),
    "hermite_sum": (9.0, 20.0),
    "synthetic_head": (70.0, 12.0),
    "synthetic_thorax": (70.0, 12.0),
}


def _default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    k_min: float = 1.0
    k_max: float = 14.25
    dk: float = 0.25
    receiver_factor: float = 4.0
    radius: float = 20.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    ppw_data: float = 40.0
    ppw_inversion: float = 20.0
    ls_order: int = 4
    ls_dense_limit: int = 20000
    grid_refinement: GridRefinement = GridRefinement.POW2
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    init_mode: InitMode = InitMode.PROJECTION
    workers: int = field(default_factory=_default_workers)
    images: bool = True
    output_dir: str = "out"
    preset: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid_refinement", GridRefinement(self.grid_refinement))
        object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        if self.k_min < 1:
            raise ValueError(f"k_min must be at least 1, got {self.k_min}")
        if self.k_max < self.k_min:
            raise ValueError(f"k_max {self.k_max} is below k_min {self.k_min}")
        if not self.dk > 0:
            raise ValueError(f"dk must be positive, got {self.dk}")
        if not self.receiver_factor > 0:
            raise ValueError(f"receiver_factor must be positive, got {self.receiver_factor}")
        MeasurementCircle(self.radius, 1)
        for name in ("ppw_data", "ppw_inversion"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.ls_order not in (2, 4):
            raise ValueError(f"ls_order must be 2 or 4, got {self.ls_order}")
        if self.ls_dense_limit < 0:
            raise ValueError(f"ls_dense_limit must be nonnegative, got {self.ls_dense_limit}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.ppw_data < 2 * self.ppw_inversion:
            logger.warning(
                "data grid (%g ppw) is less than twice as fine as the inversion grid (%g ppw)",
                self.ppw_data, self.ppw_inversion,
            )

    @property
    def newton_config(self) -> NewtonConfig:
        """Newton options with the inversion resolution filled in."""
        return dataclasses.replace(
            self.newton, ppw=self.ppw_inversion, refinement=self.grid_refinement
        )

    def schedule(self) -> list[FrequencyStep]:
        return schedule(self.k_min, self.k_max, self.dk, self.receiver_factor)

    def to_json(self) -> dict[str, Any]:
        newton = {
            k: v for k, v in self.newton.to_json().items() if k not in _TOP_LEVEL_NEWTON
        }
        payload: dict[str, Any] = {
            "phantom": self.phantom.to_json(),
            "k_min": self.k_min,
            "k_max": self.k_max,
            "dk": self.dk,
            "receiver_factor": self.receiver_factor,
            "radius": self.radius,
            "noise": {"delta": self.noise.delta, "seed": self.noise.seed},
            "ppw_data": self.ppw_data,
            "ppw_inversion": self.ppw_inversion,
            "ls_order": self.ls_order,
            "ls_dense_limit": self.ls_dense_limit,
            "grid_refinement": self.grid_refinement.value,
            "newton": newton,
            "init_mode": self.init_mode.value,
            "workers": self.workers,
            "images": self.images,
            "output_dir": self.output_dir,
        }
        if self.preset is not None:
            payload["preset"] = self.preset
        return payload


def preset(name: str) -> ExperimentConfig:
    """The documented configuration of one experiment family."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    k_max, ppw = PRESETS[name]
    return ExperimentConfig(
        phantom=PhantomSpec(PhantomKind(name)),
        k_max=k_max,
        ppw_inversion=ppw,
        preset=name,
    )


def config_from_dict(payload: Mapping[str, Any]) -> ExperimentConfig:
    """Build a config from a JSON object, starting from its ``preset`` if named."""
    if not isinstance(payload, Mapping):
        raise ValueError("configuration must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    base = preset(payload["preset"]) if payload.get("preset") else ExperimentConfig()
    updates: dict[str, Any] = {}
    for key, value in payload.items():
        if key == "phantom":
            updates[key] = PhantomSpec.from_json(value)
        elif key == "noise":
            extra = set(value) - {"delta", "seed"}
            if extra:
                raise ValueError(f"unknown noise keys: {sorted(extra)}")
            updates[key] = NoiseSpec(**value)
        elif key == "newton":
            clash = set(value) & _TOP_LEVEL_NEWTON
            if clash:
                raise ValueError(
                    f"newton keys {sorted(clash)} are set by ppw_inversion and grid_refinement"
                )
            merged = {**base.newton.to_json(), **dict(value)}
            updates[key] = NewtonConfig.from_json(merged)
        else:
            updates[key] = value
    return dataclasses.replace(base, **updates)


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"configuration {path} is not valid JSON: {exc}") from exc
    return config_from_dict(payload)
