"""Tests for experiment configuration."""

import json
import logging

import pytest

from helmrecon.config import PRESETS, ExperimentConfig, config_from_dict, load_config, preset
from helmrecon.engine.models import GridRefinement, InitMode, PhantomKind


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets(name: str) -> None:
    cfg = preset(name)
    k_max, ppw = PRESETS[name]
    assert cfg.phantom.kind is PhantomKind(name)
    assert cfg.k_max == k_max
    assert cfg.newton_config.ppw == ppw
    assert cfg.schedule()[0].k == 1.0


def test_gaussian_schedule() -> None:
    steps = preset("gaussian1").schedule()
    assert len(steps) == 54
    assert steps[-1].k == 14.25
    assert (steps[-1].n_directions, steps[-1].n_receivers) == (28, 57)


def test_config_from_dict_starts_from_preset() -> None:
    cfg = config_from_dict({
        "preset": "hermite_sum",
        "noise": {"delta": 0.01, "seed": 5},
        "newton": {"tol": 1e-4},
        "grid_refinement": "exact",
        "init_mode": "born",
    })
    assert cfg.k_max == 9.0
    assert cfg.noise.delta == 0.01
    assert cfg.newton.tol == 1e-4
    assert cfg.newton.max_newton == 3
    assert cfg.grid_refinement is GridRefinement.EXACT
    assert cfg.newton_config.refinement is GridRefinement.EXACT
    assert cfg.init_mode is InitMode.BORN


def test_to_json_round_trip() -> None:
    cfg = config_from_dict({"preset": "gaussian1", "workers": 2, "images": False})
    payload = cfg.to_json()
    assert "ppw" not in payload["newton"]
    assert config_from_dict(json.loads(json.dumps(payload))) == cfg


@pytest.mark.parametrize(
    ("payload", "message"),
    [
        ({"k_mn": 1.0}, "unknown configuration keys"),
        ({"noise": {"sigma": 0.1}}, "unknown noise keys"),
        ({"newton": {"ppw": 8}}, "set by ppw_inversion"),
        ({"preset": "ellipse"}, "unknown preset"),
        ({"k_min": 0.5}, "k_min must be at least 1"),
        ({"k_max": 0.9}, "below k_min"),
        ({"ls_order": 3}, "ls_order"),
        ({"dk": 0.0}, "dk must be positive"),
        ({"radius": 1.0}, "enclose"),
    ],
)
def test_invalid_configs(payload: dict, message: str) -> None:
    with pytest.raises(ValueError, match=message):
        config_from_dict(payload)


def test_coarse_data_grid_warns(caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.WARNING, logger="helmrecon.config"):
        ExperimentConfig(ppw_data=12.0, ppw_inversion=10.0)
    assert "less than twice as fine" in caplog.text


def test_load_config(tmp_path) -> None:
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"preset": "synthetic_head", "k_max": 3.0}))
    cfg = load_config(str(path))
    assert cfg.preset == "synthetic_head" and cfg.k_max == 3.0
    path.write_text("{not json")
    with pytest.raises(ValueError, match="not valid JSON"):
        load_config(str(path))
    path.write_text("[1, 2]")
    with pytest.raises(ValueError, match="JSON object"):
        load_config(str(path))
