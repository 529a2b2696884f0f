import copy

import pytest
import yaml

from etcsim.scenarios import builtin_configs, scenario_from_config


@pytest.fixture
def write_config(tmp_path):
    """Write a scenario dict to a temp YAML file and return the path."""

    def _write(cfg: dict, name: str = "scenario.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(cfg, sort_keys=False))
        return path

    return _write


@pytest.fixture
def linear_cfg() -> dict:
    return copy.deepcopy(builtin_configs("paper/linear-gamma2delta")[0])


@pytest.fixture
def nonlinear_cfg() -> dict:
    return copy.deepcopy(builtin_configs("paper/nonlinear-fig")[0])


@pytest.fixture
def rate_cfg() -> dict:
    return copy.deepcopy(builtin_configs("paper/nonlinear-rate")[0])


def scenario_with(cfg: dict, **top_level):
    c = copy.deepcopy(cfg)
    c.update(top_level)
    return scenario_from_config(c)
