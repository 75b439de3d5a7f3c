"""Tests for environment configuration."""

import importlib
from pathlib import Path

import pytest

import pmpcheck.config as config


@pytest.fixture
def reload_config(monkeypatch):
    def reload(**env):
        for key, value in env.items():
            monkeypatch.setenv(key, value)
        return importlib.reload(config)

    yield reload
    monkeypatch.undo()
    importlib.reload(config)


def test_environment_overrides(reload_config):
    """Test configuration from environment variables."""
    cfg_module = reload_config(
        PMPCHECK_PADDR_BITS="16",
        PMPCHECK_ENTRIES="4",
        PMPCHECK_SOLVER="z3",
        PMPCHECK_LOG_LEVEL="debug",
    )
    cfg = cfg_module.CliConfig.from_env()

    assert (cfg.paddr_bits, cfg.n_entries, cfg.solver) == (16, 4, "z3")
    assert cfg_module.LOG_LEVEL == "DEBUG"


def test_relative_output_path_resolves_under_project(reload_config):
    """Test that a relative output path resolves under the project root."""
    cfg_module = reload_config(PMPCHECK_OUTPUT_PATH="results")

    assert cfg_module.OUTPUT_ROOT == cfg_module.PROJECT_ROOT / "results"


def test_absolute_output_path(reload_config, tmp_path):
    """Test an absolute output path."""
    cfg_module = reload_config(PMPCHECK_OUTPUT_PATH=str(tmp_path))

    assert cfg_module.OUTPUT_ROOT == Path(tmp_path)


def test_json_output_flag():
    """Test the JSON output switch."""
    cfg = config.CliConfig(output_format="json")
    assert cfg.json_output
    assert not config.CliConfig().json_output
