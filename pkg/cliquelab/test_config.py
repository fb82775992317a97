#!/usr/bin/env python3
"""
Tests for environment-driven settings
"""

import sys
from pathlib import Path

import pytest

# Add package directory to path
package_dir = Path(__file__).parent
sys.path.insert(0, str(package_dir))

from config import DEFAULT_RHO, DEFAULT_SEED, Settings, load_settings

VARIABLES = (
    "CLIQUE_SEED", "CLIQUE_RHO", "CLIQUE_WITNESS_C", "CLIQUE_KEEP_LEDGER",
    "CLIQUE_RECORD_PAYLOADS", "CLIQUE_LOG_LEVEL", "CLIQUE_BACKEND",
)


@pytest.fixture
def clean_env(monkeypatch):
    for name in VARIABLES:
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


def test_defaults(clean_env):
    settings = load_settings()
    assert settings.seed == DEFAULT_SEED
    assert settings.rho == DEFAULT_RHO
    assert settings.keep_ledger is True
    assert settings.record_payloads is False
    assert settings.backend == "auto"


def test_environment_overrides(clean_env):
    clean_env.setenv("CLIQUE_SEED", "7")
    clean_env.setenv("CLIQUE_RHO", "0.5")
    clean_env.setenv("CLIQUE_KEEP_LEDGER", "off")
    clean_env.setenv("CLIQUE_LOG_LEVEL", "debug")
    clean_env.setenv("CLIQUE_BACKEND", "bilinear:2")
    settings = load_settings()
    assert (settings.seed, settings.rho, settings.keep_ledger) == (7, 0.5, False)
    assert settings.log_level == "DEBUG"
    assert settings.backend == "bilinear:2"


def test_explicit_arguments_win(clean_env):
    clean_env.setenv("CLIQUE_SEED", "7")
    assert load_settings(seed=11, backend="semiring3d").seed == 11
    assert load_settings(backend="semiring3d").backend == "semiring3d"


@pytest.mark.parametrize("name, value", [
    ("CLIQUE_SEED", "seven"),
    ("CLIQUE_RHO", "1.5"),
    ("CLIQUE_WITNESS_C", "0"),
    ("CLIQUE_RECORD_PAYLOADS", "maybe"),
])
def test_bad_values(clean_env, name, value):
    clean_env.setenv(name, value)
    with pytest.raises(ValueError):
        load_settings()


def test_settings_are_frozen():
    with pytest.raises(AttributeError):
        Settings().seed = 1
