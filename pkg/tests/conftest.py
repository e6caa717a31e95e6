# SPDX-License-Identifier: MIT
"""Pytest configuration and fixtures."""
from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

# Ensure the repository root (which contains the ``cawr`` package) is importable
# when the tests run without it on ``PYTHONPATH``.
ROOT_DIR = Path(__file__).resolve().parents[1]
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

# Set test environment variables
os.environ["CAWR_ENV"] = "testing"
os.environ.setdefault("CAWR_LOG_LEVEL", "WARNING")
os.environ.setdefault("CAWR_PROFILE", "desk")

from cawr.mdp import Dataset, TabularMDP
from cawr.schemas import ExperimentConfig, parse_config
from cawr.tasks import CorruptedBandit, GaussianPolicy, GridWorld, MixtureBehavior, generate_dataset


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training experiments")


def bandit_config_data(**overrides: Any) -> Dict[str, Any]:
    """A small bandit experiment that trains in well under a second."""
    data: Dict[str, Any] = {
        "task": "bandit",
        "dataset": {
            "generator": {
                "task": "bandit",
                "epsilon": 0.5,
                "n_episodes": 200,
                "good_mean": 1.0,
                "poor_mean": -1.0,
                "action_std": 0.1,
                "seed": 3,
            }
        },
        "network": {"kind": "tabular", "state_bins": 1},
        "batch_size": 32,
        "iterations": 20,
        "seeds": [0],
        "eval_every": 10,
        "eval_episodes": 2,
        "eval_horizon": 1,
        "policy_lr": 1e-3,
        "value_lr": 0.1,
        "q_lr": 0.1,
        "soft_update": 0.5,
        "checkpoint": True,
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return data


@pytest.fixture
def make_config():
    """Factory for validated bandit configs with overrides."""

    def _make(**overrides: Any) -> ExperimentConfig:
        return parse_config(bandit_config_data(**overrides))

    return _make


@pytest.fixture
def bandit_config(make_config) -> ExperimentConfig:
    return make_config()


@pytest.fixture
def bandit_task() -> CorruptedBandit:
    return CorruptedBandit(optimum=1.0)


@pytest.fixture
def bandit_dataset(bandit_task) -> Dataset:
    """Half good (a ~ +1), half poor (a ~ -1) one-step episodes."""
    behavior = MixtureBehavior(
        GaussianPolicy(offset=1.0, std=0.1, name="good"),
        GaussianPolicy(offset=-1.0, std=0.1, name="poor"),
        0.5,
    )
    return generate_dataset(bandit_task, behavior, 200, 1, seed=3)


@pytest.fixture
def small_grid() -> GridWorld:
    return GridWorld(rows=2, cols=3, slip=0.1, gamma=0.9)


@pytest.fixture
def chain_mdp() -> TabularMDP:
    """Two states, two actions; action 1 swaps the state, state 1 pays 1."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0
    P[0, 1, 1] = 1.0
    P[1, 0, 1] = 1.0
    P[1, 1, 0] = 1.0
    R = np.array([[0.0, 0.0], [1.0, 1.0]])
    return TabularMDP(P, R, 0.9, np.array([1.0, 0.0]))


@pytest.fixture
def run_dir(tmp_path) -> Path:
    path = tmp_path / "runs"
    path.mkdir()
    return path


@pytest.fixture
def config_data():
    """The raw-dict builder behind ``make_config``."""
    return bandit_config_data
