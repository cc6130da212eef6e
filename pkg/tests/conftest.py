"""Shared fixtures: repository paths and a small default sample config."""

from pathlib import Path

import pytest

from einvex.problem import SampleConfig

REPO = Path(__file__).resolve().parents[1]
PROBLEMS = REPO / "problems"


@pytest.fixture(scope="session")
def repo_root():
    return REPO


@pytest.fixture(scope="session")
def problems_dir():
    return PROBLEMS


@pytest.fixture(scope="session")
def example1_path():
    return PROBLEMS / "example1.json"


@pytest.fixture(scope="session")
def vp1_path():
    return PROBLEMS / "vp1.json"


@pytest.fixture(scope="session")
def fast_cfg():
    """Small but non-toy sampling budget for unit-level checks."""
    return SampleConfig(seed=42, n_pairs=2000, n_tau=8)
