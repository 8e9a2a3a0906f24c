"""
Shared fixtures: configs, seeded generators and hand-built scenarios.
"""

import numpy as np
import pytest

from helpers import make_scenario, moving_agent
from occflow.scene import GridSpec, ModelConfig
from occflow.tensor import set_default_dtype


# =============================================================================
# Global
# =============================================================================

@pytest.fixture(autouse=True)
def float64():
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_cfg():
    return ModelConfig.preset("micro")


@pytest.fixture
def desk_cfg():
    return ModelConfig.preset("desk")


# =============================================================================
# Scenarios
# =============================================================================

@pytest.fixture
def grid32():
    return GridSpec(32, 32, 1.0)


@pytest.fixture
def translating_box(grid32):
    """4×2 m box at 1 m/cell moving +2 cells per future step along x."""
    agent = moving_agent(0, -6.0, 0.0, vx=2.0, length=4.0, width=2.0, T_f=3)
    return make_scenario([agent], grid32, T_f=3)
