from pathlib import Path

import numpy as np
import pytest

from mvelm import simulator

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_fleet():
    """Short simulated run: 2 nodes x 2 VMs, 30 minutes."""
    cfg = simulator.FleetConfig(n_nodes=2, vms_per_node=2, duration=1800.0, seed=3)
    data, script = simulator.simulate(cfg, fraction=0.1)
    return cfg, data, script


@pytest.fixture(scope="session")
def default_corpus():
    data, script = simulator.simulate(simulator.FleetConfig())
    return data, script
