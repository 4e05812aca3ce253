import numpy as np
import pytest

from dsrlab import systems, harness


@pytest.fixture(scope="session")
def lorenz_100k():
    """Clean Lorenz attractor run, 1e5 steps at dt=0.01, transient removed."""
    warm = systems.integrate("lorenz", systems.LorenzParams(), np.array([1.0, 2.0, 3.0]), 0.01, 5000)
    return systems.integrate("lorenz", systems.LorenzParams(), warm.samples[-1], 0.01, 100_000)


@pytest.fixture(scope="session")
def lorenz_10k(lorenz_100k):
    return lorenz_100k.slice(0, 10_000)


@pytest.fixture(scope="session")
def lorenz_std(lorenz_100k):
    traj, mean, std = harness.standardize(lorenz_100k)
    return traj, mean, std
