import numpy as np
import pytest

from sgmeta.env import default_workspace
from sgmeta.follower import TypeDistribution


@pytest.fixture(scope="session")
def ws():
    return default_workspace()


@pytest.fixture(scope="session")
def dist():
    return TypeDistribution()


def central_diff(f, x, h=1e-6):
    """Central finite differences of a scalar or vector function of a flat vector."""
    x = np.array(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))
