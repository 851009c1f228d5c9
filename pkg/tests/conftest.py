import numpy as np
import pytest

from paceroute.router import RouterConfig
from paceroute.simulator import generate_synthetic, three_tier_portfolio


@pytest.fixture(scope="session")
def portfolio():
    return three_tier_portfolio()


@pytest.fixture(scope="session")
def matrix(portfolio):
    return generate_synthetic(portfolio, 2500, seed=123)


@pytest.fixture(scope="session")
def train_matrix(portfolio):
    return generate_synthetic(portfolio, 500, seed=100123)


@pytest.fixture()
def router_config():
    return RouterConfig(d=26, alpha=0.01, gamma=0.997)


def unit_context(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal(d - 1)
    g /= np.linalg.norm(g)
    return np.concatenate([g, [1.0]])
