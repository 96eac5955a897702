import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maskdiff.state_space import SpaceSpec, SparseDistribution, random_target

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def target_23():
    """Three-point target on d=2, K=3."""
    spec = SpaceSpec(2, 3)
    return SparseDistribution(spec, {(1, 2): 0.5, (2, 2): 0.3, (2, 1): 0.2})


@pytest.fixture
def target_33():
    return random_target(SpaceSpec(3, 3), 5, np.random.default_rng(11))


def write_target(path, dist):
    from maskdiff.state_space import save_target

    save_target(dist, path)
    return path
