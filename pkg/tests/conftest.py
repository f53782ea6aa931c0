import numpy as np
import pytest

from hgm.environment import mismatch_env_config
from hgm.policies import PolicyConfig
from hgm.runtime import RunConfig

SHAPE_GRID = [0.5, 1, 2, 5, 20]
X_GRID = [0.01] + [i / 10 for i in range(1, 10)] + [0.99]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mismatch_config(**overrides):
    env_over = {k: overrides.pop(k) for k in list(overrides) if k in mismatch_env_config().__dict__}
    policy_over = {k: overrides.pop(k) for k in list(overrides) if k in PolicyConfig().__dict__}
    return RunConfig(env=mismatch_env_config(**env_over), policy=PolicyConfig(**policy_over), **overrides)
