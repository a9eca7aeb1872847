import numpy as np
import pytest

from zcbf import net, zubov
from zcbf.dynamics import pendulum_system, unicycle_system, zero_reference
from zcbf.dynamics import make_unicycle_reference


TINY_TRAIN = dict(n_interior=1500, n_boundary=300, n_safe=300, n_unsafe=300,
                  batch_size=256, max_epochs=60, seed=0)


@pytest.fixture(scope="session")
def tiny_pendulum():
    """Small-budget pendulum training shared by tests needing a real net."""
    sys_ = pendulum_system()
    ref = zero_reference(sys_.m)
    cfg = zubov.TrainConfig(**TINY_TRAIN)
    netobj, history = zubov.train(sys_, ref, cfg)
    return sys_, ref, cfg, netobj, history


@pytest.fixture(scope="session")
def tiny_unicycle():
    sys_ = unicycle_system(0.5)
    ref = make_unicycle_reference((1.0, 1.0), 3.0)
    cfg = zubov.TrainConfig(**TINY_TRAIN)
    netobj, history = zubov.train(sys_, ref, cfg)
    return sys_, ref, cfg, netobj, history


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
