import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_cfg(tmp_path):
    """Small, fast DQN run on the tiny environment."""
    from rl4rec.config import RunConfig, apply_overrides

    return apply_overrides(RunConfig(), [
        "dataset.kind=tiny", "total_steps=400", "eval_interval=200", "eval_batch=20",
        "dqn.minibatch=32", "encoder.d=8", "encoder.d_hidden=8", f"out={tmp_path / 'run'}",
    ])
