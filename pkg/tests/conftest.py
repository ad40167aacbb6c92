import numpy as np
import pytest

from vqprobe.codebook import Codebook
from vqprobe.probe import FrozenProbe
from vqprobe.projection import ProjectionParams
from vqprobe.synth import generate, two_condition_spec
from vqprobe.trainer import TrainConfig, run_stage_a


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def separable_store():
    return generate(two_condition_spec("separable", videos_per_condition=6, tokens_per_video=64))


@pytest.fixture(scope="session")
def trained(separable_store):
    """A short training run shared by tests that need a realistic probe."""
    _, batch = separable_store
    cfg = TrainConfig(steps=300, seed=0)
    params, codebook, tlog = run_stage_a(batch, cfg)
    return params, codebook, tlog


@pytest.fixture
def random_probe(rng):
    params = ProjectionParams.init(16, 8, rng)
    return FrozenProbe(params, Codebook(rng.standard_normal((4, 8))))
