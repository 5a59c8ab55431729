import numpy as np
import pytest

# A labram-like config small enough to train in seconds on one core.
SMALL_LABRAM = {"conv_filters": 4, "norm_groups": 2, "embed_dim": 100, "depth": 1, "heads": 2, "mlp_dim": 100}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_labram_overrides():
    return dict(SMALL_LABRAM)
