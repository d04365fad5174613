import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_mask(rng, h, w, p_inside=0.6):
    """Random bool mask guaranteed to contain at least one False pixel."""
    mask = rng.random((h, w)) < p_inside
    if mask.all():
        mask[tuple(rng.integers(0, (h, w)))] = False
    return mask
