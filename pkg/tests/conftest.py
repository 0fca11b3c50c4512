import numpy as np
import pytest

from bdris.channel import ChannelSet, derive_seed, gen_rayleigh


def make_iid_channels(seed, n_t=2, n_r=2, m=8, with_direct=False):
    """Unit-variance i.i.d. Gaussian channel triple with per-link derived seeds."""
    f = gen_rayleigh(n_r, m, derive_seed(seed, 0))
    g = gen_rayleigh(n_t, m, derive_seed(seed, 1))
    h = gen_rayleigh(n_r, n_t, derive_seed(seed, 2)) if with_direct else None
    return ChannelSet(f=f, g=g, h_direct=h)


@pytest.fixture
def iid_channels():
    return make_iid_channels


def random_complex(rng, rows, cols):
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


@pytest.fixture
def complex_matrix():
    def make(seed, rows, cols):
        return random_complex(np.random.default_rng(seed), rows, cols)

    return make
