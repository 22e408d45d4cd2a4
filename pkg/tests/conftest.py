import numpy as np
import pytest

from gibbslab.model import gibbs_state, ising_chain, tfim_chain


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def chain8():
    return ising_chain(8, coupling=1.0, field=0.4)


@pytest.fixture(scope="session")
def chain8_state(chain8):
    return gibbs_state(chain8)


@pytest.fixture(scope="session")
def tfim6():
    return tfim_chain(6, coupling=0.6, g=0.5, periodic=False)
