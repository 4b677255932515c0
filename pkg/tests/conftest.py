import numpy as np
import pytest

from parity_heom.bath import BathSpec, DiscreteDensity, decompose
from parity_heom.fock import (
    FockSpace,
    annihilation_op,
    basis_state,
    number_op,
)

# single system level coupled to three discrete bath modes
BENCHMARK_MODES = ((0.05, 0.6), (0.05, 1.0), (0.05, 1.5))
BENCHMARK_BETA = 2.0
SYSTEM_ENERGY = 1.0


@pytest.fixture
def space():
    return FockSpace(1)


@pytest.fixture
def system_hamiltonian(space):
    return SYSTEM_ENERGY * number_op(space, 0)


@pytest.fixture
def coupling(space):
    return annihilation_op(space, 0)


@pytest.fixture
def benchmark_bath():
    return BathSpec(DiscreteDensity(BENCHMARK_MODES), BENCHMARK_BETA, 0.0)


@pytest.fixture
def benchmark_decomposition(benchmark_bath):
    return decompose(benchmark_bath)


@pytest.fixture
def occupied(space):
    return basis_state(space, [1])


@pytest.fixture
def empty(space):
    return basis_state(space, [0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
