import numpy as np
import pytest

from parity_heom.bath import BathSpec, FlatDensity
from parity_heom.exceptions import (
    BathError,
    DimensionMismatch,
    IntegrationError,
    ParityError,
    UnsupportedBath,
)
from parity_heom.fock import (
    DensityMatrix,
    FockSpace,
    annihilation_op,
    creation_op,
    number_op,
)
from parity_heom.lindblad import (
    build_generator,
    build_generator_from_bath,
    check_time_grid,
    dissipator,
    evolve_lindblad,
    steady_state,
)

GAMMA = 0.1
N0 = 0.3


@pytest.fixture
def generator(system_hamiltonian, coupling):
    return build_generator(system_hamiltonian, coupling, GAMMA, N0)


class TestBuildGenerator:
    @pytest.mark.parametrize("gamma,n0", ((-0.1, 0.3), (0.1, -0.2), (0.1, 1.2)))
    def test_invalid_parameters(self, system_hamiltonian, coupling, gamma, n0):
        with pytest.raises(BathError):
            build_generator(system_hamiltonian, coupling, gamma, n0)

    def test_even_coupling(self, system_hamiltonian, space):
        with pytest.raises(ParityError):
            build_generator(system_hamiltonian, number_op(space, 0), GAMMA, N0)

    def test_odd_hamiltonian(self, space, coupling):
        with pytest.raises(ParityError):
            build_generator(coupling + coupling.adjoint(), coupling, GAMMA, N0)

    def test_space_mismatch(self, system_hamiltonian):
        with pytest.raises(DimensionMismatch):
            build_generator(
                system_hamiltonian, annihilation_op(FockSpace(2), 0), GAMMA, N0
            )

    def test_from_bath(self, system_hamiltonian, coupling):
        generator = build_generator_from_bath(
            system_hamiltonian, coupling, BathSpec(FlatDensity(GAMMA, N0), 1.0)
        )
        assert generator.gamma == GAMMA
        assert generator.n0 == N0

    def test_from_bath__not_flat(self, system_hamiltonian, coupling, benchmark_bath):
        with pytest.raises(UnsupportedBath):
            build_generator_from_bath(system_hamiltonian, coupling, benchmark_bath)

    def test_odd_sector_jump_sign(self, rng):
        # a spectator mode makes the sign of the jump term visible
        space = FockSpace(2)
        c = annihilation_op(space, 0)
        cdag = creation_op(space, 0)
        hamiltonian = 0.4 * number_op(space, 0) + 0.9 * number_op(space, 1)
        generator = build_generator(hamiltonian, c, GAMMA, N0)
        x = creation_op(space, 1).toarray() @ (
            rng.normal(size=(4, 4)) * np.equal.outer(space.parities(), space.parities())
        )
        c_, cd, h = c.toarray(), cdag.toarray(), hamiltonian.toarray()
        expected = (
            -1j * (h @ x - x @ h)
            + GAMMA * (1 - N0) * (-2 * c_ @ x @ cd - cd @ c_ @ x - x @ cd @ c_)
            + GAMMA * N0 * (-2 * cd @ x @ c_ - c_ @ cd @ x - x @ c_ @ cd)
        )
        assert np.allclose(generator.apply(x), expected)

    def test_dissipator(self):
        space = FockSpace(1)
        c = annihilation_op(space, 0)
        occupied = np.diag([0.0, 1.0]).astype(complex)
        assert np.allclose(dissipator(c, 1).apply(occupied), np.diag([2.0, -2.0]))


class TestEvolveLindblad:
    def test_single_level(self, generator):
        initial = np.array([[0.4, 0.3], [0.3, 0.6]], dtype=complex)
        times = np.linspace(0, 20, 41)
        trajectory = evolve_lindblad(generator, initial, times)
        for t, rho in zip(times, trajectory):
            population = N0 + (0.6 - N0) * np.exp(-2 * GAMMA * t)
            assert rho.matrix[1, 1] == pytest.approx(population, abs=1e-10)
            assert rho.matrix[1, 0] == pytest.approx(
                0.3 * np.exp((-1j * 1.0 - GAMMA) * t), abs=1e-10
            )
            assert rho.trace() == pytest.approx(1.0, abs=1e-12)

    def test_odd_object(self, generator, empty):
        # c^dag rho decays at the coherence rate
        seeded = creation_op(empty.space, 0).toarray() @ empty.matrix
        trajectory = evolve_lindblad(generator, seeded, [0.0, 2.0])
        assert trajectory[1].matrix[1, 0] == pytest.approx(np.exp((-1j - GAMMA) * 2.0))

    def test_non_uniform_grid(self, generator, occupied):
        times = [0.0, 0.5, 0.7, 3.0, 3.0]
        trajectory = evolve_lindblad(generator, occupied, times)
        assert len(trajectory) == 5
        assert np.allclose(trajectory[3].matrix, trajectory[4].matrix)

    def test_shape(self, generator):
        with pytest.raises(DimensionMismatch):
            evolve_lindblad(generator, np.eye(4), [0.0, 1.0])

    @pytest.mark.parametrize("times", ([], [-1.0, 0.0], [0.0, 2.0, 1.0]))
    def test_bad_grid(self, times):
        with pytest.raises(IntegrationError):
            check_time_grid(times)

    def test_steady_state(self, generator):
        rho = steady_state(generator)
        assert isinstance(rho, DensityMatrix)
        assert rho.matrix[1, 1] == pytest.approx(N0)
        assert rho.matrix[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_steady_state__long_time_limit(self, generator, occupied):
        final = evolve_lindblad(generator, occupied, [0.0, 200.0])[-1]
        assert final.trace_distance(steady_state(generator)) < 1e-8
