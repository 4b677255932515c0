import csv
import itertools
import math

import numpy as np
import pytest
from scipy import linalg

from parity_heom.bath import BathSpec, DiscreteDensity, decompose_discrete, fermi_dirac
from parity_heom.exceptions import (
    DimensionMismatch,
    HierarchyError,
    IntegrationError,
    ParityError,
    ParitySectorError,
)
from parity_heom.fock import (
    FockSpace,
    Sector,
    annihilation_op,
    creation_op,
    number_op,
    quadratic_hamiltonian,
    sector_mask,
    thermal_state,
)
from parity_heom.heom import (
    AdoLabel,
    HierarchyMode,
    HierarchyState,
    build_hierarchy,
    evolve_heom,
    heom_rhs,
    rescale_ados,
    write_trajectory_csv,
)
from parity_heom.lindblad import build_generator, evolve_lindblad
from parity_heom.oracle import build_composite, evolve_exact, reduce_parity_aware

from .conftest import BENCHMARK_BETA, BENCHMARK_MODES, SYSTEM_ENERGY


@pytest.fixture
def hierarchy(benchmark_decomposition, coupling, system_hamiltonian):
    return build_hierarchy(
        benchmark_decomposition, coupling, system_hamiltonian, depth=2
    )


@pytest.fixture
def two_level_space():
    return FockSpace(2)


@pytest.fixture
def two_level_hamiltonian(two_level_space):
    return quadratic_hamiltonian(
        two_level_space, [1.0, 0.4], hoppings=[(0, 1, 0.3)], interactions=[(0, 1, 0.5)]
    )


def ordered_product(space, indices):
    product = np.eye(space.dim, dtype=complex)
    for index in indices:
        product = product @ annihilation_op(space, index).toarray()
    return product


def wrong_sector_norm(block, space, parity):
    expected = Sector.EVEN if parity == 1 else Sector.ODD
    return float(np.linalg.norm(np.where(sector_mask(space, expected), 0, block)))


class TestAdoLabel:
    @pytest.mark.parametrize(
        "indices,label,sign",
        (
            ((2, 0, 1), (0, 1, 2), 1),
            ((1, 0), (0, 1), -1),
            ((3, 1, 0), (0, 1, 3), -1),
            ((), (), 1),
        ),
    )
    def test_canonical(self, indices, label, sign):
        assert AdoLabel.canonical(indices) == (AdoLabel(label), sign)

    @pytest.mark.parametrize("indices", ((1, 1), (2, 0)))
    def test_invalid(self, indices):
        with pytest.raises(HierarchyError):
            AdoLabel(indices)

    def test_insert(self):
        assert AdoLabel((0, 2)).insert(1) == (AdoLabel((0, 1, 2)), -1)
        assert AdoLabel((0, 2)).insert(3) == (AdoLabel((0, 2, 3)), 1)
        with pytest.raises(HierarchyError):
            AdoLabel((0, 2)).insert(2)

    def test_remove(self):
        assert AdoLabel((0, 1, 2)).remove(0) == (AdoLabel((1, 2)), 1)
        assert AdoLabel((0, 1, 2)).remove(1) == (AdoLabel((0, 2)), -1)
        with pytest.raises(HierarchyError):
            AdoLabel((0, 2)).remove(1)

    def test_str(self):
        assert str(AdoLabel((0, 3))) == "(0,3)"
        assert AdoLabel((0, 3)).level == 2

    @pytest.mark.parametrize("count", (1, 2, 3, 4))
    def test_canonical__matches_anticommuting_product(self, count):
        # distinct annihilators anticommute, so reordering a string of them
        # picks up exactly the sign of the sorting permutation
        space = FockSpace(count)
        for level in range(count + 1):
            for combo in itertools.combinations(range(count), level):
                for written in itertools.permutations(combo):
                    label, sign = AdoLabel.canonical(written)
                    assert label.indices == combo
                    assert np.allclose(
                        ordered_product(space, written),
                        sign * ordered_product(space, combo),
                    )

    @pytest.mark.parametrize("count", (1, 2, 3, 4))
    def test_insert_remove__match_canonical(self, count):
        for level in range(count + 1):
            for combo in itertools.combinations(range(count), level):
                label = AdoLabel(combo)
                for index in range(count):
                    if index in combo:
                        lower, sign = label.remove(index)
                        assert AdoLabel.canonical((index,) + lower.indices) == (
                            label,
                            sign,
                        )
                    else:
                        assert label.insert(index) == AdoLabel.canonical(
                            (index,) + combo
                        )


class TestBuildHierarchy:
    def test_counts(self, hierarchy):
        assert hierarchy.n_ados == 1 + 6 + 15
        assert hierarchy.size == 22 * 4
        assert hierarchy.labels[0] == AdoLabel()
        assert hierarchy.generator.shape == (88, 88)

    @pytest.mark.parametrize(
        "options",
        ({"depth": -1}, {"depth": 7}, {"alpha": 0}),
    )
    def test_invalid(
        self, benchmark_decomposition, coupling, system_hamiltonian, options
    ):
        with pytest.raises(HierarchyError):
            build_hierarchy(
                benchmark_decomposition, coupling, system_hamiltonian, **options
            )

    def test_coupling_count(
        self, benchmark_decomposition, coupling, system_hamiltonian
    ):
        with pytest.raises(HierarchyError):
            build_hierarchy(
                benchmark_decomposition, [coupling] * 5, system_hamiltonian, depth=1
            )

    def test_even_coupling(self, benchmark_decomposition, space, system_hamiltonian):
        with pytest.raises(ParityError):
            build_hierarchy(
                benchmark_decomposition,
                number_op(space, 0),
                system_hamiltonian,
                depth=1,
            )

    def test_space_mismatch(self, benchmark_decomposition, system_hamiltonian):
        with pytest.raises(DimensionMismatch):
            build_hierarchy(
                benchmark_decomposition,
                annihilation_op(FockSpace(2), 0),
                system_hamiltonian,
                depth=1,
            )

    def test_mode_from_string(
        self, benchmark_decomposition, coupling, system_hamiltonian
    ):
        hierarchy = build_hierarchy(
            benchmark_decomposition,
            coupling,
            system_hamiltonian,
            depth=1,
            mode="even-standard",
        )
        assert hierarchy.mode is HierarchyMode.EVEN_STANDARD

    def test_rhs__bare_state(self, hierarchy, system_hamiltonian):
        # with all ADOs zero the physical block only sees the coherent part
        initial = np.array([[0.5, 0.2j], [-0.2j, 0.5]])
        state = HierarchyState.from_density(hierarchy, initial)
        derivative = heom_rhs(hierarchy, state)
        h = system_hamiltonian.toarray()
        assert np.allclose(derivative.block(()), -1j * (h @ initial - initial @ h))

    def test_rhs__size(
        self, hierarchy, benchmark_decomposition, coupling, system_hamiltonian
    ):
        other = build_hierarchy(
            benchmark_decomposition, coupling, system_hamiltonian, depth=1
        )
        with pytest.raises(DimensionMismatch):
            heom_rhs(hierarchy, HierarchyState.from_density(other, np.eye(2)))

    @pytest.mark.parametrize("initial_parity", (1, -1))
    def test_ado_parity_blocks(
        self,
        benchmark_decomposition,
        two_level_space,
        two_level_hamiltonian,
        rng,
        initial_parity,
    ):
        # a level-n ADO has the parity of rho0 times (-1)**n; the other
        # sector of every block stays at zero
        space = two_level_space
        coupling = annihilation_op(space, 0)
        hierarchy = build_hierarchy(
            benchmark_decomposition, coupling, two_level_hamiltonian, depth=3
        )
        raw = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        sector = Sector.EVEN if initial_parity == 1 else Sector.ODD
        initial = np.where(sector_mask(space, sector), raw, 0)
        final = evolve_heom(
            hierarchy, initial, [0.0, 0.7, 2.0], method="expm"
        ).final_state
        for label in hierarchy.labels:
            parity = initial_parity * (-1) ** label.level
            block = final.block(label)
            assert wrong_sector_norm(block, space, parity) < 1e-12
            if label.level <= 1:
                assert np.linalg.norm(block) > 0


class TestEvolveHeom:
    def test_matches_exact_dynamics(
        self, benchmark_decomposition, coupling, system_hamiltonian, occupied
    ):
        model = build_composite(
            BENCHMARK_MODES, system_hamiltonian, coupling, BENCHMARK_BETA, 0.0, occupied
        )
        hierarchy = build_hierarchy(
            benchmark_decomposition, coupling, system_hamiltonian, depth=6
        )
        times = np.linspace(0, 10, 21)
        trajectory = evolve_heom(hierarchy, occupied, times)
        for t, rho in zip(times, trajectory.densities()):
            exact = reduce_parity_aware(model, evolve_exact(model, float(t)))
            assert rho.trace_distance(exact) < 1e-5

    def test_depth_convergence(
        self, benchmark_decomposition, coupling, system_hamiltonian, occupied
    ):
        times = np.linspace(0, 10, 11)
        trajectories = {
            depth: evolve_heom(
                build_hierarchy(
                    benchmark_decomposition, coupling, system_hamiltonian, depth=depth
                ),
                occupied,
                times,
                method="expm",
            ).densities()
            for depth in (2, 4, 6)
        }

        def distance(depth):
            return max(
                rho.trace_distance(full)
                for rho, full in zip(trajectories[depth], trajectories[6])
            )

        assert distance(4) < 1e-5
        assert distance(4) <= distance(2) + 1e-12

    def test_linear_in_initial_state(self, hierarchy, rng):
        first = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        second = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        a, b = 0.3 - 0.2j, 1.7
        times = np.linspace(0, 3, 4)

        def evolve(initial):
            return evolve_heom(hierarchy, initial, times, method="expm").blocks

        combined = evolve(a * first + b * second)
        assert np.allclose(combined, a * evolve(first) + b * evolve(second), atol=1e-10)

    def test_even_state_stays_hermitian(
        self, benchmark_decomposition, two_level_space, two_level_hamiltonian
    ):
        space = two_level_space
        # mixing the two single-particle states gives even coherences
        mixer = quadratic_hamiltonian(space, [0.0, 0.0], [(0, 1, 1.0)]).toarray()
        rotation = linalg.expm(-0.4j * mixer)
        diagonal = thermal_state(space, [0.2, -0.1], 1.5).matrix
        initial = rotation @ diagonal @ rotation.conj().T
        hierarchy = build_hierarchy(
            benchmark_decomposition,
            annihilation_op(space, 0),
            two_level_hamiltonian,
            depth=6,
        )
        trajectory = evolve_heom(
            hierarchy, initial, np.linspace(0, 6, 7), method="expm"
        )
        for rho in trajectory.densities():
            assert rho.is_hermitian(1e-10)
            assert rho.sector_norms()[1] < 1e-12
            assert rho.trace() == pytest.approx(1.0, abs=1e-10)

    def test_uncoupled_bath_is_bare_evolution(self, system_hamiltonian, coupling):
        bath = BathSpec(DiscreteDensity(((0.0, 0.6), (0.0, 1.5))), 2.0)
        hierarchy = build_hierarchy(
            decompose_discrete(bath), coupling, system_hamiltonian, depth=2
        )
        initial = np.array([[0.6, 0.3 - 0.1j], [0.3 + 0.1j, 0.4]])
        times = np.linspace(0, 4, 5)
        trajectory = evolve_heom(hierarchy, initial, times, method="expm")
        h = system_hamiltonian.toarray()
        for t, block in zip(times, trajectory.blocks):
            propagator = linalg.expm(-1j * h * t)
            bare = propagator @ initial @ propagator.conj().T
            assert np.allclose(block, bare, atol=1e-10)

    def test_trace_preserved(self, hierarchy, occupied):
        trajectory = evolve_heom(hierarchy, occupied, np.linspace(0, 10, 11))
        traces = np.trace(trajectory.blocks, axis1=1, axis2=2)
        assert np.allclose(traces, 1.0, atol=1e-8)

    def test_expm_matches_rk45(self, hierarchy, occupied):
        times = np.linspace(0, 5, 6)
        adaptive = evolve_heom(hierarchy, occupied, times)
        exact = evolve_heom(hierarchy, occupied, times, method="expm")
        assert np.allclose(adaptive.blocks, exact.blocks, atol=1e-7)

    def test_even_standard_matches_generalized(
        self, benchmark_decomposition, coupling, system_hamiltonian
    ):
        initial = np.array([[0.7, 0.0], [0.0, 0.3]])
        times = np.linspace(0, 4, 5)
        blocks = [
            evolve_heom(
                build_hierarchy(
                    benchmark_decomposition,
                    coupling,
                    system_hamiltonian,
                    depth=3,
                    mode=mode,
                ),
                initial,
                times,
                method="expm",
            ).blocks
            for mode in HierarchyMode
        ]
        assert np.allclose(blocks[0], blocks[1], atol=1e-10)

    def test_even_standard__odd_state(
        self, benchmark_decomposition, coupling, system_hamiltonian, empty
    ):
        hierarchy = build_hierarchy(
            benchmark_decomposition,
            coupling,
            system_hamiltonian,
            depth=2,
            mode="even-standard",
        )
        seeded = creation_op(empty.space, 0).toarray() @ empty.matrix
        with pytest.raises(ParitySectorError):
            evolve_heom(hierarchy, seeded, [0.0, 1.0])

    def test_sector_projection(self, hierarchy):
        initial = np.array([[0.5, 0.4], [0.4, 0.5]])
        trajectory = evolve_heom(hierarchy, initial, [0.0], sector="even")
        assert np.allclose(trajectory.blocks[0], np.diag([0.5, 0.5]))

    def test_zero_final_time(self, hierarchy, occupied):
        trajectory = evolve_heom(hierarchy, occupied, [0.0, 0.0])
        assert len(trajectory) == 2
        assert trajectory.steps == 0

    def test_unknown_method(self, hierarchy, occupied):
        with pytest.raises(IntegrationError):
            evolve_heom(hierarchy, occupied, [0.0, 1.0], method="euler")

    def test_initial_shape(self, hierarchy):
        with pytest.raises(DimensionMismatch):
            evolve_heom(hierarchy, np.eye(4), [0.0, 1.0])


class TestAdoScale:
    @pytest.mark.parametrize("alpha", (1.0, 2j, 0.5 - 0.5j))
    def test_physical_block_invariant(self, hierarchy, occupied, alpha):
        times = np.linspace(0, 3, 4)
        reference = evolve_heom(hierarchy, occupied, times, method="expm")
        scaled = evolve_heom(
            rescale_ados(hierarchy, alpha), occupied, times, method="expm"
        )
        assert np.allclose(reference.blocks, scaled.blocks, atol=1e-10)

    def test_rescaled_snapshot(self, hierarchy, occupied):
        other = rescale_ados(hierarchy, 2j)
        final = evolve_heom(hierarchy, occupied, [0.0, 1.5], method="expm").final_state
        direct = evolve_heom(other, occupied, [0.0, 1.5], method="expm").final_state
        assert np.allclose(final.rescaled(other).vector, direct.vector, atol=1e-10)
        snapshot = direct.snapshot()
        assert snapshot["alpha"] == [0.0, 2.0]
        assert set(snapshot["blocks"]) == {str(label) for label in other.labels}
        assert len(snapshot["blocks"]["()"]) == 2


# nine evenly spaced modes on [-4, 4] standing in for a flat band of rate 0.1
BAND_GAMMA = 0.1
BAND_ENERGIES = np.linspace(-4.0, 4.0, 9)
BAND_OCCUPATION = 0.3


def flat_band(beta):
    spacing = BAND_ENERGIES[1] - BAND_ENERGIES[0]
    g = math.sqrt(BAND_GAMMA * spacing / math.pi)
    # chemical potential placing the system level at the target occupation
    mu = SYSTEM_ENERGY - math.log(1 / BAND_OCCUPATION - 1) / beta
    return BathSpec(DiscreteDensity(tuple((g, w) for w in BAND_ENERGIES)), beta, mu)


@pytest.mark.slow
class TestMarkovLimit:
    @pytest.mark.parametrize("beta,depth", ((0.05, 2), (0.2, 2), (0.05, 4)))
    def test_flat_band_matches_lindblad(
        self, system_hamiltonian, coupling, occupied, beta, depth
    ):
        bath = flat_band(beta)
        hierarchy = build_hierarchy(
            decompose_discrete(bath), coupling, system_hamiltonian, depth=depth
        )
        n0 = fermi_dirac(SYSTEM_ENERGY, beta, bath.mu)
        assert n0 == pytest.approx(BAND_OCCUPATION)
        generator = build_generator(system_hamiltonian, coupling, BAND_GAMMA, n0)
        times = np.linspace(0, 5, 11)
        trajectory = evolve_heom(hierarchy, occupied, times)
        markov = evolve_lindblad(generator, occupied, times)
        # the finite band and mode spacing leave a few percent of deviation
        for rho, expected in zip(trajectory.densities(), markov):
            assert rho.trace_distance(expected) < 0.03


class TestTrajectoryCsv:
    def test_write(self, tmp_path):
        path = tmp_path / "trajectory.csv"
        blocks = np.array([np.eye(2), [[0.5, 0.1j], [-0.1j, 0.5]]], dtype=complex)
        write_trajectory_csv(path, [0.0, 0.25], blocks)
        with open(path) as handle:
            rows = list(csv.reader(handle))
        assert rows[0][:3] == ["t", "rho_0_0_re", "rho_0_0_im"]
        assert len(rows[0]) == 9
        assert rows[2][0] == "0.25"
        assert float(rows[2][4]) == pytest.approx(0.1)
        assert len(rows) == 3

    def test_trajectory_to_csv(self, tmp_path, hierarchy, occupied):
        path = tmp_path / "trajectory.csv"
        evolve_heom(hierarchy, occupied, [0.0, 1.0, 2.0]).to_csv(path)
        with open(path) as handle:
            assert len(handle.read().splitlines()) == 4
