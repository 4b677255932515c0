import itertools

import numpy as np
import pytest

from parity_heom.bath import (
    BathSpec,
    DiscreteDensity,
    LorentzianDensity,
    decompose_discrete,
    fermi_dirac,
)
from parity_heom.exceptions import (
    DimensionMismatch,
    OracleSizeError,
    ParityError,
    ParityHeomError,
    UnsupportedBath,
    WickError,
)
from parity_heom.fock import (
    DensityMatrix,
    FockOperator,
    FockSpace,
    annihilation_op,
    creation_op,
    number_op,
)
from parity_heom.heom import build_hierarchy, evolve_heom
from parity_heom.oracle import (
    BathField,
    SuperCorrelationQuery,
    build_composite,
    crossing_sign,
    dyson_reduced,
    evolve_exact,
    exact_correlation,
    pairings,
    plain_partial_trace,
    reduce_parity_aware,
    super_correlation,
    wick_pairing_sum,
)

from .conftest import BENCHMARK_BETA, BENCHMARK_MODES

WICK_MODES = ((0.3, 0.5), (0.7, -1.1))


@pytest.fixture
def model(system_hamiltonian, coupling, occupied):
    return build_composite(
        BENCHMARK_MODES, system_hamiltonian, coupling, BENCHMARK_BETA, 0.0, occupied
    )


@pytest.fixture
def wick_bath():
    return BathSpec(DiscreteDensity(WICK_MODES), 1.5, 0.2)


def random_fields(rng, count):
    return tuple(
        BathField(int(rng.choice((1, -1))), int(rng.choice((1, -1))), float(t))
        for t in rng.uniform(0, 3, size=count)
    )


class TestBuildComposite:
    def test_dimensions(self, model):
        assert model.space == FockSpace(4)
        assert model.env_space == FockSpace(3)
        assert model.hamiltonian.is_hermitian()
        assert model.initial_state.trace() == pytest.approx(1.0)

    def test_mode_cap(self, system_hamiltonian, coupling, occupied):
        modes = [(0.1, 0.1 * k) for k in range(12)]
        with pytest.raises(OracleSizeError):
            build_composite(modes, system_hamiltonian, coupling, 1.0, 0.0, occupied)

    def test_odd_hamiltonian(self, coupling, occupied):
        with pytest.raises(ParityError):
            build_composite(
                BENCHMARK_MODES,
                coupling + coupling.adjoint(),
                coupling,
                1.0,
                0.0,
                occupied,
            )

    def test_even_coupling(self, system_hamiltonian, space, occupied):
        with pytest.raises(ParityError):
            build_composite(
                BENCHMARK_MODES,
                system_hamiltonian,
                number_op(space, 0),
                1.0,
                0.0,
                occupied,
            )

    def test_space_mismatch(self, system_hamiltonian, coupling):
        with pytest.raises(DimensionMismatch):
            build_composite(
                BENCHMARK_MODES,
                system_hamiltonian,
                coupling,
                1.0,
                0.0,
                DensityMatrix(FockSpace(2), np.eye(4) / 4),
            )

    def test_embedded_ladder_operator(self, model, coupling):
        # environment modes occupy the low bits of the global index
        embedded = model.embed_system(coupling).toarray()
        assert np.allclose(embedded, annihilation_op(model.space, 3).toarray())

    def test_embedded_environment_mode(self, model):
        mode = annihilation_op(model.env_space, 1)
        embedded = model.embed_environment(mode).toarray()
        assert np.allclose(embedded, annihilation_op(model.space, 1).toarray())

    def test_embed__wrong_space(self, model):
        with pytest.raises(DimensionMismatch):
            model.embed_system(annihilation_op(FockSpace(2), 0))

    def test_initial_state_reduces(self, model, occupied):
        for reduce in (reduce_parity_aware, plain_partial_trace):
            reduced = reduce(model, model.initial_state)
            assert np.allclose(reduced.matrix, occupied.matrix)

    def test_environment_is_thermal(self, model):
        for k, (_, energy) in enumerate(BENCHMARK_MODES):
            occupation = model.env_state.expectation(number_op(model.env_space, k))
            assert occupation == pytest.approx(fermi_dirac(energy, BENCHMARK_BETA))


class TestReduction:
    def test_plain_trace_loses_odd_objects(self, space):
        # an odd system object next to an infinite-temperature environment
        seeded = DensityMatrix(space, creation_op(space, 0).toarray())
        model = build_composite(
            [(0.0, 0.0)],
            0.0 * number_op(space, 0),
            annihilation_op(space, 0),
            0.0,
            0.0,
            seeded,
        )
        plain = plain_partial_trace(model, model.initial_state)
        corrected = reduce_parity_aware(model, model.initial_state)
        assert np.allclose(plain.matrix, 0)
        assert np.allclose(corrected.matrix, seeded.matrix)

    def test_expectation_consistency(self, model, rng):
        dim = model.space.dim
        rho_full = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        reduced = reduce_parity_aware(model, rho_full).matrix
        for _ in range(50):
            a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            embedded = model.embed_system(FockOperator(model.sys_space, a)).toarray()
            assert np.trace(a @ reduced) == pytest.approx(np.trace(embedded @ rho_full))

    def test_evolved_state(self, model):
        reduced = reduce_parity_aware(model, evolve_exact(model, 3.0))
        assert reduced.is_physical()
        assert reduced.trace() == pytest.approx(1.0)

    def test_shape(self, model):
        with pytest.raises(DimensionMismatch):
            reduce_parity_aware(model, np.eye(4))


class TestExactCorrelation:
    def test_at_zero(self, model, space):
        # <c c^dag> in the occupied state vanishes
        c, cdag = annihilation_op(space, 0), creation_op(space, 0)
        values = exact_correlation(model, c, cdag, [0.0])
        assert values[0] == pytest.approx(0.0)

    def test_number(self, model, space):
        n = number_op(space, 0)
        values = exact_correlation(model, n, n, [0.0])
        assert values[0] == pytest.approx(1.0)

    def test_decoupled(self, space, empty):
        hamiltonian = 0.8 * number_op(space, 0)
        c, cdag = annihilation_op(space, 0), creation_op(space, 0)
        model = build_composite([(0.0, 1.0)], hamiltonian, c, 1.0, 0.0, empty)
        times = np.linspace(0, 5, 11)
        values = exact_correlation(model, c, cdag, times)
        assert np.allclose(values, np.exp(-0.8j * times))


class TestSuperCorrelation:
    def test_two_point(self, wick_bath):
        query = SuperCorrelationQuery((BathField(-1, 1, 1.3), BathField(1, 1, 0.4)))
        expected = sum(
            g**2 * (1 - fermi_dirac(w, 1.5, 0.2)) * np.exp(-1j * w * 0.9)
            for g, w in WICK_MODES
        )
        assert super_correlation(wick_bath, query) == pytest.approx(expected)

    def test_time_ordering_sign(self, wick_bath):
        early, late = BathField(1, 1, 0.4), BathField(-1, 1, 1.3)
        early_first = SuperCorrelationQuery((early, late))
        late_first = SuperCorrelationQuery((late, early))
        assert super_correlation(wick_bath, early_first) == pytest.approx(
            -super_correlation(wick_bath, late_first)
        )

    def test_odd_count(self, wick_bath):
        query = SuperCorrelationQuery((BathField(1, 1, 0.4),))
        assert super_correlation(wick_bath, query) == 0
        with pytest.raises(WickError):
            wick_pairing_sum(wick_bath, query)

    @pytest.mark.parametrize(
        "fields",
        (
            (),
            ((2, 1, 0.0), (1, 1, 0.0)),
            ((1, 0, 0.0), (1, 1, 0.0)),
            ((1, 1, float("nan")), (1, 1, 0.0)),
        ),
    )
    def test_invalid_query(self, fields):
        with pytest.raises(ParityHeomError):
            SuperCorrelationQuery(fields)

    def test_continuum_bath(self):
        query = SuperCorrelationQuery((BathField(1, 1, 0.4), BathField(-1, 1, 0.0)))
        with pytest.raises(UnsupportedBath):
            super_correlation(BathSpec(LorentzianDensity(0.1, 1.0), 1.0), query)


class TestWick:
    def test_pairings(self):
        assert len(list(pairings((0, 1, 2, 3)))) == 3
        assert len(list(pairings(tuple(range(6))))) == 15
        assert list(pairings(())) == [[]]

    @pytest.mark.parametrize(
        "pairing,sign",
        (
            ([(0, 1), (2, 3)], 1),
            ([(0, 2), (1, 3)], -1),
            ([(0, 3), (1, 2)], 1),
            ([(0, 3), (1, 4), (2, 5)], -1),
        ),
    )
    def test_crossing_sign(self, pairing, sign):
        assert crossing_sign(pairing) == sign

    def test_four_point__all_patterns(self, wick_bath):
        times = (1.3, 0.9, 0.4, 0.1)
        for pattern in itertools.product((1, -1), repeat=8):
            fields = tuple(
                BathField(pattern[2 * i], pattern[2 * i + 1], t)
                for i, t in enumerate(times)
            )
            query = SuperCorrelationQuery(fields)
            assert super_correlation(wick_bath, query) == pytest.approx(
                wick_pairing_sum(wick_bath, query), abs=1e-12
            )

    def test_four_point__unordered_times(self, wick_bath, rng):
        for _ in range(20):
            query = SuperCorrelationQuery(random_fields(rng, 4))
            assert super_correlation(wick_bath, query) == pytest.approx(
                wick_pairing_sum(wick_bath, query), abs=1e-12
            )

    def test_six_point(self, wick_bath, rng):
        for _ in range(20):
            query = SuperCorrelationQuery(random_fields(rng, 6))
            assert super_correlation(wick_bath, query) == pytest.approx(
                wick_pairing_sum(wick_bath, query), abs=1e-12
            )


class TestDyson:
    def test_zeroth_order(self, model, occupied):
        assert np.allclose(dyson_reduced(model, 0, 0.5).matrix, occupied.matrix)

    def test_first_order_vanishes(self, model):
        first = dyson_reduced(model, 1, 0.5).matrix
        assert np.allclose(first, dyson_reduced(model, 0, 0.5).matrix)

    def test_second_order(self, model):
        exact = reduce_parity_aware(model, evolve_exact(model, 0.5)).matrix
        second = dyson_reduced(model, 2, 0.5).matrix
        zeroth = dyson_reduced(model, 0, 0.5).matrix
        assert np.max(np.abs(exact - second)) < 1e-5
        assert np.max(np.abs(exact - zeroth)) > 1e-4

    def test_second_order__unit_time(self, model):
        exact = reduce_parity_aware(model, evolve_exact(model, 1.0)).matrix
        second = np.max(np.abs(exact - dyson_reduced(model, 2, 1.0).matrix))
        zeroth = np.max(np.abs(exact - dyson_reduced(model, 0, 1.0).matrix))
        assert second < 1e-4
        assert second < 0.02 * zeroth

    def test_second_order__error_scales_with_coupling(
        self, system_hamiltonian, coupling, occupied
    ):
        # the leading omitted term is fourth order in g
        def error(scale):
            modes = [(scale * g, w) for g, w in BENCHMARK_MODES]
            model = build_composite(
                modes, system_hamiltonian, coupling, BENCHMARK_BETA, 0.0, occupied
            )
            exact = reduce_parity_aware(model, evolve_exact(model, 1.0)).matrix
            return np.max(np.abs(exact - dyson_reduced(model, 2, 1.0).matrix))

        assert error(1.0) / error(0.5) > 8

    def test_second_order__matches_heom(
        self, model, benchmark_bath, coupling, system_hamiltonian, occupied
    ):
        hierarchy = build_hierarchy(
            decompose_discrete(benchmark_bath), coupling, system_hamiltonian, depth=6
        )
        trajectory = evolve_heom(hierarchy, occupied, [0.0, 1.0], method="expm")
        heom = trajectory.densities()[-1]
        exact = reduce_parity_aware(model, evolve_exact(model, 1.0))
        second = dyson_reduced(model, 2, 1.0)
        assert heom.trace_distance(exact) < 1e-8
        assert heom.trace_distance(second) < 1e-4
        assert heom.trace_distance(second) < 0.02 * heom.trace_distance(occupied)

    def test_order(self, model):
        with pytest.raises(ParityHeomError):
            dyson_reduced(model, 3, 0.5)
