"""
Exact reference engines for small models.

The composite system + discrete bath is diagonalized densely. Global
Jordan-Wigner order puts the environment modes first (bits 0..N_E-1) and
the system modes after them, so a global basis index is w + 2**N_E v for
environment configuration w and system configuration v. Odd system
operators then carry the environment parity: s -> s kron P_E.

"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, NamedTuple, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import linalg, sparse

from . import settings
from .bath import BathSpec, DiscreteDensity
from .exceptions import (
    DimensionMismatch,
    HamiltonianError,
    OracleSizeError,
    ParityHeomError,
    UnsupportedBath,
    WickError,
)
from .fock import (
    ComplexArray,
    DensityMatrix,
    FockOperator,
    FockSpace,
    Sector,
    annihilation_op,
    parity_op,
    parity_project,
    thermal_state,
)
from .superop import make_W_kernel, require_even, require_odd

logger = logging.getLogger(__name__)

BathModes = Union[DiscreteDensity, Sequence[Tuple[float, float]]]


def _discrete(modes: BathModes) -> DiscreteDensity:
    if isinstance(modes, DiscreteDensity):
        return modes
    return DiscreteDensity(tuple(modes))


@dataclass(frozen=True, eq=False)
class CompositeModel:
    env_space: FockSpace
    sys_space: FockSpace
    space: FockSpace
    bath: DiscreteDensity
    beta: float
    mu: float
    system_hamiltonian: FockOperator
    coupling: FockOperator
    hamiltonian: FockOperator
    interaction: FockOperator
    env_state: DensityMatrix
    system_state: DensityMatrix
    initial_state: DensityMatrix

    @cached_property
    def _eigensystem(self) -> tuple[npt.NDArray[np.float64], ComplexArray]:
        logger.debug(
            "Diagonalizing the %d-dimensional composite Hamiltonian", self.space.dim
        )
        energies, vectors = np.linalg.eigh(self.hamiltonian.toarray())
        return energies, vectors

    def propagator(self, t: float) -> ComplexArray:
        """U(t) = exp(-i H t)."""
        energies, vectors = self._eigensystem
        return (vectors * np.exp(-1j * energies * t)) @ vectors.conj().T

    def embed_system(self, op: FockOperator) -> FockOperator:
        """Global form of a system operator: O^e kron I_E + O^o kron P_E."""
        return _embed_system(op, self.sys_space, self.env_space)

    def embed_environment(self, op: FockOperator) -> FockOperator:
        return _embed_environment(op, self.sys_space, self.env_space)


def _embed_system(
    op: FockOperator, sys_space: FockSpace, env_space: FockSpace
) -> FockOperator:
    if op.space != sys_space:
        raise DimensionMismatch("Operator does not act on the system space.")
    even = parity_project(op, Sector.EVEN).matrix
    odd = parity_project(op, Sector.ODD).matrix
    identity = sparse.identity(env_space.dim, dtype=complex, format="csr")
    env_parity = parity_op(env_space).matrix
    return FockOperator(
        FockSpace(sys_space.n_modes + env_space.n_modes),
        sparse.kron(even, identity) + sparse.kron(odd, env_parity),
    )


def _embed_environment(
    op: FockOperator, sys_space: FockSpace, env_space: FockSpace
) -> FockOperator:
    if op.space != env_space:
        raise DimensionMismatch("Operator does not act on the environment space.")
    identity = sparse.identity(sys_space.dim, dtype=complex, format="csr")
    return FockOperator(
        FockSpace(sys_space.n_modes + env_space.n_modes),
        sparse.kron(identity, op.matrix),
    )


def build_composite(
    modes: BathModes,
    system_hamiltonian: FockOperator,
    s: FockOperator,
    beta: float,
    mu: float,
    system_state: DensityMatrix,
) -> CompositeModel:
    """
    Build H = H_S + H_E + H_I for a system coupled to discrete bath modes.

    H_E = sum_k w_k c_k^dag c_k and H_I = sum_k g_k (s c_k^dag - s^dag c_k);
    the initial state is rho_E^eq times the embedded rho_S(0).

    """
    bath = _discrete(modes)
    sys_space = system_hamiltonian.space
    if s.space != sys_space or system_state.space != sys_space:
        raise DimensionMismatch(
            "H_S, s and rho_S(0) must act on the same system space."
        )
    n_env = len(bath.modes)
    total = n_env + sys_space.n_modes
    if total > settings.MAX_ORACLE_MODES:
        raise OracleSizeError(
            f"The composite model has {total} modes; "
            f"the exact oracle allows {settings.MAX_ORACLE_MODES}."
        )
    require_even(system_hamiltonian, "system Hamiltonian")
    require_odd(s)
    env_space = FockSpace(n_env)
    space = FockSpace(total)
    env_state = thermal_state(env_space, bath.energies, beta, mu)
    s_global = _embed_system(s, sys_space, env_space)
    interaction = space.zero()
    env_hamiltonian = space.zero()
    for k, (coupling, energy) in enumerate(bath.modes):
        c_k = _embed_environment(annihilation_op(env_space, k), sys_space, env_space)
        env_hamiltonian = env_hamiltonian + energy * (c_k.adjoint() @ c_k)
        interaction = interaction + coupling * (
            s_global @ c_k.adjoint() - s_global.adjoint() @ c_k
        )
    system_global_h = _embed_system(system_hamiltonian, sys_space, env_space)
    hamiltonian = system_global_h + env_hamiltonian + interaction
    if not hamiltonian.is_hermitian():
        raise HamiltonianError("The composite Hamiltonian is not Hermitian.")
    env_operator = FockOperator(env_space, sparse.csr_matrix(env_state.matrix))
    env_global = _embed_environment(env_operator, sys_space, env_space).toarray()
    system_operator = FockOperator(sys_space, sparse.csr_matrix(system_state.matrix))
    system_global = _embed_system(system_operator, sys_space, env_space).toarray()
    initial = env_global @ system_global
    return CompositeModel(
        env_space=env_space,
        sys_space=sys_space,
        space=space,
        bath=bath,
        beta=beta,
        mu=mu,
        system_hamiltonian=system_hamiltonian,
        coupling=s,
        hamiltonian=hamiltonian,
        interaction=interaction,
        env_state=env_state,
        system_state=system_state,
        initial_state=DensityMatrix(space, initial),
    )


def evolve_exact(model: CompositeModel, t: float) -> DensityMatrix:
    matrix = evolve_operator(model, model.initial_state.matrix, t)
    return DensityMatrix(model.space, matrix)


def evolve_operator(
    model: CompositeModel, operator: npt.ArrayLike, t: float
) -> ComplexArray:
    """U X U^dag for any global matrix X."""
    propagator = model.propagator(t)
    return propagator @ np.asarray(operator, dtype=complex) @ propagator.conj().T


def exact_correlation(
    model: CompositeModel, a: FockOperator, b: FockOperator, t_grid: Sequence[float]
) -> ComplexArray:
    """Tr[A U (B rho(0)) U^dag] in the full space, for system operators A and B."""
    a_global = model.embed_system(a).toarray()
    seeded = model.embed_system(b).toarray() @ model.initial_state.matrix
    return np.array(
        [np.trace(a_global @ evolve_operator(model, seeded, float(t))) for t in t_grid]
    )


def _system_tensor(
    model: CompositeModel, rho_full: DensityMatrix | npt.ArrayLike
) -> ComplexArray:
    if isinstance(rho_full, DensityMatrix):
        matrix = rho_full.matrix
    else:
        matrix = np.asarray(rho_full, dtype=complex)
    if matrix.shape != (model.space.dim, model.space.dim):
        raise DimensionMismatch(
            f"State shape {matrix.shape} does not match the composite space."
        )
    d_sys, d_env = model.sys_space.dim, model.env_space.dim
    return matrix.reshape(d_sys, d_env, d_sys, d_env)


def plain_partial_trace(
    model: CompositeModel, rho_full: DensityMatrix | npt.ArrayLike
) -> DensityMatrix:
    """Tr_E without parity weights."""
    traced = np.einsum("awbw->ab", _system_tensor(model, rho_full))
    return DensityMatrix(model.sys_space, traced)


def reduce_parity_aware(
    model: CompositeModel, rho_full: DensityMatrix | npt.ArrayLike
) -> DensityMatrix:
    """
    Reduced system operator with the parity-corrected trace.

    Elements between system states of equal parity use Tr_E; elements
    between states of opposite parity use Tr_E[P_E .], which is the weight
    (-1)**|w| on the traced environment configuration w.

    """
    tensor = _system_tensor(model, rho_full)
    plain = np.einsum("awbw->ab", tensor)
    weighted = np.einsum("awbw,w->ab", tensor, model.env_space.parities())
    sys_parities = model.sys_space.parities()
    same = np.equal.outer(sys_parities, sys_parities)
    return DensityMatrix(model.sys_space, np.where(same, plain, weighted))


class BathField(NamedTuple):
    """lam = +1 for B^dag, -1 for B; q = +1 acts from the left, -1 from the right."""

    lam: int
    q: int
    time: float


@dataclass(frozen=True)
class SuperCorrelationQuery:
    fields: Tuple[BathField, ...]

    def __post_init__(self) -> None:
        fields = tuple(
            BathField(int(lam), int(q), float(t)) for lam, q, t in self.fields
        )
        if not fields:
            raise ParityHeomError("A correlation query needs at least one field.")
        for field in fields:
            if field.lam not in (1, -1) or field.q not in (1, -1):
                raise ParityHeomError(f"Field {field} must have lam and q in (+1, -1).")
            if not math.isfinite(field.time):
                raise ParityHeomError(f"Field {field} has a non-finite time.")
        object.__setattr__(self, "fields", fields)

    def __len__(self) -> int:
        return len(self.fields)


def _bath_operators(
    bath: BathSpec,
) -> tuple[DiscreteDensity, FockSpace, list[ComplexArray], ComplexArray, ComplexArray]:
    density = bath.density
    if not isinstance(density, DiscreteDensity):
        raise UnsupportedBath(
            f"Direct bath correlations need a discrete bath, not {density.kind}."
        )
    if len(density.modes) > settings.MAX_ORACLE_MODES:
        raise OracleSizeError(f"{len(density.modes)} bath modes exceed the oracle cap.")
    space = FockSpace(len(density.modes))
    annihilators = [annihilation_op(space, k).toarray() for k in range(space.n_modes)]
    parity = parity_op(space).toarray()
    rho = thermal_state(space, density.energies, bath.beta, bath.mu).matrix
    return density, space, annihilators, parity, rho


def _permutation_sign(order: Sequence[int]) -> int:
    inversions = sum(1 for i, j in itertools.combinations(order, 2) if i > j)
    return -1 if inversions % 2 else 1


def super_correlation(bath: BathSpec, query: SuperCorrelationQuery) -> complex:
    """
    Tr_E[T B^{lam_n}_{q_n} ... B^{lam_1}_{q_1} rho_E^eq] by dense evaluation.

    B^{+1}(t) = sum_k g_k c_k^dag exp(i w_k t), B^{-1}(t) = sum_k g_k c_k exp(-i w_k t);
    q = +1 multiplies from the left, q = -1 maps X to P_E X B P_E. Fields
    are written left to right; the time ordering moves later times to the
    left with the sign of the permutation (ties keep the written order).

    """
    if len(query) % 2:
        return 0j
    density, _, annihilators, parity, rho = _bath_operators(bath)
    fields = query.fields
    order = sorted(range(len(fields)), key=lambda i: -fields[i].time)
    state = rho
    for position in reversed(order):
        lam, q, t = fields[position]
        operator = sum(
            g * np.exp(-1j * w * t) * c
            for (g, w), c in zip(density.modes, annihilators)
        )
        if lam == 1:
            operator = np.asarray(operator).conj().T
        state = operator @ state if q == 1 else parity @ (state @ operator) @ parity
    return complex(_permutation_sign(order) * np.trace(state))


def pairings(positions: Sequence[int]) -> Iterator[list[tuple[int, int]]]:
    """Yield every perfect matching of positions, pairs in ascending order."""
    if not positions:
        yield []
        return
    first, rest = positions[0], positions[1:]
    for index, partner in enumerate(rest):
        remaining = rest[:index] + rest[index + 1 :]
        for tail in pairings(remaining):
            yield [(first, partner)] + tail


def crossing_sign(pairing: Sequence[tuple[int, int]]) -> int:
    """(-1)**(number of crossing pairs) of a pairing diagram."""
    crossings = sum(
        1
        for (a, b), (c, d) in itertools.combinations(pairing, 2)
        if a < c < b < d or c < a < d < b
    )
    return -1 if crossings % 2 else 1


def wick_pairing_sum(bath: BathSpec, query: SuperCorrelationQuery) -> complex:
    """Sum over full contractions of products of two-point super_correlation values."""
    n = len(query)
    if n % 2:
        raise WickError(f"A pairing sum needs an even number of fields (got {n}).")
    fields = query.fields
    two_point: dict[tuple[int, int], complex] = {}
    total = 0j
    for pairing in pairings(tuple(range(n))):
        term = complex(crossing_sign(pairing))
        for pair in pairing:
            if pair not in two_point:
                i, j = pair
                two_point[pair] = super_correlation(
                    bath, SuperCorrelationQuery((fields[i], fields[j]))
                )
            term *= two_point[pair]
        total += term
    return total


def dyson_reduced(
    model: CompositeModel, order: int, t: float, nodes: int | None = None
) -> DensityMatrix:
    """
    Reduced state from the Dyson series truncated at order <= 2.

    The second-order term integrates the kernel W(t2, t1) applied to
    rho_S(0) over 0 <= t1 <= t2 <= t with Gauss-Legendre nodes, in the
    interaction picture; the result is transformed back with U_S(t). The
    first-order term vanishes.

    """
    if order not in (0, 1, 2):
        raise ParityHeomError(f"Dyson order must be 0, 1 or 2 (got {order}).")
    nodes = settings.DYSON_NODES if nodes is None else nodes
    rho0 = model.system_state.matrix
    interaction_picture = np.array(rho0, dtype=complex)
    if order == 2 and t > 0:
        bath = BathSpec(model.bath, model.beta, model.mu)
        points, weights = np.polynomial.legendre.leggauss(nodes)
        for x2, w2 in zip(points, weights):
            t2 = 0.5 * t * (x2 + 1.0)
            for x1, w1 in zip(points, weights):
                t1 = 0.5 * t2 * (x1 + 1.0)
                kernel = make_W_kernel(
                    None, bath, model.coupling, model.system_hamiltonian, t2, t1
                )
                weight = (0.5 * t * w2) * (0.5 * t2 * w1)
                interaction_picture += weight * kernel.apply(rho0)
    propagator = linalg.expm(-1j * model.system_hamiltonian.toarray() * t)
    return DensityMatrix(
        model.sys_space, propagator @ interaction_picture @ propagator.conj().T
    )


__all__ = [
    "BathField",
    "CompositeModel",
    "SuperCorrelationQuery",
    "build_composite",
    "crossing_sign",
    "dyson_reduced",
    "evolve_exact",
    "evolve_operator",
    "exact_correlation",
    "pairings",
    "plain_partial_trace",
    "reduce_parity_aware",
    "super_correlation",
    "wick_pairing_sum",
]
