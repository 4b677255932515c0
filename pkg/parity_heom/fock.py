"""
Fermionic Fock spaces in the occupation-number basis.

Basis states are integer bitmasks with mode k stored at bit k, in ascending
order. Operators use the Jordan-Wigner encoding: mode 0 is the leftmost
string factor, so the sign string of c_k runs over the lower-indexed modes
0..k-1. Operators are stored sparse, density matrices dense.

"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union, overload

import numpy as np
import numpy.typing as npt
from scipy import sparse

from .bath import fermi_dirac
from .exceptions import DimensionMismatch, ModeIndexError

logger = logging.getLogger(__name__)

ComplexArray = npt.NDArray[np.complex128]

# (i, j, value) triples used for hopping and density-density terms
PairTerm = Tuple[int, int, Union[float, complex]]


class Sector(str, enum.Enum):
    """Fermionic parity sector of an operator or state."""

    EVEN = "even"
    ODD = "odd"

    @property
    def sign(self) -> int:
        return 1 if self is Sector.EVEN else -1


def popcount_signs(values: npt.NDArray[np.int64], n_bits: int) -> npt.NDArray[np.int64]:
    """Return (-1)**popcount(v) for each v, looking at the lowest n_bits bits."""
    bits = np.zeros_like(values)
    for bit in range(n_bits):
        bits ^= (values >> bit) & 1
    return 1 - 2 * bits


@dataclass(frozen=True)
class FockSpace:
    """Fock space of n_modes fermionic modes, dimension 2**n_modes."""

    n_modes: int

    def __post_init__(self) -> None:
        if self.n_modes < 1:
            raise ModeIndexError(
                f"A Fock space needs at least one mode (got {self.n_modes})."
            )

    @property
    def dim(self) -> int:
        return 1 << self.n_modes

    def check_mode(self, mode: int) -> None:
        """Raise ModeIndexError if mode is not in 0..n_modes-1."""
        if not 0 <= mode < self.n_modes:
            raise ModeIndexError(
                f"Mode {mode} is out of range for {self.n_modes} mode(s)."
            )

    def parities(self) -> npt.NDArray[np.int64]:
        """Return the parity (+1/-1) of every basis state."""
        return popcount_signs(np.arange(self.dim), self.n_modes)

    def identity(self) -> FockOperator:
        matrix = sparse.identity(self.dim, dtype=complex, format="csr")
        return FockOperator(self, matrix)

    def zero(self) -> FockOperator:
        matrix = sparse.csr_matrix((self.dim, self.dim), dtype=complex)
        return FockOperator(self, matrix)


@dataclass(frozen=True, eq=False)
class FockOperator:
    """
    Sparse operator on a FockSpace.

    The matrix is copied to CSR form on construction, with duplicate
    entries summed, and is never mutated afterwards.

    """

    space: FockSpace
    matrix: sparse.csr_matrix

    # numpy scalars defer to __rmul__
    __array_ufunc__ = None

    def __post_init__(self) -> None:
        matrix = sparse.csr_matrix(self.matrix, dtype=complex, copy=True)
        if matrix.shape != (self.space.dim, self.space.dim):
            raise DimensionMismatch(
                f"Operator shape {matrix.shape} does not match "
                f"Fock space dimension {self.space.dim}."
            )
        matrix.sum_duplicates()
        object.__setattr__(self, "matrix", matrix)

    def _check_space(self, other: FockOperator) -> None:
        if other.space != self.space:
            raise DimensionMismatch(
                f"Operators act on different spaces ({self.space} vs {other.space})."
            )

    def __add__(self, other: FockOperator) -> FockOperator:
        self._check_space(other)
        return FockOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: FockOperator) -> FockOperator:
        self._check_space(other)
        return FockOperator(self.space, self.matrix - other.matrix)

    def __neg__(self) -> FockOperator:
        return FockOperator(self.space, -self.matrix)

    def __matmul__(self, other: FockOperator) -> FockOperator:
        self._check_space(other)
        return FockOperator(self.space, self.matrix @ other.matrix)

    def __mul__(self, scalar: complex) -> FockOperator:
        return FockOperator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def adjoint(self) -> FockOperator:
        return FockOperator(self.space, self.matrix.conj().T)

    def toarray(self) -> ComplexArray:
        return np.asarray(self.matrix.toarray(), dtype=complex)

    def norm(self) -> float:
        """Max-norm (largest absolute entry)."""
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix).max())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return (self - self.adjoint()).norm() <= tol

    def sector(self, tol: float = 1e-12) -> Sector | None:
        """Return the parity sector of the operator, or None if it is mixed."""
        if parity_project(self, Sector.ODD).norm() <= tol:
            return Sector.EVEN
        if parity_project(self, Sector.EVEN).norm() <= tol:
            return Sector.ODD
        return None


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """
    Dense operator on a FockSpace used as a (generalized) state.

    Physical states are even, Hermitian, unit-trace and positive; odd-sector
    objects such as B rho carry no trace or positivity constraint, so the
    constructor only checks the shape.

    """

    space: FockSpace
    matrix: ComplexArray

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.shape != (self.space.dim, self.space.dim):
            raise DimensionMismatch(
                f"State shape {matrix.shape} does not match "
                f"Fock space dimension {self.space.dim}."
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def expectation(self, op: FockOperator) -> complex:
        """Return Tr[op rho]."""
        if op.space != self.space:
            raise DimensionMismatch("Operator and state act on different spaces.")
        return complex(np.trace(op.matrix @ self.matrix))

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)

    def sector_norms(self) -> tuple[float, float]:
        """Frobenius norms of the even and odd parts."""
        mask = sector_mask(self.space, Sector.EVEN)
        even = float(np.linalg.norm(np.where(mask, self.matrix, 0)))
        odd = float(np.linalg.norm(np.where(mask, 0, self.matrix)))
        return even, odd

    def is_physical(self, tol: float = 1e-8) -> bool:
        """Return True for an even, Hermitian, unit-trace, positive state."""
        if self.sector_norms()[1] > tol or not self.is_hermitian(tol):
            return False
        if abs(self.trace() - 1) > tol:
            return False
        return bool(np.linalg.eigvalsh(self.matrix).min() >= -tol)

    def trace_distance(self, other: DensityMatrix) -> float:
        """Half the trace norm of the difference."""
        if other.space != self.space:
            raise DimensionMismatch("States act on different spaces.")
        return 0.5 * float(np.linalg.norm(self.matrix - other.matrix, "nuc"))


def sector_mask(space: FockSpace, sector: Sector | str) -> npt.NDArray[np.bool_]:
    """Boolean dim x dim mask of the matrix elements belonging to sector."""
    parities = space.parities()
    same = np.equal.outer(parities, parities)
    return same if Sector(sector) is Sector.EVEN else ~same


def annihilation_op(space: FockSpace, mode: int) -> FockOperator:
    space.check_mode(mode)
    states = np.arange(space.dim)
    occupied = states[((states >> mode) & 1) == 1]
    signs = popcount_signs(occupied & ((1 << mode) - 1), mode)
    matrix = sparse.csr_matrix(
        (signs.astype(complex), (occupied ^ (1 << mode), occupied)),
        shape=(space.dim, space.dim),
    )
    return FockOperator(space, matrix)


def creation_op(space: FockSpace, mode: int) -> FockOperator:
    return annihilation_op(space, mode).adjoint()


def number_op(space: FockSpace, mode: int) -> FockOperator:
    return creation_op(space, mode) @ annihilation_op(space, mode)


def parity_op(space: FockSpace) -> FockOperator:
    """Return P = prod_k exp(i pi n_k), diagonal with entries (-1)**popcount."""
    diagonal = space.parities().astype(complex)
    return FockOperator(space, sparse.diags(diagonal, format="csr"))


@overload
def parity_project(op: FockOperator, sector: Sector | str) -> FockOperator:
    ...


@overload
def parity_project(op: DensityMatrix, sector: Sector | str) -> DensityMatrix:
    ...


def parity_project(
    op: FockOperator | DensityMatrix, sector: Sector | str
) -> FockOperator | DensityMatrix:
    """
    Return the even or odd part of op.

    The even part P^e O P^e + P^o O P^o keeps the elements between basis
    states of equal parity; the odd part keeps the remaining ones.

    """
    sector = Sector(sector)
    if isinstance(op, DensityMatrix):
        mask = sector_mask(op.space, sector)
        return DensityMatrix(op.space, np.where(mask, op.matrix, 0))
    parities = op.space.parities()
    coo = op.matrix.tocoo()
    keep = parities[coo.row] == parities[coo.col]
    if sector is Sector.ODD:
        keep = ~keep
    matrix = sparse.csr_matrix(
        (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=coo.shape
    )
    return FockOperator(op.space, matrix)


def quadratic_hamiltonian(
    space: FockSpace,
    energies: Sequence[float],
    hoppings: Sequence[PairTerm] = (),
    interactions: Sequence[PairTerm] = (),
) -> FockOperator:
    """
    Build sum_k e_k n_k + sum (t c_i^dag c_j + h.c.) + sum U n_i n_j.

    Every term conserves particle number, so the result is even.

    """
    if len(energies) != space.n_modes:
        raise DimensionMismatch(
            f"Expected {space.n_modes} mode energies, got {len(energies)}."
        )
    hamiltonian = space.zero()
    for mode, energy in enumerate(energies):
        hamiltonian = hamiltonian + float(energy) * number_op(space, mode)
    for i, j, amplitude in hoppings:
        if i == j:
            raise ModeIndexError(f"Hopping term ({i}, {j}) must join two modes.")
        term = complex(amplitude) * (creation_op(space, i) @ annihilation_op(space, j))
        hamiltonian = hamiltonian + term + term.adjoint()
    for i, j, strength in interactions:
        if i == j:
            raise ModeIndexError(f"Interaction term ({i}, {j}) must join two modes.")
        hamiltonian = hamiltonian + float(strength) * (
            number_op(space, i) @ number_op(space, j)
        )
    return hamiltonian


def basis_state(space: FockSpace, occupations: Sequence[int]) -> DensityMatrix:
    """Return |n><n| for the occupation pattern n (mode k at position k)."""
    if len(occupations) != space.n_modes:
        raise DimensionMismatch(
            f"Expected {space.n_modes} occupations, got {len(occupations)}."
        )
    index = sum(int(bool(n)) << k for k, n in enumerate(occupations))
    matrix = np.zeros((space.dim, space.dim), dtype=complex)
    matrix[index, index] = 1.0
    return DensityMatrix(space, matrix)


def thermal_state(
    space: FockSpace, energies: Sequence[float], beta: float, mu: float = 0.0
) -> DensityMatrix:
    """
    Return the product equilibrium state of independent modes.

    Each mode k is occupied with probability fermi_dirac(energies[k], beta,
    mu). beta = math.inf is the zero-temperature limit and yields a pure
    filled/empty product state.

    """
    if len(energies) != space.n_modes:
        raise DimensionMismatch(
            f"Expected {space.n_modes} mode energies, got {len(energies)}."
        )
    states = np.arange(space.dim)
    probabilities = np.ones(space.dim)
    for mode, energy in enumerate(energies):
        occupation = fermi_dirac(energy, beta, mu)
        filled = ((states >> mode) & 1) == 1
        probabilities *= np.where(filled, occupation, 1.0 - occupation)
    return DensityMatrix(space, np.diag(probabilities).astype(complex))
