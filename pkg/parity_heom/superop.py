"""
Superoperators on vectorized density matrices.

vec stacks columns, so vec(A X B) = (B^T kron A) vec(X); left_mul(A) is
I kron A and right_mul(A) is A^T kron I.

"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import numpy.typing as npt
from scipy import linalg, sparse

from .bath import (
    BathSpec,
    CorrelationDecomposition,
    FlatDensity,
    correlation_exact,
    markov_rates,
)
from .exceptions import DimensionMismatch, ParityError
from .fock import (
    ComplexArray,
    DensityMatrix,
    FockOperator,
    FockSpace,
    Sector,
    parity_op,
    parity_project,
)

OperatorLike = Union[FockOperator, sparse.spmatrix, np.ndarray]


def vec(rho: DensityMatrix | npt.ArrayLike) -> ComplexArray:
    if isinstance(rho, DensityMatrix):
        matrix = rho.matrix
    else:
        matrix = np.asarray(rho, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f"Cannot vectorize an array of shape {matrix.shape}.")
    return np.asarray(matrix, dtype=complex).reshape(-1, order="F")


def unvec_array(vector: npt.ArrayLike) -> ComplexArray:
    values = np.asarray(vector, dtype=complex)
    dim = math.isqrt(values.size)
    if values.ndim != 1 or dim * dim != values.size:
        raise DimensionMismatch(
            f"A vector of length {values.size} is not a vectorized square matrix."
        )
    return values.reshape((dim, dim), order="F")


def unvec(vector: npt.ArrayLike, space: FockSpace | None = None) -> DensityMatrix:
    matrix = unvec_array(vector)
    if space is None:
        n_modes = matrix.shape[0].bit_length() - 1
        if n_modes < 1 or 1 << n_modes != matrix.shape[0]:
            raise DimensionMismatch(
                f"Dimension {matrix.shape[0]} is not a Fock space dimension."
            )
        space = FockSpace(n_modes)
    return DensityMatrix(space, matrix)


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Sparse d**2 x d**2 matrix acting on column-stacked d x d operators."""

    dim: int
    matrix: sparse.csr_matrix

    # numpy scalars defer to __rmul__
    __array_ufunc__ = None

    def __post_init__(self) -> None:
        matrix = sparse.csr_matrix(self.matrix, dtype=complex, copy=True)
        size = self.dim * self.dim
        if matrix.shape != (size, size):
            raise DimensionMismatch(
                f"Superoperator shape {matrix.shape} does not match "
                f"operator dimension {self.dim}."
            )
        matrix.sum_duplicates()
        object.__setattr__(self, "matrix", matrix)

    def _check(self, other: SuperOperator) -> None:
        if other.dim != self.dim:
            raise DimensionMismatch(
                f"Superoperator dimensions differ ({self.dim} vs {other.dim})."
            )

    def __add__(self, other: SuperOperator) -> SuperOperator:
        self._check(other)
        return SuperOperator(self.dim, self.matrix + other.matrix)

    def __sub__(self, other: SuperOperator) -> SuperOperator:
        self._check(other)
        return SuperOperator(self.dim, self.matrix - other.matrix)

    def __neg__(self) -> SuperOperator:
        return SuperOperator(self.dim, -self.matrix)

    def __matmul__(self, other: SuperOperator) -> SuperOperator:
        self._check(other)
        return SuperOperator(self.dim, self.matrix @ other.matrix)

    def __mul__(self, scalar: complex) -> SuperOperator:
        return SuperOperator(self.dim, self.matrix * scalar)

    __rmul__ = __mul__

    def apply(self, rho: DensityMatrix | npt.ArrayLike) -> ComplexArray:
        """Return unvec(M vec(rho)) as a dense matrix."""
        vector = vec(rho)
        if vector.size != self.dim * self.dim:
            raise DimensionMismatch(
                f"Cannot apply a dimension-{self.dim} superoperator to a "
                f"{math.isqrt(vector.size)}-dimensional operator."
            )
        return unvec_array(self.matrix @ vector)

    def toarray(self) -> ComplexArray:
        return np.asarray(self.matrix.toarray(), dtype=complex)

    def norm(self) -> float:
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix).max())


def _as_sparse(op: OperatorLike) -> sparse.csr_matrix:
    if isinstance(op, FockOperator):
        return op.matrix
    return sparse.csr_matrix(op, dtype=complex)


def identity_super(dim: int) -> SuperOperator:
    return SuperOperator(dim, sparse.identity(dim * dim, dtype=complex, format="csr"))


def left_mul(op: OperatorLike) -> SuperOperator:
    """X -> A X."""
    matrix = _as_sparse(op)
    dim = matrix.shape[0]
    identity = sparse.identity(dim, dtype=complex)
    return SuperOperator(dim, sparse.kron(identity, matrix, format="csr"))


def right_mul(op: OperatorLike) -> SuperOperator:
    """X -> X A."""
    matrix = _as_sparse(op)
    dim = matrix.shape[0]
    identity = sparse.identity(dim, dtype=complex)
    return SuperOperator(dim, sparse.kron(matrix.T, identity, format="csr"))


def parity_super(space: FockSpace) -> SuperOperator:
    """X -> P X P."""
    parity = parity_op(space)
    return left_mul(parity) @ right_mul(parity)


def liouvillian(hamiltonian: FockOperator) -> SuperOperator:
    """X -> -i [H, X]."""
    return -1j * (left_mul(hamiltonian) - right_mul(hamiltonian))


def sector_projector(space: FockSpace, sector: Sector | str) -> SuperOperator:
    """(1 +/- P^)/2, keeping the even or odd part of its argument."""
    sign = Sector(sector).sign
    return 0.5 * (identity_super(space.dim) + sign * parity_super(space))


def coupling_power(s: FockOperator, sigma: int) -> FockOperator:
    """Return s^sigma, with s^{+1} = s^dag and s^{-1} = s."""
    return s.adjoint() if sigma == 1 else s


def require_odd(
    op: FockOperator, name: str = "coupling operator", tol: float = 1e-12
) -> None:
    if op.norm() > 0 and parity_project(op, Sector.EVEN).norm() > tol:
        raise ParityError(f"The {name} must have odd fermionic parity.")


def require_even(
    op: FockOperator, name: str = "Hamiltonian", tol: float = 1e-12
) -> None:
    if parity_project(op, Sector.ODD).norm() > tol:
        raise ParityError(f"The {name} must have even fermionic parity.")


def make_A(sigma: int, s: FockOperator) -> SuperOperator:
    """
    Raising vertex X -> s^{-sigma} X - P (X s^{-sigma}) P.

    On even X this is the anticommutator-like s X + X s, on odd X the
    commutator s X - X s.

    """
    require_odd(s)
    op = coupling_power(s, -sigma)
    return left_mul(op) - parity_super(s.space) @ right_mul(op)


def make_B_script(
    index: int, s: FockOperator, exponents: CorrelationDecomposition
) -> SuperOperator:
    """
    Lowering vertex for exponent index = (m, sigma).

    X -> -(a_m^sigma s^sigma X + conj(a_m^{-sigma}) P (X s^sigma) P), the
    second amplitude taken from the partner exponent.

    """
    require_odd(s)
    exponent = exponents.exponents[index]
    partner = exponents.exponents[exponents.partner(index)]
    op = coupling_power(s, exponent.sigma)
    return -(
        exponent.a * left_mul(op)
        + partner.a.conjugate() * (parity_super(s.space) @ right_mul(op))
    )


def standard_A(sigma: int, s: FockOperator, parity: int) -> SuperOperator:
    """make_A restricted to arguments of the given parity (+1 even, -1 odd)."""
    require_odd(s)
    op = coupling_power(s, -sigma)
    return left_mul(op) + parity * right_mul(op)


def standard_C(
    index: int, s: FockOperator, exponents: CorrelationDecomposition, parity: int
) -> SuperOperator:
    """
    X -> a s^sigma X - parity conj(a^{-sigma}) X s^sigma.

    On arguments of the given parity make_B_script equals -standard_C.

    """
    require_odd(s)
    exponent = exponents.exponents[index]
    partner = exponents.exponents[exponents.partner(index)]
    op = coupling_power(s, exponent.sigma)
    return exponent.a * left_mul(op) - parity * partner.a.conjugate() * right_mul(op)


CorrelationSource = Union[CorrelationDecomposition, BathSpec]


def _correlation_function(source: CorrelationSource) -> Callable[[int, float], complex]:
    if isinstance(source, CorrelationDecomposition):
        return lambda sigma, tau: complex(source.correlation(sigma, tau))
    if isinstance(source.density, FlatDensity):
        # weight of delta(t2 - t1)
        rates = markov_rates(source)
        return lambda sigma, tau: complex(rates[sigma])
    return lambda sigma, tau: correlation_exact(source, sigma, tau, 0.0)


def heisenberg(
    op: FockOperator, hamiltonian: FockOperator, t: float
) -> sparse.csr_matrix:
    """Return U^dag op U with U = exp(-i H t)."""
    propagator = linalg.expm(-1j * hamiltonian.toarray() * t)
    return sparse.csr_matrix(propagator.conj().T @ op.toarray() @ propagator)


def make_W_kernel(
    sector: Sector | str | None,
    source: CorrelationSource,
    s: FockOperator,
    hamiltonian: FockOperator,
    t2: float,
    t1: float,
) -> SuperOperator:
    """
    Second-order influence kernel W(t2, t1) in the interaction picture.

    W = sum_sigma A^sigma(t2) B^sigma(t2, t1) with
    B^sigma[X] = -C^sigma s^sigma(t1) X - conj(C^{-sigma}) P (X s^sigma(t1)) P,
    composed with the even or odd projector (sector=None keeps both). For a
    flat bath C is replaced by the weight of the delta function, so that
    W(t, t) / 2 is the Lindblad dissipator.

    """
    require_odd(s)
    correlation = _correlation_function(source)
    tau = t2 - t1
    space = s.space
    parity = parity_super(space)
    size = space.dim**2
    kernel = SuperOperator(space.dim, sparse.csr_matrix((size, size), dtype=complex))
    for sigma in (1, -1):
        late = heisenberg(coupling_power(s, -sigma), hamiltonian, t2)
        early = heisenberg(coupling_power(s, sigma), hamiltonian, t1)
        vertex = left_mul(late) - parity @ right_mul(late)
        contraction = -(
            correlation(sigma, tau) * left_mul(early)
            + correlation(-sigma, tau).conjugate() * (parity @ right_mul(early))
        )
        kernel = kernel + vertex @ contraction
    if sector is not None:
        kernel = kernel @ sector_projector(space, sector)
    return kernel
