"""
Generalized Lindblad generator for the white-noise (flat band) limit.

The jump term of each dissipator changes sign with the parity of the state
it acts on: D^r[X] = 2r O X O^dag - O^dag O X - X O^dag O, r = +1 on the
even sector and -1 on the odd sector.

"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import numpy.typing as npt
from scipy import linalg

from .bath import BathSpec, FlatDensity
from .exceptions import BathError, DimensionMismatch, IntegrationError, UnsupportedBath
from .fock import ComplexArray, DensityMatrix, FockOperator, FockSpace, Sector
from .superop import (
    SuperOperator,
    left_mul,
    liouvillian,
    require_even,
    require_odd,
    right_mul,
    sector_projector,
    unvec_array,
    vec,
)

logger = logging.getLogger(__name__)


def dissipator(op: FockOperator, sign: int) -> SuperOperator:
    """D^r[X] = 2r O X O^dag - O^dag O X - X O^dag O."""
    adjoint = op.adjoint()
    number = adjoint @ op
    jump = 2 * sign * (left_mul(op) @ right_mul(adjoint))
    return jump - left_mul(number) - right_mul(number)


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    hamiltonian: FockOperator
    coupling: FockOperator
    gamma: float
    n0: float
    even: SuperOperator
    odd: SuperOperator

    @property
    def space(self) -> FockSpace:
        return self.hamiltonian.space

    def full(self) -> SuperOperator:
        """The sector-blocked generator as a single superoperator."""
        even = self.even @ sector_projector(self.space, Sector.EVEN)
        return even + self.odd @ sector_projector(self.space, Sector.ODD)

    def apply(self, rho: DensityMatrix | npt.ArrayLike) -> ComplexArray:
        return self.full().apply(rho)


def build_generator(
    hamiltonian: FockOperator, s: FockOperator, gamma: float, n0: float
) -> LindbladGenerator:
    if gamma < 0:
        raise BathError(f"Lindblad rate must be >= 0 (got {gamma}).")
    if not 0.0 <= n0 <= 1.0:
        raise BathError(f"Lindblad occupation must be in [0, 1] (got {n0}).")
    if hamiltonian.space != s.space:
        raise DimensionMismatch("Hamiltonian and coupling act on different spaces.")
    require_even(hamiltonian)
    require_odd(s)
    coherent = liouvillian(hamiltonian)
    blocks = {
        sign: coherent
        + gamma * ((1 - n0) * dissipator(s, sign) + n0 * dissipator(s.adjoint(), sign))
        for sign in (1, -1)
    }
    return LindbladGenerator(hamiltonian, s, gamma, n0, blocks[1], blocks[-1])


def build_generator_from_bath(
    hamiltonian: FockOperator, s: FockOperator, bath: BathSpec
) -> LindbladGenerator:
    density = bath.density
    if not isinstance(density, FlatDensity):
        raise UnsupportedBath(
            f"The Lindblad generator needs a flat bath, not {density.kind}."
        )
    return build_generator(hamiltonian, s, density.gamma, density.n0)


def check_time_grid(t_grid: Sequence[float] | npt.ArrayLike) -> npt.NDArray[np.float64]:
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise IntegrationError("The time grid must be a non-empty 1-D sequence.")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise IntegrationError("The time grid must be non-negative and non-decreasing.")
    return times


def evolve_lindblad(
    generator: LindbladGenerator,
    rho0: DensityMatrix | npt.ArrayLike,
    t_grid: Sequence[float] | npt.ArrayLike,
) -> list[DensityMatrix]:
    """
    Propagate rho0 (given at t = 0) to every time in t_grid.

    Steps between grid points use the dense matrix exponential of the
    vectorized generator; equal steps share one propagator.

    """
    space = generator.space
    if isinstance(rho0, DensityMatrix):
        matrix = rho0.matrix
    else:
        matrix = np.asarray(rho0, dtype=complex)
    if matrix.shape != (space.dim, space.dim):
        raise DimensionMismatch(
            f"Initial state shape {matrix.shape} does not match dimension {space.dim}."
        )
    times = check_time_grid(t_grid)
    dense = generator.full().toarray()
    propagators: dict[float, ComplexArray] = {}
    state = vec(matrix)
    current = 0.0
    trajectory = []
    for t in times:
        step = round(float(t) - current, 13)
        if step > 0:
            if step not in propagators:
                propagators[step] = linalg.expm(dense * step)
            state = propagators[step] @ state
            current = float(t)
            if not np.all(np.isfinite(state)):
                raise IntegrationError(
                    f"Non-finite state at t={current:g} after a step of {step:g}."
                )
        trajectory.append(DensityMatrix(space, unvec_array(state)))
    logger.debug(
        "Lindblad evolution: %d grid points, %d propagators",
        times.size,
        len(propagators),
    )
    return trajectory


def steady_state(generator: LindbladGenerator) -> DensityMatrix:
    """Return the unit-trace null vector of the generator."""
    space = generator.space
    dense = generator.full().toarray()
    trace_row = vec(np.eye(space.dim)).conj()
    system = np.vstack([dense, trace_row])
    rhs = np.zeros(system.shape[0], dtype=complex)
    rhs[-1] = 1.0
    solution, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    return DensityMatrix(space, unvec_array(solution))
