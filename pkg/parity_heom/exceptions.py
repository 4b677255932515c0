from __future__ import annotations

from typing import Iterable


class ParityHeomError(Exception):
    """Generic base exception for solver errors."""


class ModeIndexError(ParityHeomError):
    """Raised if a mode index is outside the Fock space."""


class DimensionMismatch(ParityHeomError):
    """Raised if operator, state or superoperator sizes disagree."""


class ParityError(ParityHeomError):
    """Raised if an operator does not have the required fermionic parity."""


class ParitySectorError(ParityHeomError):
    """Raised if the even-standard hierarchy is given odd-parity input."""


class BathError(ParityHeomError):
    """Raised if bath parameters are invalid."""


class UnsupportedBath(BathError):
    """Raised if an operation is not defined for the spectral density variant."""


class QuadratureError(BathError):
    """Raised if the correlation-function quadrature does not converge."""

    def __init__(self, message: str, estimate: float) -> None:
        super().__init__(f"{message} (estimated error {estimate:.3e})")
        self.estimate = estimate


class DecompositionError(ParityHeomError):
    """Raised if an exponential decomposition is malformed."""


class HierarchyError(ParityHeomError):
    """Raised if the hierarchy cannot be built as requested."""


class IntegrationError(ParityHeomError):
    """Raised if time integration fails."""


class OracleSizeError(ParityHeomError):
    """Raised if the composite model exceeds the exact-diagonalization cap."""


class WickError(ParityHeomError):
    """Raised if a pairing sum is requested for an odd number of fields."""


class NonUniformGridError(ParityHeomError):
    """Raised if a Fourier transform is requested on a non-uniform grid."""


class ConfigError(ParityHeomError):
    """Raised with every violation found while validating a run config."""

    def __init__(self, errors: Iterable[str]) -> None:
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class HamiltonianError(ParityHeomError):
    """Raised if a composite Hamiltonian is not Hermitian."""
