"""
System two-time correlation functions and emission spectra.

C_AB(t) = Tr_S[A rho'(t)] where rho'(0) = B rho_S(0) is evolved by the
reduced dynamics. For odd B the object rho' is odd and non-Hermitian, so
the solver must propagate the odd sector: the generalized hierarchy or the
sector-blocked Lindblad generator.

"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import integrate

from . import settings
from .exceptions import DimensionMismatch, NonUniformGridError, ParityHeomError
from .fock import ComplexArray, DensityMatrix, FockOperator
from .heom import Hierarchy, evolve_heom, format_number
from .lindblad import LindbladGenerator, check_time_grid, evolve_lindblad
from .oracle import CompositeModel, exact_correlation

logger = logging.getLogger(__name__)

Solver = Union[Hierarchy, LindbladGenerator, CompositeModel]


@dataclass(frozen=True, eq=False)
class CorrelationResult:
    times: npt.NDArray[np.float64]
    values: ComplexArray
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.times) != len(self.values):
            raise DimensionMismatch(
                f"{len(self.values)} correlation values for {len(self.times)} times."
            )

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "re", "im"])
            for t, value in zip(self.times, self.values):
                writer.writerow(
                    [
                        format_number(t),
                        format_number(value.real),
                        format_number(value.imag),
                    ]
                )


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    omegas: npt.NDArray[np.float64]
    values: npt.NDArray[np.float64]
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["omega", "s"])
            for omega, value in zip(self.omegas, self.values):
                writer.writerow([format_number(omega), format_number(value)])


def _solver_name(solver: Solver) -> str:
    if isinstance(solver, Hierarchy):
        return f"heom-{solver.mode.value}"
    if isinstance(solver, LindbladGenerator):
        return "lindblad"
    return "oracle"


def system_correlation(
    a: FockOperator,
    b: FockOperator,
    solver: Solver,
    rho0: DensityMatrix,
    t_grid: Sequence[float] | npt.ArrayLike,
    **options: Any,
) -> CorrelationResult:
    """
    Evolve B rho0 with the given solver and trace it against A on t_grid.

    options are passed to evolve_heom (rtol, atol, method); an even-standard
    hierarchy raises ParitySectorError when B rho0 is odd. A CompositeModel
    solver evaluates the correlation in the full system + bath space and
    ignores rho0 in favour of its own initial state.

    """
    if a.space != b.space or a.space != rho0.space:
        raise DimensionMismatch("A, B and rho0 must act on the same system space.")
    times = check_time_grid(t_grid)
    name = _solver_name(solver)
    if isinstance(solver, CompositeModel):
        values = exact_correlation(solver, a, b, times)
    else:
        seeded = b.matrix @ rho0.matrix
        if isinstance(solver, Hierarchy):
            blocks = evolve_heom(solver, seeded, times, **options).blocks
        elif isinstance(solver, LindbladGenerator):
            if options:
                raise ParityHeomError(
                    f"The Lindblad solver takes no options (got {sorted(options)})."
                )
            trajectory = evolve_lindblad(solver, seeded, times)
            blocks = np.stack([rho.matrix for rho in trajectory])
        else:
            raise ParityHeomError(
                f"Unsupported correlation solver {type(solver).__name__}."
            )
        a_dense = a.toarray()
        values = np.einsum("ij,tji->t", a_dense, blocks)
    logger.debug("Correlation computed with %s on %d points", name, times.size)
    return CorrelationResult(times, np.asarray(values, dtype=complex), {"solver": name})


def system_correlations(
    pairs: Sequence[Tuple[FockOperator, FockOperator]],
    solver: Solver,
    rho0: DensityMatrix,
    t_grid: Sequence[float] | npt.ArrayLike,
    **options: Any,
) -> list[CorrelationResult]:
    """Run system_correlation for each (A, B) pair; results keep the input order."""
    with ThreadPoolExecutor(max_workers=settings.NUM_THREADS) as executor:
        futures = [
            executor.submit(system_correlation, a, b, solver, rho0, t_grid, **options)
            for a, b in pairs
        ]
        return [future.result() for future in futures]


def check_uniform_grid(times: npt.NDArray[np.float64], rtol: float = 1e-9) -> float:
    """Return the spacing of a uniform grid, or raise NonUniformGridError."""
    if times.size < 2:
        raise NonUniformGridError("A spectrum needs at least two time points.")
    steps = np.diff(times)
    step = float(steps.mean())
    tolerance = rtol * max(step, abs(float(times[-1])))
    if step <= 0 or np.max(np.abs(steps - step)) > tolerance:
        raise NonUniformGridError("The correlation time grid is not uniform.")
    return step


def spectrum(
    result: CorrelationResult,
    omegas: Sequence[float] | npt.ArrayLike,
    window_width: float | None = None,
) -> SpectrumResult:
    """
    One-sided transform S(w) = 2 Re int_0^T dt exp(i w t) C(t) w(t).

    The trapezoidal rule is used on the (uniform) correlation grid; the
    optional window is w(t) = exp(-t / window_width). Frequencies are
    processed in chunks on a thread pool.

    """
    times = np.asarray(result.times, dtype=float)
    step = check_uniform_grid(times)
    grid = np.asarray(omegas, dtype=float)
    if window_width is not None and window_width <= 0:
        raise ParityHeomError(
            f"The window width must be positive (got {window_width})."
        )
    if window_width is None:
        weights = np.ones_like(times)
    else:
        weights = np.exp(-(times - times[0]) / window_width)
    signal = result.values * weights

    def transform(chunk: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        phases = np.exp(1j * np.outer(chunk, times))
        return 2.0 * np.real(integrate.trapezoid(phases * signal, dx=step, axis=1))

    chunks = np.array_split(grid, max(1, min(settings.NUM_THREADS, grid.size)))
    with ThreadPoolExecutor(max_workers=settings.NUM_THREADS) as executor:
        parts = list(executor.map(transform, chunks))
    values = np.concatenate(parts) if parts else np.zeros(0)
    metadata = {
        **dict(result.metadata),
        "normalization": "2 Re int_0^T exp(i w t) C(t) w(t) dt",
        "window": "none" if window_width is None else "exponential",
        "window_width": window_width,
        "t_final": float(times[-1]),
        "dt": step,
    }
    return SpectrumResult(grid, values, metadata)
