"""
Generalized fermionic hierarchical equations of motion.

The hierarchy is a set of auxiliary density operators (ADOs) labelled by
sorted tuples J of distinct exponent indices. In the Schrodinger picture

    d/dt rho_J = (L - sum_{j in J} b_j) rho_J
                 + 1/alpha sum_{k not in J} eps(J, k) A_k rho_{J+k}
                 + alpha sum_{k in J} eps(J, k) B_k rho_{J-k},

where eps(J, k) = (-1)**(number of indices in J greater than k) is the sign
of moving k between the front of the written string and its sorted place.
In generalized mode A_k and B_k are the parity-aware vertices and the
equations hold for initial states of either parity. The even-standard mode
replaces the parity superoperator with the sign fixed by the hierarchy
level, which is only valid for even initial states.

"""
from __future__ import annotations

import csv
import enum
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import integrate, interpolate, sparse
from scipy.sparse import linalg as sparse_linalg

from . import settings
from .bath import CorrelationDecomposition
from .exceptions import (
    DimensionMismatch,
    HierarchyError,
    IntegrationError,
    ParitySectorError,
)
from .fock import (
    ComplexArray,
    DensityMatrix,
    FockOperator,
    FockSpace,
    Sector,
    sector_mask,
)
from .lindblad import check_time_grid
from .superop import (
    SuperOperator,
    liouvillian,
    make_A,
    make_B_script,
    require_even,
    require_odd,
    standard_A,
    standard_C,
    vec,
)

logger = logging.getLogger(__name__)


class HierarchyMode(str, enum.Enum):
    GENERALIZED = "generalized"
    EVEN_STANDARD = "even-standard"


@dataclass(frozen=True, order=True)
class AdoLabel:
    """Sorted tuple of distinct exponent indices; the level is its length."""

    indices: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        indices = tuple(int(i) for i in self.indices)
        if len(set(indices)) != len(indices):
            raise HierarchyError(f"Repeated exponent index in ADO label {indices}.")
        if list(indices) != sorted(indices):
            raise HierarchyError(
                f"ADO label {indices} is not sorted; use AdoLabel.canonical."
            )
        object.__setattr__(self, "indices", indices)

    @property
    def level(self) -> int:
        return len(self.indices)

    @classmethod
    def canonical(cls, indices: Sequence[int]) -> tuple[AdoLabel, int]:
        """Sort indices; return the label and the sign of the sorting permutation."""
        if len(set(indices)) != len(indices):
            raise HierarchyError(
                f"Repeated exponent index in ADO label {tuple(indices)}."
            )
        inversions = sum(1 for i, j in itertools.combinations(indices, 2) if i > j)
        return cls(tuple(sorted(indices))), (-1) ** inversions

    def sign(self, index: int) -> int:
        """(-1)**(number of indices greater than index)."""
        return (-1) ** sum(1 for j in self.indices if j > index)

    def insert(self, index: int) -> tuple[AdoLabel, int]:
        if index in self.indices:
            raise HierarchyError(f"Exponent {index} is already in {self.indices}.")
        return AdoLabel(tuple(sorted(self.indices + (index,)))), self.sign(index)

    def remove(self, index: int) -> tuple[AdoLabel, int]:
        if index not in self.indices:
            raise HierarchyError(f"Exponent {index} is not in {self.indices}.")
        return AdoLabel(tuple(j for j in self.indices if j != index)), self.sign(index)

    def __str__(self) -> str:
        return "(" + ",".join(str(i) for i in self.indices) + ")"


@dataclass(frozen=True, eq=False)
class Hierarchy:
    decomposition: CorrelationDecomposition
    couplings: Tuple[FockOperator, ...]
    hamiltonian: FockOperator
    depth: int
    mode: HierarchyMode
    alpha: complex
    labels: Tuple[AdoLabel, ...]
    index: Mapping[AdoLabel, int]
    generator: sparse.csr_matrix

    @property
    def space(self) -> FockSpace:
        return self.hamiltonian.space

    @property
    def block_size(self) -> int:
        return self.space.dim**2

    @property
    def n_ados(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return self.n_ados * self.block_size

    def block_slice(self, label: AdoLabel) -> slice:
        start = self.index[label] * self.block_size
        return slice(start, start + self.block_size)


def _per_exponent(
    s: FockOperator | Sequence[FockOperator], count: int
) -> tuple[FockOperator, ...]:
    if isinstance(s, FockOperator):
        return (s,) * count
    couplings = tuple(s)
    if len(couplings) != count:
        raise HierarchyError(
            f"Got {len(couplings)} coupling operators for {count} exponents."
        )
    return couplings


def build_hierarchy(
    decomposition: CorrelationDecomposition,
    s: FockOperator | Sequence[FockOperator],
    hamiltonian: FockOperator,
    depth: int | None = None,
    mode: HierarchyMode | str = HierarchyMode.GENERALIZED,
    alpha: complex | None = None,
) -> Hierarchy:
    """
    Assemble the sparse generator of the truncated hierarchy.

    s is either one coupling operator shared by every exponent or one
    operator per exponent (several baths concatenated). ADOs deeper than
    depth are set to zero.

    """
    depth = settings.DEFAULT_DEPTH if depth is None else depth
    alpha = settings.DEFAULT_ALPHA if alpha is None else complex(alpha)
    mode = HierarchyMode(mode)
    count = len(decomposition)
    if alpha == 0:
        raise HierarchyError("The ADO scale alpha must be non-zero.")
    if depth < 0:
        raise HierarchyError(f"Hierarchy depth must be >= 0 (got {depth}).")
    if depth > count:
        raise HierarchyError(f"Hierarchy depth {depth} exceeds exponent count {count}.")
    couplings = _per_exponent(s, count)
    require_even(hamiltonian)
    for op in couplings:
        if op.space != hamiltonian.space:
            raise DimensionMismatch(
                "Coupling operator and Hamiltonian act on different spaces."
            )
        require_odd(op)

    labels = tuple(
        AdoLabel(combo)
        for level in range(depth + 1)
        for combo in itertools.combinations(range(count), level)
    )
    index = {label: position for position, label in enumerate(labels)}

    # Level n couples to levels n +/- 1, whose parity is (-1)**(n + 1).
    def raising(k: int, parity: int) -> SuperOperator:
        exponent = decomposition.exponents[k]
        if mode is HierarchyMode.GENERALIZED:
            return make_A(exponent.sigma, couplings[k])
        return standard_A(exponent.sigma, couplings[k], parity)

    def lowering(k: int, parity: int) -> SuperOperator:
        if mode is HierarchyMode.GENERALIZED:
            return make_B_script(k, couplings[k], decomposition)
        return -standard_C(k, couplings[k], decomposition, parity)

    vertices = {
        (k, parity): (raising(k, parity).matrix, lowering(k, parity).matrix)
        for k in range(count)
        for parity in (1, -1)
    }
    coherent = liouvillian(hamiltonian).matrix
    identity = sparse.identity(coherent.shape[0], dtype=complex, format="csr")

    blocks: list[tuple[int, int, sparse.spmatrix]] = []
    for label in labels:
        row = index[label]
        damping = sum(decomposition.exponents[j].b for j in label.indices)
        blocks.append((row, row, coherent - damping * identity))
        parity = (-1) ** (label.level + 1)
        if label.level < depth:
            for k in range(count):
                if k in label.indices:
                    continue
                upper, sign = label.insert(k)
                vertex = vertices[(k, parity)][0]
                blocks.append((row, index[upper], (sign / alpha) * vertex))
        for k in label.indices:
            lower, sign = label.remove(k)
            vertex = vertices[(k, parity)][1]
            blocks.append((row, index[lower], (sign * alpha) * vertex))

    generator = _assemble(blocks, len(labels), coherent.shape[0])
    logger.info(
        "Assembled %s hierarchy: %d exponents, depth %d, %d ADOs, %d nonzeros",
        mode.value,
        count,
        depth,
        len(labels),
        generator.nnz,
    )
    return Hierarchy(
        decomposition=decomposition,
        couplings=couplings,
        hamiltonian=hamiltonian,
        depth=depth,
        mode=mode,
        alpha=alpha,
        labels=labels,
        index=index,
        generator=generator,
    )


def _assemble(
    blocks: Sequence[tuple[int, int, sparse.spmatrix]], n_blocks: int, block_size: int
) -> sparse.csr_matrix:
    rows, cols, data = [], [], []
    for row, col, block in blocks:
        coo = sparse.coo_matrix(block)
        rows.append(coo.row + row * block_size)
        cols.append(coo.col + col * block_size)
        data.append(coo.data)
    shape = (n_blocks * block_size, n_blocks * block_size)
    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=shape,
        dtype=complex,
    )
    return matrix.tocsr()


def rescale_ados(hierarchy: Hierarchy, alpha: complex) -> Hierarchy:
    """Rebuild with ADO scale alpha; level-n ADOs scale by (alpha/old)**n."""
    return build_hierarchy(
        hierarchy.decomposition,
        hierarchy.couplings,
        hierarchy.hamiltonian,
        hierarchy.depth,
        hierarchy.mode,
        alpha,
    )


@dataclass(frozen=True, eq=False)
class HierarchyState:
    hierarchy: Hierarchy
    vector: ComplexArray

    def __post_init__(self) -> None:
        vector = np.array(self.vector, dtype=complex)
        if vector.shape != (self.hierarchy.size,):
            raise DimensionMismatch(
                f"State vector of shape {vector.shape} does not fit a hierarchy "
                f"of size {self.hierarchy.size}."
            )
        vector.setflags(write=False)
        object.__setattr__(self, "vector", vector)

    @classmethod
    def from_density(
        cls, hierarchy: Hierarchy, rho: DensityMatrix | npt.ArrayLike
    ) -> HierarchyState:
        """Place rho in the top block; all ADOs start at zero."""
        vector = np.zeros(hierarchy.size, dtype=complex)
        vector[: hierarchy.block_size] = vec(rho)
        return cls(hierarchy, vector)

    def block(self, label: AdoLabel | Sequence[int]) -> ComplexArray:
        if not isinstance(label, AdoLabel):
            label = AdoLabel(tuple(label))
        dim = self.hierarchy.space.dim
        block = self.vector[self.hierarchy.block_slice(label)]
        return block.reshape((dim, dim), order="F")

    @property
    def rho(self) -> DensityMatrix:
        return DensityMatrix(self.hierarchy.space, self.block(AdoLabel()))

    def rescaled(self, hierarchy: Hierarchy) -> HierarchyState:
        """Map this state onto a hierarchy with a different alpha."""
        ratio = hierarchy.alpha / self.hierarchy.alpha
        vector = np.array(self.vector)
        for label in self.hierarchy.labels:
            vector[self.hierarchy.block_slice(label)] *= ratio**label.level
        return HierarchyState(hierarchy, vector)

    def snapshot(self) -> dict[str, Any]:
        """JSON-ready dump of every ADO block, entries as [re, im]."""
        return {
            "mode": self.hierarchy.mode.value,
            "alpha": [self.hierarchy.alpha.real, self.hierarchy.alpha.imag],
            "blocks": {
                str(label): [
                    [[z.real, z.imag] for z in row] for row in self.block(label)
                ]
                for label in self.hierarchy.labels
            },
        }


def heom_rhs(
    hierarchy: Hierarchy, state: HierarchyState, t: float = 0.0
) -> HierarchyState:
    """Time derivative of the full ADO vector; the generator is time independent."""
    if state.vector.shape != (hierarchy.size,):
        raise DimensionMismatch(
            f"State of size {state.vector.size} does not fit a hierarchy "
            f"of size {hierarchy.size}."
        )
    return HierarchyState(hierarchy, hierarchy.generator @ state.vector)


@dataclass(frozen=True, eq=False)
class HeomTrajectory:
    """The physical block rho^(0) on a time grid, plus the final ADO state."""

    space: FockSpace
    times: npt.NDArray[np.float64]
    blocks: ComplexArray
    final_state: HierarchyState
    steps: int
    evaluations: int

    def __len__(self) -> int:
        return len(self.times)

    def densities(self) -> list[DensityMatrix]:
        return [DensityMatrix(self.space, block) for block in self.blocks]

    def to_csv(self, path: Union[str, Path]) -> None:
        write_trajectory_csv(path, self.times, self.blocks)


def format_number(value: float) -> str:
    return f"{value:.17g}"


def write_trajectory_csv(
    path: Union[str, Path],
    times: npt.ArrayLike,
    matrices: Sequence[npt.ArrayLike] | ComplexArray,
) -> None:
    """Columns t, then row-major (re, im) pairs of every matrix entry."""
    stack = np.asarray(matrices, dtype=complex)
    dim = stack.shape[1]
    header = ["t"]
    for i, j in itertools.product(range(dim), repeat=2):
        header.extend([f"rho_{i}_{j}_re", f"rho_{i}_{j}_im"])
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for t, matrix in zip(np.asarray(times, dtype=float), stack):
            row = [format_number(t)]
            for z in matrix.reshape(-1):
                row.extend([format_number(z.real), format_number(z.imag)])
            writer.writerow(row)


def _initial_block(
    hierarchy: Hierarchy,
    rho0: DensityMatrix | npt.ArrayLike,
    sector: Sector | str | None,
) -> ComplexArray:
    space = hierarchy.space
    if isinstance(rho0, DensityMatrix):
        matrix = rho0.matrix
    else:
        matrix = np.asarray(rho0, dtype=complex)
    if matrix.shape != (space.dim, space.dim):
        raise DimensionMismatch(
            f"Initial state shape {matrix.shape} does not match "
            f"dimension {space.dim}."
        )
    if sector is not None:
        matrix = np.where(sector_mask(space, sector), matrix, 0)
    if hierarchy.mode is HierarchyMode.EVEN_STANDARD:
        odd = np.linalg.norm(np.where(sector_mask(space, Sector.ODD), matrix, 0))
        if odd > 1e-12 * max(1.0, float(np.linalg.norm(matrix))):
            raise ParitySectorError(
                "The even-standard hierarchy only propagates even-parity states; "
                "use the generalized mode for odd objects such as B rho."
            )
    return np.asarray(matrix, dtype=complex)


def evolve_heom(
    hierarchy: Hierarchy,
    rho0: DensityMatrix | npt.ArrayLike,
    t_grid: Sequence[float] | npt.ArrayLike,
    rtol: float | None = None,
    atol: float | None = None,
    sector: Sector | str | None = None,
    method: str = "rk45",
) -> HeomTrajectory:
    """
    Propagate rho0 (at t = 0, ADOs zero) and sample rho^(0) on t_grid.

    rho0 may be any d x d matrix, including odd objects such as c^dag rho;
    sector optionally projects it first. method "rk45" integrates with an
    adaptive embedded Runge-Kutta 4(5) stepper and cubic Hermite dense
    output; "expm" applies the exact exponential between grid points.

    """
    rtol = settings.DEFAULT_RTOL if rtol is None else rtol
    atol = settings.DEFAULT_ATOL if atol is None else atol
    times = check_time_grid(t_grid)
    initial = _initial_block(hierarchy, rho0, sector)
    y0 = HierarchyState.from_density(hierarchy, initial).vector.copy()
    if method == "rk45":
        blocks, final, steps, evaluations = _integrate_rk45(
            hierarchy, y0, times, rtol, atol
        )
    elif method == "expm":
        blocks, final, steps, evaluations = _propagate_expm(hierarchy, y0, times)
    else:
        raise IntegrationError(f"Unknown integration method {method!r}.")
    dim = hierarchy.space.dim
    matrices = np.stack([np.asarray(b).reshape((dim, dim), order="F") for b in blocks])
    return HeomTrajectory(
        space=hierarchy.space,
        times=times,
        blocks=matrices,
        final_state=HierarchyState(hierarchy, final),
        steps=steps,
        evaluations=evaluations,
    )


def _check_finite(vector: ComplexArray, t: float) -> None:
    if not np.all(np.isfinite(vector)):
        raise IntegrationError(f"Non-finite ADO values at t={t:g}.")


def _integrate_rk45(
    hierarchy: Hierarchy,
    y0: ComplexArray,
    times: npt.NDArray[np.float64],
    rtol: float,
    atol: float,
) -> tuple[list[ComplexArray], ComplexArray, int, int]:
    size = hierarchy.block_size
    generator = hierarchy.generator
    t_end = float(times[-1])
    if t_end == 0.0:
        return [y0[:size].copy() for _ in times], y0, 0, 0

    def rhs(t: float, y: ComplexArray) -> ComplexArray:
        return generator @ y

    solver = integrate.RK45(rhs, 0.0, y0, t_end, rtol=rtol, atol=atol)
    knots = [0.0]
    values = [y0[:size].copy()]
    slopes = [rhs(0.0, y0)[:size]]
    steps = 0
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise IntegrationError(
                f"RK45 failed at t={solver.t:.6g} "
                f"with step size {solver.h_abs:.3e}: {message}"
            )
        steps += 1
        _check_finite(solver.y, solver.t)
        knots.append(solver.t)
        values.append(solver.y[:size].copy())
        slopes.append(solver.f[:size].copy())
    logger.debug("RK45 finished: %d steps, %d rhs evaluations", steps, solver.nfev)
    spline = interpolate.CubicHermiteSpline(
        np.asarray(knots), np.asarray(values), np.asarray(slopes), axis=0
    )
    sampled = spline(times)
    return [row for row in sampled], solver.y.copy(), steps, solver.nfev


def _propagate_expm(
    hierarchy: Hierarchy, y0: ComplexArray, times: npt.NDArray[np.float64]
) -> tuple[list[ComplexArray], ComplexArray, int, int]:
    size = hierarchy.block_size
    state = y0
    current = 0.0
    sampled = []
    steps = 0
    for t in times:
        if t > current:
            step = hierarchy.generator * (float(t) - current)
            state = sparse_linalg.expm_multiply(step, state)
            current = float(t)
            steps += 1
            _check_finite(state, current)
        sampled.append(state[:size].copy())
    return sampled, np.asarray(state), steps, steps
