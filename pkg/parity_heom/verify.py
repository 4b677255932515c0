"""
The verification suite behind the `verify` subcommand.

Each check returns a residual and compares it with its threshold from
settings.VERIFY_THRESHOLDS. Checks that make no sense for the configured
bath (an exact-diagonalization comparison against a continuum bath, say)
are reported as not applicable rather than skipped silently.

"""
from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from . import settings
from .bath import (
    DiscreteDensity,
    FlatDensity,
    LorentzianDensity,
    check_decomposition_symmetries,
    decompose,
    reconstruction_error,
)
from .config import Method, RunConfig
from .correlators import system_correlation
from .exceptions import ParityHeomError
from .fock import FockOperator, annihilation_op, creation_op
from .heom import Hierarchy, HierarchyMode, build_hierarchy, evolve_heom
from .lindblad import build_generator_from_bath, evolve_lindblad
from .oracle import (
    BathField,
    CompositeModel,
    SuperCorrelationQuery,
    build_composite,
    dyson_reduced,
    evolve_exact,
    exact_correlation,
    reduce_parity_aware,
    super_correlation,
    wick_pairing_sum,
)

logger = logging.getLogger(__name__)

# times of the four-point bath correlations compared against the pairing sum
WICK_TIMES = (1.3, 0.9, 0.4, 0.1)

WICK_MAX_MODES = 4

# couplings above this make the second-order Dyson comparison meaningless
DYSON_MAX_COUPLING = 0.1
DYSON_TIME = 0.5


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: Optional[float]
    threshold: float
    note: str = ""
    seconds: float = 0.0

    @property
    def applicable(self) -> bool:
        return self.residual is not None

    @property
    def passed(self) -> Optional[bool]:
        if self.residual is None:
            return None
        return bool(self.residual <= self.threshold)

    @property
    def status(self) -> str:
        if self.passed is None:
            return "not-applicable"
        return "passed" if self.passed else "failed"

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "residual": self.residual,
            "threshold": self.threshold,
            "status": self.status,
            "note": self.note,
            "seconds": self.seconds,
        }


@dataclass(frozen=True)
class VerificationReport:
    results: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(result.passed is not False for result in self.results)

    @property
    def failures(self) -> list[CheckResult]:
        return [result for result in self.results if result.passed is False]

    def residuals(self) -> dict[str, Optional[float]]:
        return {result.name: result.residual for result in self.results}

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [result.to_dict() for result in self.results],
        }


Residual = tuple[Optional[float], str]


def _not_applicable(reason: str) -> Residual:
    return None, f"not-applicable: {reason}"


def _oracle_model(config: RunConfig) -> Optional[CompositeModel]:
    density = config.bath.spectral_density
    if not isinstance(density, DiscreteDensity):
        return None
    if len(density.modes) + config.system.n_modes > settings.MAX_ORACLE_MODES:
        return None
    system = config.system
    return build_composite(
        density,
        system.hamiltonian(),
        system.coupling_operator(),
        config.bath.beta,
        config.bath.mu,
        system.initial_state(),
    )


def _heom_depth(config: RunConfig) -> int:
    count = config.bath.exponent_count or 0
    return min(config.solver.depth, count)


def _hierarchy(
    config: RunConfig,
    alpha: Optional[complex] = None,
    mode: Optional[HierarchyMode] = None,
) -> Hierarchy:
    system = config.system
    decomposition = decompose(config.bath.bath_spec(), config.bath.n_matsubara)
    return build_hierarchy(
        decomposition,
        system.coupling_operator(),
        system.hamiltonian(),
        depth=_heom_depth(config),
        mode=config.solver.mode if mode is None else mode,
        alpha=config.solver.alpha if alpha is None else alpha,
    )


def _heom_options(config: RunConfig) -> dict[str, Any]:
    return {
        "rtol": config.solver.rtol,
        "atol": config.solver.atol,
        "method": config.solver.integrator,
    }


def _symmetry_residual(name: str) -> Callable[[RunConfig], Residual]:
    def check(config: RunConfig) -> Residual:
        bath = config.bath.bath_spec()
        if isinstance(bath.density, FlatDensity):
            return _not_applicable("delta-correlated bath")
        decomposition = decompose(bath, config.bath.n_matsubara)
        report = check_decomposition_symmetries(decomposition, bath)
        value = getattr(report, name)
        return (value, "") if value is not None else _not_applicable(report.note)

    return check


def check_reconstruction(config: RunConfig) -> Residual:
    bath = config.bath.bath_spec()
    if not isinstance(bath.density, LorentzianDensity):
        return _not_applicable("reconstruction is only sampled for continuum baths")
    return reconstruction_error(decompose(bath, config.bath.n_matsubara), bath), ""


def check_heom_vs_exact(config: RunConfig) -> Residual:
    model = _oracle_model(config)
    if model is None:
        return _not_applicable("needs a discrete bath within the oracle mode cap")
    times = config.task.time_grid()
    trajectory = evolve_heom(
        _hierarchy(config, mode=HierarchyMode.GENERALIZED),
        config.system.initial_state(),
        times,
        **_heom_options(config),
    )
    residual = max(
        rho.trace_distance(reduce_parity_aware(model, evolve_exact(model, float(t))))
        for t, rho in zip(times, trajectory.densities())
    )
    return residual, f"depth {_heom_depth(config)}"


def _correlation_operators(config: RunConfig) -> tuple[FockOperator, FockOperator]:
    space = config.system.space
    task = config.task
    if task.a is not None and task.b is not None:
        return task.a.build(space), task.b.build(space)
    return annihilation_op(space, 0), creation_op(space, 0)


def check_odd_correlation(config: RunConfig) -> Residual:
    model = _oracle_model(config)
    if model is None:
        return _not_applicable("needs a discrete bath within the oracle mode cap")
    a, b = _correlation_operators(config)
    times = config.task.time_grid()
    result = system_correlation(
        a,
        b,
        _hierarchy(config, mode=HierarchyMode.GENERALIZED),
        config.system.initial_state(),
        times,
        **_heom_options(config),
    )
    exact = exact_correlation(model, a, b, times)
    return float(np.max(np.abs(result.values - exact))), ""


def check_alpha_invariance(config: RunConfig) -> Residual:
    if isinstance(config.bath.spectral_density, FlatDensity):
        return _not_applicable("no hierarchy for a delta-correlated bath")
    times = config.task.time_grid()
    rho0 = config.system.initial_state()
    blocks = [
        evolve_heom(_hierarchy(config, alpha=alpha), rho0, times, method="expm").blocks
        for alpha in (1.0, 1j, 2j)
    ]
    residual = max(float(np.max(np.abs(other - blocks[0]))) for other in blocks[1:])
    return residual, "alpha in (1, i, 2i), exact propagation"


def check_trace_preservation(config: RunConfig) -> Residual:
    times = config.task.time_grid()
    rho0 = config.system.initial_state()
    method = config.solver.method
    if method is Method.LINDBLAD:
        generator = build_generator_from_bath(
            config.system.hamiltonian(),
            config.system.coupling_operator(),
            config.bath.bath_spec(),
        )
        traces = [rho.trace() for rho in evolve_lindblad(generator, rho0, times)]
    elif method is Method.ORACLE:
        model = _oracle_model(config)
        if model is None:
            return _not_applicable("the composite model exceeds the oracle mode cap")
        traces = [
            reduce_parity_aware(model, evolve_exact(model, float(t))).trace()
            for t in times
        ]
    else:
        trajectory = evolve_heom(
            _hierarchy(config), rho0, times, **_heom_options(config)
        )
        traces = [complex(np.trace(block)) for block in trajectory.blocks]
    return max(abs(trace - 1) for trace in traces), method.value


def check_partial_trace(config: RunConfig) -> Residual:
    """Tr_S[A reduce(rho)] against Tr[A rho] for every system matrix unit A."""
    model = _oracle_model(config)
    if model is None:
        return _not_applicable("needs a discrete bath within the oracle mode cap")
    rho_full = evolve_exact(model, 0.5 * config.task.t_final)
    reduced = reduce_parity_aware(model, rho_full).matrix
    space = model.sys_space
    residual = 0.0
    for i, j in itertools.product(range(space.dim), repeat=2):
        unit = np.zeros((space.dim, space.dim), dtype=complex)
        unit[i, j] = 1.0
        op = FockOperator(space, unit)
        direct = rho_full.expectation(model.embed_system(op))
        residual = max(residual, abs(complex(np.trace(unit @ reduced)) - direct))
    return residual, ""


def check_wick(config: RunConfig) -> Residual:
    bath = config.bath.bath_spec()
    density = bath.density
    if not isinstance(density, DiscreteDensity) or len(density.modes) > WICK_MAX_MODES:
        return _not_applicable(
            f"needs a discrete bath of at most {WICK_MAX_MODES} modes"
        )
    residual = 0.0
    for pattern in itertools.product((1, -1), repeat=2 * len(WICK_TIMES)):
        fields = tuple(
            BathField(pattern[2 * i], pattern[2 * i + 1], t)
            for i, t in enumerate(WICK_TIMES)
        )
        query = SuperCorrelationQuery(fields)
        difference = super_correlation(bath, query) - wick_pairing_sum(bath, query)
        residual = max(residual, abs(difference))
    return residual, "n=4, all (lambda, q) patterns"


def check_dyson(config: RunConfig) -> Residual:
    model = _oracle_model(config)
    if model is None:
        return _not_applicable("needs a discrete bath within the oracle mode cap")
    if float(np.max(np.abs(model.bath.couplings))) > DYSON_MAX_COUPLING:
        return _not_applicable(f"couplings above {DYSON_MAX_COUPLING}")
    t = min(DYSON_TIME, config.task.t_final)
    exact = reduce_parity_aware(model, evolve_exact(model, t))
    second_order = dyson_reduced(model, 2, t)
    return float(np.max(np.abs(exact.matrix - second_order.matrix))), f"t = {t:g}"


CHECKS: dict[str, Callable[[RunConfig], Residual]] = {
    "hermiticity": _symmetry_residual("hermiticity"),
    "kms": _symmetry_residual("kms"),
    "pairing": _symmetry_residual("pairing"),
    "reconstruction": check_reconstruction,
    "heom_vs_exact": check_heom_vs_exact,
    "odd_correlation": check_odd_correlation,
    "alpha_invariance": check_alpha_invariance,
    "trace_preservation": check_trace_preservation,
    "partial_trace": check_partial_trace,
    "wick": check_wick,
    "dyson": check_dyson,
}


def plan_checks(config: RunConfig) -> list[str]:
    """Names of the checks run for a config, in report order."""
    density = config.bath.spectral_density
    if isinstance(density, FlatDensity):
        return ["trace_preservation"]
    names = ["hermiticity", "kms", "pairing"]
    if isinstance(density, LorentzianDensity):
        names.append("reconstruction")
    else:
        names.extend(["heom_vs_exact", "odd_correlation"])
    names.extend(["alpha_invariance", "trace_preservation"])
    if isinstance(density, DiscreteDensity):
        names.extend(["partial_trace", "wick", "dyson"])
    return names


def _run_check(name: str, config: RunConfig) -> CheckResult:
    threshold = settings.VERIFY_THRESHOLDS[name]
    started = time.perf_counter()
    residual, note = CHECKS[name](config)
    elapsed = time.perf_counter() - started
    if residual is not None and not math.isfinite(residual):
        note = f"non-finite residual {residual}"
    logger.info("Check %s: residual %s (threshold %g)", name, residual, threshold)
    return CheckResult(name, residual, threshold, note, elapsed)


def run_verification(
    config: RunConfig, names: Optional[list[str]] = None
) -> VerificationReport:
    """Run the planned checks on a thread pool; results keep the plan order."""
    names = plan_checks(config) if names is None else names
    unknown = sorted(set(names) - set(CHECKS))
    if unknown:
        raise ParityHeomError(f"Unknown verification checks: {', '.join(unknown)}.")
    with ThreadPoolExecutor(max_workers=settings.NUM_THREADS) as executor:
        futures = [executor.submit(_run_check, name, config) for name in names]
        results = tuple(future.result() for future in futures)
    report = VerificationReport(results)
    for failure in report.failures:
        logger.warning(
            "Check %s failed: residual %.3e > %.3e",
            failure.name,
            failure.residual,
            failure.threshold,
        )
    return report
