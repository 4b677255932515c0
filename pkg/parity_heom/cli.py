"""
Command-line front door.

    parity-heom run <config.json> [--output DIR] [-v]
    parity-heom verify <config.json> [--output DIR] [-v]
    parity-heom decompose <config.json> [--output DIR] [-v]

Numerics come from the JSON config only; flags select paths and verbosity.
Exit status is 0 on success, 1 on invalid input or solver failure and 2
when a verification residual exceeds its threshold.

"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import logging
import time
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import settings
from .bath import CorrelationDecomposition, decompose
from .config import Method, RunConfig, TaskKind, parse_config
from .correlators import CorrelationResult, Solver, spectrum, system_correlation
from .exceptions import ParityHeomError
from .fock import ComplexArray
from .heom import build_hierarchy, evolve_heom, write_trajectory_csv
from .lindblad import LindbladGenerator, build_generator_from_bath, evolve_lindblad
from .oracle import CompositeModel, build_composite, evolve_exact, reduce_parity_aware
from .verify import VerificationReport, run_verification

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFICATION_FAILED = 2

COMMANDS = ("run", "verify", "decompose")


@dataclasses.dataclass
class RunOutcome:
    exit_code: int
    artifacts: dict[str, str]
    summary: dict[str, Any]


def effective_defaults() -> dict[str, Any]:
    return {
        "depth": settings.DEFAULT_DEPTH,
        "rtol": settings.DEFAULT_RTOL,
        "atol": settings.DEFAULT_ATOL,
        "alpha": [settings.DEFAULT_ALPHA.real, settings.DEFAULT_ALPHA.imag],
        "n_matsubara": settings.DEFAULT_N_MATSUBARA,
        "max_oracle_modes": settings.MAX_ORACLE_MODES,
        "quad_epsabs": settings.QUAD_EPSABS,
        "quad_epsrel": settings.QUAD_EPSREL,
        "quad_limit": settings.QUAD_LIMIT,
        "dyson_nodes": settings.DYSON_NODES,
        "num_threads": settings.NUM_THREADS,
    }


class _Run:
    """Mutable bookkeeping for one invocation: artifacts, timings, residuals."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.output = Path(config.output)
        self.artifacts: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self.residuals: dict[str, Optional[float]] = {}
        self.metadata: dict[str, Any] = {}
        self._decomposition: Optional[CorrelationDecomposition] = None

    def path(self, name: str) -> Path:
        self.output.mkdir(parents=True, exist_ok=True)
        path = self.output / name
        self.artifacts[name] = str(path)
        return path

    def timed(self, label: str, started: float) -> None:
        self.timings[label] = time.perf_counter() - started

    def decomposition(self) -> CorrelationDecomposition:
        if self._decomposition is None:
            started = time.perf_counter()
            bath = self.config.bath
            self._decomposition = decompose(bath.bath_spec(), bath.n_matsubara)
            self.timed("decompose", started)
        return self._decomposition

    def write_exponents(self) -> None:
        with open(self.path("exponents.json"), "w") as handle:
            json.dump(self.decomposition().to_dict(), handle, indent=2)

    def composite(self) -> CompositeModel:
        system = self.config.system
        return build_composite(
            self.config.bath.spectral_density,
            system.hamiltonian(),
            system.coupling_operator(),
            self.config.bath.beta,
            self.config.bath.mu,
            system.initial_state(),
        )

    def solver(self) -> Solver:
        config = self.config
        system = config.system
        method = config.solver.method
        if method is Method.LINDBLAD:
            return build_generator_from_bath(
                system.hamiltonian(),
                system.coupling_operator(),
                config.bath.bath_spec(),
            )
        if method is Method.ORACLE:
            return self.composite()
        self.write_exponents()
        started = time.perf_counter()
        hierarchy = build_hierarchy(
            self.decomposition(),
            system.coupling_operator(),
            system.hamiltonian(),
            depth=config.solver.depth,
            mode=config.solver.mode,
            alpha=config.solver.alpha,
        )
        self.timed("assemble", started)
        return hierarchy

    def heom_options(self) -> dict[str, Any]:
        if self.config.solver.method is not Method.HEOM:
            return {}
        solver = self.config.solver
        return {"rtol": solver.rtol, "atol": solver.atol, "method": solver.integrator}

    def dynamics(self) -> None:
        times = self.config.task.time_grid()
        rho0 = self.config.system.initial_state()
        solver = self.solver()
        started = time.perf_counter()
        blocks: ComplexArray | list[ComplexArray]
        if isinstance(solver, CompositeModel):
            blocks = [
                reduce_parity_aware(solver, evolve_exact(solver, float(t))).matrix
                for t in times
            ]
        elif isinstance(solver, LindbladGenerator):
            blocks = [rho.matrix for rho in evolve_lindblad(solver, rho0, times)]
        else:
            blocks = evolve_heom(solver, rho0, times, **self.heom_options()).blocks
        self.timed("evolve", started)
        write_trajectory_csv(self.path("trajectory.csv"), times, blocks)
        deviation = max(abs(np.trace(block) - 1) for block in blocks)
        self.residuals["trace_deviation"] = float(deviation)

    def correlation(self) -> CorrelationResult:
        task = self.config.task
        space = self.config.system.space
        assert task.a is not None and task.b is not None
        started = time.perf_counter()
        result = system_correlation(
            task.a.build(space),
            task.b.build(space),
            self.solver(),
            self.config.system.initial_state(),
            task.time_grid(),
            **self.heom_options(),
        )
        self.timed("correlation", started)
        result.to_csv(self.path("correlation.csv"))
        return result

    def spectrum(self) -> None:
        result = self.correlation()
        task = self.config.task
        started = time.perf_counter()
        transformed = spectrum(result, task.omega_grid(), task.window_width)
        self.timed("spectrum", started)
        transformed.to_csv(self.path("spectrum.csv"))
        self.metadata["spectrum"] = dict(transformed.metadata)

    def verify(self) -> VerificationReport:
        started = time.perf_counter()
        report = run_verification(self.config)
        self.timed("verify", started)
        with open(self.path("verification.json"), "w") as handle:
            json.dump(report.to_dict(), handle, indent=2)
        self.residuals.update(report.residuals())
        return report

    def summary(self, command: str, exit_code: int) -> dict[str, Any]:
        return {
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "command": command,
            "exit_code": exit_code,
            "config": self.config.to_dict(),
            "defaults": effective_defaults(),
            "thresholds": dict(settings.VERIFY_THRESHOLDS),
            "residuals": self.residuals,
            "timings": self.timings,
            "metadata": self.metadata,
            "artifacts": dict(self.artifacts),
        }


def run(config: RunConfig, command: str = "run") -> RunOutcome:
    """
    Execute one command against a validated config and write its artifacts.

    ParityHeomError from the solvers propagates to the caller; main maps it
    to exit status 1.

    """
    if command not in COMMANDS:
        raise ParityHeomError(f"Unknown command {command!r}.")
    state = _Run(config)
    started = time.perf_counter()
    exit_code = EXIT_OK
    kind = config.task.kind
    if command == "decompose":
        state.write_exponents()
    elif command == "verify" or kind is TaskKind.VERIFY:
        if not state.verify().passed:
            exit_code = EXIT_VERIFICATION_FAILED
    elif kind is TaskKind.DYNAMICS:
        state.dynamics()
    elif kind is TaskKind.CORRELATION:
        state.correlation()
    else:
        state.spectrum()
    state.timed("total", started)
    summary_path = state.path("summary.json")
    summary = state.summary(command, exit_code)
    with open(summary_path, "w") as handle:
        json.dump(summary, handle, indent=2)
    logger.info(
        "%s finished with exit status %d in %.2fs",
        command,
        exit_code,
        state.timings["total"],
    )
    return RunOutcome(exit_code, dict(state.artifacts), summary)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parity-heom",
        description="Parity-aware fermionic open-system dynamics and verification.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run the task named in the config",
        "verify": "run the verification suite for the config",
        "decompose": "write the bath exponent decomposition",
    }
    for name in COMMANDS:
        command = commands.add_parser(name, help=helps[name])
        command.add_argument("config", type=Path, help="path to the JSON run config")
        command.add_argument(
            "--output",
            type=Path,
            default=None,
            help="output directory (overrides the config)",
        )
        command.add_argument(
            "-v",
            "--verbose",
            action="count",
            default=0,
            help="repeat for more log output",
        )
    return parser


def configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = parse_config(args.config)
        if args.output is not None:
            config = dataclasses.replace(config, output=str(args.output))
        outcome = run(config, args.command)
    except ParityHeomError as ex:
        logger.error("%s failed: %s", args.command, ex)
        return EXIT_ERROR
    return outcome.exit_code
