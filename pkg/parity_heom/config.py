"""
Run configuration: a single JSON document with system, bath, solver, task
and output sections.

The document is first checked against config_schema() (JSON Schema, draft
2020-12), then against the cross-field rules a schema cannot express, such
as mode indices against n_modes or the hierarchy depth against the bath
exponent count. Every violation is collected before one ConfigError is
raised, so a user sees all problems in a config at once. Validated configs
serialize back to the same document through to_dict.

"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from jsonschema import Draft202012Validator
from jsonschema.exceptions import ValidationError
from scipy import sparse

from . import settings
from .bath import (
    BathSpec,
    DiscreteDensity,
    FlatDensity,
    LorentzianDensity,
    SpectralDensity,
)
from .exceptions import ConfigError
from .fock import (
    DensityMatrix,
    FockOperator,
    FockSpace,
    PairTerm,
    annihilation_op,
    basis_state,
    creation_op,
    quadratic_hamiltonian,
)
from .heom import HierarchyMode

ComplexMatrix = Tuple[Tuple[complex, ...], ...]

INTEGRATORS = ("rk45", "expm")


class Method(str, enum.Enum):
    HEOM = "heom"
    LINDBLAD = "lindblad"
    ORACLE = "oracle"


class TaskKind(str, enum.Enum):
    DYNAMICS = "dynamics"
    CORRELATION = "correlation"
    SPECTRUM = "spectrum"
    VERIFY = "verify"


@dataclass(frozen=True)
class OperatorConfig:
    """A single-mode ladder operator ({"mode", "dagger"}) or an explicit matrix."""

    mode: Optional[int] = None
    dagger: bool = False
    matrix: Optional[ComplexMatrix] = None

    def build(self, space: FockSpace) -> FockOperator:
        if self.matrix is not None:
            matrix = np.array(self.matrix, dtype=complex)
            return FockOperator(space, sparse.csr_matrix(matrix))
        assert self.mode is not None
        if self.dagger:
            return creation_op(space, self.mode)
        return annihilation_op(space, self.mode)

    def to_dict(self) -> dict[str, Any]:
        if self.matrix is not None:
            return {"matrix": _matrix_to_json(self.matrix)}
        return {"mode": self.mode, "dagger": self.dagger}


@dataclass(frozen=True)
class SystemConfig:
    n_modes: int
    energies: Tuple[float, ...]
    coupling: OperatorConfig
    initial_occupations: Tuple[int, ...]
    hoppings: Tuple[PairTerm, ...] = ()
    interactions: Tuple[PairTerm, ...] = ()

    @property
    def space(self) -> FockSpace:
        return FockSpace(self.n_modes)

    def hamiltonian(self) -> FockOperator:
        return quadratic_hamiltonian(
            self.space, self.energies, self.hoppings, self.interactions
        )

    def coupling_operator(self) -> FockOperator:
        return self.coupling.build(self.space)

    def initial_state(self) -> DensityMatrix:
        return basis_state(self.space, self.initial_occupations)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_modes": self.n_modes,
            "energies": list(self.energies),
            "hoppings": [_term_to_json(term) for term in self.hoppings],
            "interactions": [_term_to_json(term) for term in self.interactions],
            "coupling": self.coupling.to_dict(),
            "initial_occupations": list(self.initial_occupations),
        }


@dataclass(frozen=True)
class BathConfig:
    spectral_density: SpectralDensity
    beta: float
    mu: float = 0.0
    n_matsubara: int = settings.DEFAULT_N_MATSUBARA

    def bath_spec(self) -> BathSpec:
        return BathSpec(self.spectral_density, self.beta, self.mu)

    @property
    def exponent_count(self) -> Optional[int]:
        """Number of exponents the decomposition will produce (None for flat)."""
        density = self.spectral_density
        if isinstance(density, DiscreteDensity):
            return 2 * len(density.modes)
        if isinstance(density, LorentzianDensity):
            return 2 * (self.n_matsubara + 1)
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "spectral_density": self.spectral_density.to_dict(),
            "beta": "inf" if math.isinf(self.beta) else self.beta,
            "mu": self.mu,
            "n_matsubara": self.n_matsubara,
        }


@dataclass(frozen=True)
class SolverConfig:
    method: Method = Method.HEOM
    depth: int = settings.DEFAULT_DEPTH
    rtol: float = settings.DEFAULT_RTOL
    atol: float = settings.DEFAULT_ATOL
    alpha: complex = settings.DEFAULT_ALPHA
    mode: HierarchyMode = HierarchyMode.GENERALIZED
    integrator: str = "rk45"

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method.value,
            "depth": self.depth,
            "rtol": self.rtol,
            "atol": self.atol,
            "alpha": [self.alpha.real, self.alpha.imag],
            "mode": self.mode.value,
            "integrator": self.integrator,
        }


@dataclass(frozen=True)
class TaskConfig:
    kind: TaskKind
    t_final: float = 10.0
    n_steps: int = 200
    a: Optional[OperatorConfig] = None
    b: Optional[OperatorConfig] = None
    omega_min: float = -5.0
    omega_max: float = 5.0
    n_omega: int = 501
    window_width: Optional[float] = None

    def time_grid(self) -> npt.NDArray[np.float64]:
        return np.linspace(0.0, self.t_final, self.n_steps + 1)

    def omega_grid(self) -> npt.NDArray[np.float64]:
        return np.linspace(self.omega_min, self.omega_max, self.n_omega)

    def to_dict(self) -> dict[str, Any]:
        document: dict[str, Any] = {
            "kind": self.kind.value,
            "t_final": self.t_final,
            "n_steps": self.n_steps,
        }
        if self.kind in (TaskKind.CORRELATION, TaskKind.SPECTRUM):
            assert self.a is not None and self.b is not None
            document.update(a=self.a.to_dict(), b=self.b.to_dict())
        if self.kind is TaskKind.SPECTRUM:
            document.update(
                omega_min=self.omega_min,
                omega_max=self.omega_max,
                n_omega=self.n_omega,
                window_width=self.window_width,
            )
        return document


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    bath: BathConfig
    task: TaskConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: str = "output"

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system.to_dict(),
            "bath": self.bath.to_dict(),
            "solver": self.solver.to_dict(),
            "task": self.task.to_dict(),
            "output": self.output,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _term_to_json(term: PairTerm) -> list[Any]:
    i, j, value = term
    if isinstance(value, complex):
        return [i, j, [value.real, value.imag]]
    return [i, j, value]


def _matrix_to_json(matrix: ComplexMatrix) -> list[list[list[float]]]:
    return [[[z.real, z.imag] for z in row] for row in matrix]


# schema fragments

_NUMBER = {"type": "number"}

_COMPLEX = {
    "description": "a number or [re, im]",
    "anyOf": [
        _NUMBER,
        {
            "type": "array",
            "prefixItems": [_NUMBER, _NUMBER],
            "minItems": 2,
            "maxItems": 2,
        },
    ],
}

_MODE_INDEX = {"type": "integer", "minimum": 0}

_PAIR_TERM = {
    "description": "[i, j, value]",
    "type": "array",
    "prefixItems": [_MODE_INDEX, _MODE_INDEX, _COMPLEX],
    "minItems": 3,
    "maxItems": 3,
}

_OPERATOR = {
    "description": "exactly one of 'mode' or 'matrix'",
    "type": "object",
    "properties": {
        "mode": _MODE_INDEX,
        "dagger": {"type": "boolean"},
        "matrix": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": _COMPLEX},
        },
    },
    "additionalProperties": False,
    "oneOf": [{"required": ["mode"]}, {"required": ["matrix"]}],
}


def _density_variant(
    kind: str, properties: dict[str, Any], required: list[str]
) -> dict[str, Any]:
    return {
        "if": {"properties": {"type": {"const": kind}}, "required": ["type"]},
        "then": {
            "properties": {"type": True, **properties},
            "required": required,
            "additionalProperties": False,
        },
    }


def config_schema() -> dict[str, Any]:
    """JSON Schema for a run config; limits follow the current settings."""
    density = {
        "type": "object",
        "required": ["type"],
        "properties": {"type": {"enum": ["discrete", "lorentzian", "flat"]}},
        "allOf": [
            _density_variant(
                "discrete",
                {
                    "modes": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "description": "[g, w]",
                            "type": "array",
                            "prefixItems": [_NUMBER, _NUMBER],
                            "minItems": 2,
                            "maxItems": 2,
                        },
                    }
                },
                ["modes"],
            ),
            _density_variant(
                "lorentzian",
                {
                    "gamma": {"type": "number", "minimum": 0},
                    "width": {"type": "number", "exclusiveMinimum": 0},
                    "center": _NUMBER,
                },
                ["gamma", "width"],
            ),
            _density_variant(
                "flat",
                {
                    "gamma": {"type": "number", "minimum": 0},
                    "n0": {"type": "number", "minimum": 0, "maximum": 1},
                },
                ["gamma", "n0"],
            ),
        ],
    }
    system = {
        "type": "object",
        "required": ["n_modes", "energies", "coupling", "initial_occupations"],
        "additionalProperties": False,
        "properties": {
            "n_modes": {
                "type": "integer",
                "minimum": 1,
                "maximum": settings.MAX_ORACLE_MODES,
            },
            "energies": {"type": "array", "items": _NUMBER},
            "hoppings": {"type": "array", "items": _PAIR_TERM},
            "interactions": {"type": "array", "items": _PAIR_TERM},
            "coupling": _OPERATOR,
            "initial_occupations": {"type": "array", "items": {"enum": [0, 1]}},
        },
    }
    bath = {
        "type": "object",
        "required": ["spectral_density", "beta"],
        "additionalProperties": False,
        "properties": {
            "spectral_density": density,
            "beta": {
                "description": 'a number >= 0 or "inf"',
                "anyOf": [{"type": "number", "minimum": 0}, {"const": "inf"}],
            },
            "mu": _NUMBER,
            "n_matsubara": {"type": "integer", "minimum": 1},
        },
    }
    solver = {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "method": {"enum": [method.value for method in Method]},
            "depth": {"type": "integer", "minimum": 0},
            "rtol": {"type": "number", "exclusiveMinimum": 0},
            "atol": {"type": "number", "exclusiveMinimum": 0},
            "alpha": _COMPLEX,
            "mode": {"enum": [mode.value for mode in HierarchyMode]},
            "integrator": {"enum": list(INTEGRATORS)},
        },
    }
    task = {
        "type": "object",
        "required": ["kind"],
        "additionalProperties": False,
        "properties": {
            "kind": {"enum": [kind.value for kind in TaskKind]},
            "t_final": {"type": "number", "minimum": 0},
            "n_steps": {"type": "integer", "minimum": 1},
            "a": _OPERATOR,
            "b": _OPERATOR,
            "omega_min": _NUMBER,
            "omega_max": _NUMBER,
            "n_omega": {"type": "integer", "minimum": 1},
            "window_width": {
                "description": "null or a number > 0",
                "anyOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0}],
            },
        },
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": ["system", "bath", "task"],
        "additionalProperties": False,
        "properties": {
            "system": system,
            "bath": bath,
            "solver": solver,
            "task": task,
            "output": {"type": "string", "minLength": 1},
        },
    }


_TYPE_NAMES = {
    "object": "an object",
    "array": "a list",
    "number": "a number",
    "integer": "an integer",
    "string": "a string",
    "boolean": "true or false",
    "null": "null",
}

_BOUNDS = {
    "minimum": ">=",
    "maximum": "<=",
    "exclusiveMinimum": ">",
    "exclusiveMaximum": "<",
}


def _location(path: Sequence[Union[str, int]]) -> str:
    """Render a JSON path as system.hoppings[0][2]."""
    text = ""
    for part in path:
        if isinstance(part, int):
            text += f"[{part}]"
        else:
            text += f".{part}" if text else str(part)
    return text


def _schema_messages(error: ValidationError) -> list[str]:
    path = list(error.absolute_path)
    where = _location(path) or "config"
    kind = error.validator
    got = f"(got {error.instance!r})"
    if kind == "required":
        missing = [name for name in error.validator_value if name not in error.instance]
        return [f"{_location(path + [name])}: required." for name in missing]
    if kind == "additionalProperties":
        known = set(error.schema.get("properties", {}))
        extra = sorted(set(error.instance) - known)
        return [f"{_location(path + [key])}: unknown key." for key in extra]
    description = error.schema.get("description")
    if kind in ("anyOf", "oneOf", "minItems", "maxItems") and description:
        return [f"{where}: expected {description} {got}."]
    if kind == "type":
        names = error.validator_value
        names = [names] if isinstance(names, str) else names
        expected = " or ".join(_TYPE_NAMES.get(name, name) for name in names)
        return [f"{where}: expected {expected} {got}."]
    if kind == "enum":
        options = ", ".join(str(option) for option in error.validator_value)
        return [f"{where}: expected one of {options} {got}."]
    if kind in _BOUNDS:
        bound = error.validator_value
        return [f"{where}: must be {_BOUNDS[kind]} {bound} (got {error.instance})."]
    return [f"{where}: {error.message}."]


def schema_errors(data: Any) -> list[str]:
    """Every schema violation in a decoded document, as path-keyed messages."""
    validator = Draft202012Validator(config_schema())
    messages: list[str] = []
    for error in validator.iter_errors(data):
        messages.extend(_schema_messages(error))
    return list(dict.fromkeys(messages))


def _complex(value: Any) -> complex:
    if isinstance(value, list):
        return complex(value[0], value[1])
    return complex(value)


class _Builder:
    """Builds dataclasses from a schema-valid document; collects cross-field errors."""

    def __init__(self) -> None:
        self.errors: list[str] = []

    def fail(self, message: str) -> None:
        self.errors.append(message)

    def mode_index(self, value: int, path: str, n_modes: int) -> None:
        if value >= n_modes:
            self.fail(f"{path}: mode {value} is out of range for {n_modes} mode(s).")

    def sized(self, values: Iterable[Any], path: str, n_modes: int) -> Tuple[Any, ...]:
        entries = tuple(values)
        if len(entries) != n_modes:
            self.fail(f"{path}: expected {n_modes} entries (got {len(entries)}).")
        return entries

    def operator(self, data: dict[str, Any], path: str, n_modes: int) -> OperatorConfig:
        if "matrix" in data:
            rows = tuple(
                tuple(_complex(entry) for entry in row) for row in data["matrix"]
            )
            dim = 1 << n_modes
            if len(rows) != dim or any(len(row) != dim for row in rows):
                self.fail(f"{path}.matrix: expected a {dim} x {dim} matrix.")
            return OperatorConfig(matrix=rows)
        mode = int(data["mode"])
        self.mode_index(mode, f"{path}.mode", n_modes)
        return OperatorConfig(mode=mode, dagger=data.get("dagger", False))

    def terms(
        self, data: list[list[Any]], path: str, n_modes: int
    ) -> Tuple[PairTerm, ...]:
        terms = []
        for position, (first, second, raw) in enumerate(data):
            where = f"{path}[{position}]"
            i, j = int(first), int(second)
            self.mode_index(i, where, n_modes)
            self.mode_index(j, where, n_modes)
            if i == j:
                self.fail(f"{where}: a pair term must join two different modes.")
            value = _complex(raw)
            terms.append((i, j, value.real if value.imag == 0 else value))
        return tuple(terms)

    def system(self, data: dict[str, Any]) -> SystemConfig:
        n_modes = data["n_modes"]
        energies = self.sized(
            (float(e) for e in data["energies"]), "system.energies", n_modes
        )
        occupations = self.sized(
            (int(n) for n in data["initial_occupations"]),
            "system.initial_occupations",
            n_modes,
        )
        return SystemConfig(
            n_modes,
            energies,
            self.operator(data["coupling"], "system.coupling", n_modes),
            occupations,
            self.terms(data.get("hoppings", []), "system.hoppings", n_modes),
            self.terms(data.get("interactions", []), "system.interactions", n_modes),
        )

    def bath(self, data: dict[str, Any]) -> BathConfig:
        density_data = data["spectral_density"]
        kind = density_data["type"]
        density: SpectralDensity
        if kind == "discrete":
            modes = tuple((float(g), float(w)) for g, w in density_data["modes"])
            density = DiscreteDensity(modes)
        elif kind == "lorentzian":
            density = LorentzianDensity(
                float(density_data["gamma"]),
                float(density_data["width"]),
                float(density_data.get("center", 0.0)),
            )
        else:
            density = FlatDensity(
                float(density_data["gamma"]), float(density_data["n0"])
            )
        beta = math.inf if data["beta"] == "inf" else float(data["beta"])
        return BathConfig(
            density,
            beta,
            float(data.get("mu", 0.0)),
            int(data.get("n_matsubara", settings.DEFAULT_N_MATSUBARA)),
        )

    def solver(self, data: dict[str, Any], bath: BathConfig) -> SolverConfig:
        alpha = _complex(data.get("alpha", settings.DEFAULT_ALPHA))
        if alpha == 0:
            self.fail(f"solver.alpha: must be non-zero (got {data['alpha']!r}).")
        method = Method(data.get("method", Method.HEOM.value))
        count = bath.exponent_count
        if "depth" in data:
            depth = int(data["depth"])
            if method is Method.HEOM and count is not None and depth > count:
                self.fail(
                    f"solver.depth: depth {depth} exceeds the exponent count {count}."
                )
        else:
            depth = settings.DEFAULT_DEPTH
            if count is not None:
                depth = min(depth, count)
        return SolverConfig(
            method=method,
            depth=depth,
            rtol=float(data.get("rtol", settings.DEFAULT_RTOL)),
            atol=float(data.get("atol", settings.DEFAULT_ATOL)),
            alpha=alpha,
            mode=HierarchyMode(data.get("mode", HierarchyMode.GENERALIZED.value)),
            integrator=data.get("integrator", "rk45"),
        )

    def task(self, data: dict[str, Any], n_modes: int) -> TaskConfig:
        kind = TaskKind(data["kind"])
        operators: dict[str, Optional[OperatorConfig]] = {"a": None, "b": None}
        if kind in (TaskKind.CORRELATION, TaskKind.SPECTRUM):
            for key in operators:
                if key in data:
                    operators[key] = self.operator(data[key], f"task.{key}", n_modes)
                else:
                    self.fail(f"task.{key}: required for a {kind.value} task.")
        omega_min = float(data.get("omega_min", -5.0))
        omega_max = float(data.get("omega_max", 5.0))
        if omega_max <= omega_min:
            self.fail(
                f"task.omega_max: must exceed omega_min ({omega_max} <= {omega_min})."
            )
        window_width = data.get("window_width")
        return TaskConfig(
            kind,
            float(data.get("t_final", 10.0)),
            int(data.get("n_steps", 200)),
            operators["a"],
            operators["b"],
            omega_min,
            omega_max,
            int(data.get("n_omega", 501)),
            None if window_width is None else float(window_width),
        )

    def compatibility(
        self,
        system: SystemConfig,
        bath: BathConfig,
        solver: SolverConfig,
        task: TaskConfig,
    ) -> None:
        density = bath.spectral_density
        method = solver.method
        if method is Method.LINDBLAD and not isinstance(density, FlatDensity):
            self.fail(f"solver.method: lindblad needs a flat bath, not {density.kind}.")
        if method is Method.ORACLE:
            if not isinstance(density, DiscreteDensity):
                self.fail(
                    f"solver.method: oracle needs a discrete bath, not {density.kind}."
                )
            elif len(density.modes) + system.n_modes > settings.MAX_ORACLE_MODES:
                total = len(density.modes) + system.n_modes
                self.fail(
                    f"solver.method: oracle allows {settings.MAX_ORACLE_MODES} "
                    f"modes in total (got {total})."
                )
        if method is not Method.HEOM:
            return
        if isinstance(density, FlatDensity):
            self.fail(
                "solver.method: heom needs a discrete or lorentzian bath, not flat."
            )
        if isinstance(density, LorentzianDensity) and (
            bath.beta == 0 or math.isinf(bath.beta)
        ):
            self.fail(
                "bath.beta: a Lorentzian bath needs a finite, non-zero beta for heom."
            )
        if (
            task.kind in (TaskKind.CORRELATION, TaskKind.SPECTRUM)
            and solver.mode is HierarchyMode.EVEN_STANDARD
        ):
            self.fail(
                "solver.mode: correlation tasks propagate odd objects "
                "and need generalized mode."
            )


def parse_config_dict(data: Any) -> RunConfig:
    """Validate a decoded JSON document; raise ConfigError listing every problem."""
    errors = schema_errors(data)
    if errors:
        raise ConfigError(errors)
    builder = _Builder()
    system = builder.system(data["system"])
    bath = builder.bath(data["bath"])
    solver = builder.solver(data.get("solver", {}), bath)
    task = builder.task(data["task"], system.n_modes)
    builder.compatibility(system, bath, solver, task)
    if builder.errors:
        raise ConfigError(builder.errors)
    return RunConfig(
        system=system,
        bath=bath,
        solver=solver,
        task=task,
        output=data.get("output", "output"),
    )


def parse_config(path: Union[str, Path]) -> RunConfig:
    try:
        with open(path) as handle:
            data = json.load(handle)
    except OSError as ex:
        raise ConfigError([f"Cannot read config {path}: {ex.strerror}."]) from ex
    except json.JSONDecodeError as ex:
        raise ConfigError([f"Config {path} is not valid JSON: {ex}."]) from ex
    return parse_config_dict(data)
