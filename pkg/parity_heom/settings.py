import json
import os

_settings = json.loads(os.environ.get("PARITY_HEOM_SETTINGS") or "{}")

# default hierarchy truncation depth
DEFAULT_DEPTH: int = _settings.get("DEFAULT_DEPTH", 4)

# default integrator tolerances for the adaptive Runge-Kutta stepper
DEFAULT_RTOL: float = _settings.get("DEFAULT_RTOL", 1e-8)
DEFAULT_ATOL: float = _settings.get("DEFAULT_ATOL", 1e-10)

# default ADO scale; stored in JSON as [re, im], defaults to i
DEFAULT_ALPHA: complex = complex(*_settings.get("DEFAULT_ALPHA", (0.0, 1.0)))

# default number of Fermi-function poles kept per sigma for continuum baths
DEFAULT_N_MATSUBARA: int = _settings.get("DEFAULT_N_MATSUBARA", 10)

# total (system + environment) mode cap for exact diagonalization
MAX_ORACLE_MODES: int = _settings.get("MAX_ORACLE_MODES", 12)

# adaptive quadrature settings for continuum correlation functions
QUAD_EPSABS: float = _settings.get("QUAD_EPSABS", 1e-12)
QUAD_EPSREL: float = _settings.get("QUAD_EPSREL", 1e-10)
QUAD_LIMIT: int = _settings.get("QUAD_LIMIT", 500)

# quadrature window is center +/- max(WIDTH_FACTOR * W, THERMAL_FACTOR / beta)
QUAD_WIDTH_FACTOR: float = _settings.get("QUAD_WIDTH_FACTOR", 50.0)
QUAD_THERMAL_FACTOR: float = _settings.get("QUAD_THERMAL_FACTOR", 20.0)

# Gauss-Legendre nodes per time axis in the second-order Dyson quadrature
DYSON_NODES: int = _settings.get("DYSON_NODES", 24)

# pass/fail thresholds for the verification suite
VERIFY_THRESHOLDS: dict = {
    "hermiticity": 1e-10,
    "kms": 1e-3,
    "pairing": 1e-10,
    "reconstruction": 1e-3,
    "heom_vs_exact": 1e-4,
    "odd_correlation": 1e-4,
    "alpha_invariance": 1e-10,
    "trace_preservation": 1e-8,
    "partial_trace": 1e-12,
    "wick": 1e-10,
    "dyson": 1e-5,
    **_settings.get("VERIFY_THRESHOLDS", {}),
}

# worker threads for the verification suite and spectrum fan-out
NUM_THREADS: int = int(
    os.environ.get("PARITY_HEOM_NUM_THREADS", _settings.get("NUM_THREADS", 1))
)
