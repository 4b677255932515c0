"""
Fermionic thermal baths.

A bath is a spectral density J(w) together with an inverse temperature and
a chemical potential. Its two-time correlation functions are

    C^sigma(tau) = int dw/pi J(w) exp(i sigma w tau) n^sigma(w),

with n^{+1} = n(w) the Fermi-Dirac occupation and n^{-1} = 1 - n(w). For the
hierarchy they are expanded as sums of exponentials a exp(-b tau).

"""
from __future__ import annotations

import cmath
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, ClassVar, Iterator, Mapping, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import integrate, special

from . import settings
from .exceptions import (
    BathError,
    DecompositionError,
    QuadratureError,
    UnsupportedBath,
)

logger = logging.getLogger(__name__)

SIGMAS = (1, -1)


def fermi_dirac(omega: float, beta: float, mu: float = 0.0) -> float:
    """Return 1 / (exp(beta (omega - mu)) + 1); beta = inf is zero temperature."""
    if beta < 0 or math.isnan(beta):
        raise BathError(f"Inverse temperature must be >= 0 (got {beta}).")
    if math.isinf(beta):
        if omega == mu:
            return 0.5
        return 1.0 if omega < mu else 0.0
    return float(special.expit(-beta * (omega - mu)))


def occupation(
    omega: npt.ArrayLike, sigma: int, beta: float, mu: float = 0.0
) -> npt.NDArray[np.float64]:
    """Return n^sigma(omega) = [1 - sigma + 2 sigma n(omega)] / 2, elementwise."""
    omegas = np.asarray(omega, dtype=float)
    if math.isinf(beta):
        return 0.5 * (1.0 - np.sign(sigma * (omegas - mu)))
    return np.asarray(special.expit(-sigma * beta * (omegas - mu)))


def _occupation_scalar(omega: float, sigma: int, beta: float, mu: float) -> float:
    x = sigma * beta * (omega - mu)
    if x > 0:
        decay = math.exp(-x)
        return decay / (1.0 + decay)
    return 1.0 / (1.0 + math.exp(x))


def _occupation_complex(z: complex, sigma: int, beta: float, mu: float) -> complex:
    x = sigma * beta * (z - mu)
    if x.real > 0:
        decay = cmath.exp(-x)
        denominator = 1.0 + decay
        numerator = decay
    else:
        denominator = 1.0 + cmath.exp(x)
        numerator = 1.0
    if abs(denominator) < 1e-12:
        raise DecompositionError(
            f"The resonance at {z} coincides with a Matsubara pole."
        )
    return numerator / denominator


@dataclass(frozen=True)
class FlatDensity:
    """Energy-independent coupling with a fixed occupation (Markovian limit)."""

    gamma: float
    n0: float
    kind: ClassVar[str] = "flat"

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise BathError(f"Flat bath rate must be >= 0 (got {self.gamma}).")
        if not 0.0 <= self.n0 <= 1.0:
            raise BathError(f"Flat bath occupation must be in [0, 1] (got {self.n0}).")

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "gamma": self.gamma, "n0": self.n0}


@dataclass(frozen=True)
class LorentzianDensity:
    """J(w) = gamma width**2 / ((w - center)**2 + width**2)."""

    gamma: float
    width: float
    center: float = 0.0
    kind: ClassVar[str] = "lorentzian"

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise BathError(f"Lorentzian strength must be >= 0 (got {self.gamma}).")
        if self.width <= 0:
            raise BathError(f"Lorentzian width must be > 0 (got {self.width}).")

    def __call__(self, omega: complex) -> complex:
        return self.gamma * self.width**2 / ((omega - self.center) ** 2 + self.width**2)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": self.kind,
            "gamma": self.gamma,
            "width": self.width,
            "center": self.center,
        }


@dataclass(frozen=True)
class DiscreteDensity:
    """A finite set of bath modes, each given as (coupling g_k, energy w_k)."""

    modes: Tuple[Tuple[float, float], ...]
    kind: ClassVar[str] = "discrete"

    def __post_init__(self) -> None:
        modes = tuple((float(g), float(w)) for g, w in self.modes)
        if not modes:
            raise BathError("A discrete bath needs at least one mode.")
        object.__setattr__(self, "modes", modes)

    @property
    def couplings(self) -> npt.NDArray[np.float64]:
        return np.array([g for g, _ in self.modes])

    @property
    def energies(self) -> npt.NDArray[np.float64]:
        return np.array([w for _, w in self.modes])

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "modes": [list(mode) for mode in self.modes]}


SpectralDensity = Union[FlatDensity, LorentzianDensity, DiscreteDensity]


@dataclass(frozen=True)
class BathSpec:
    density: SpectralDensity
    beta: float
    mu: float = 0.0

    def __post_init__(self) -> None:
        if math.isnan(self.beta) or self.beta < 0:
            raise BathError(f"Inverse temperature must be >= 0 (got {self.beta}).")

    @property
    def zero_temperature(self) -> bool:
        return math.isinf(self.beta)

    def occupation(
        self, omega: npt.ArrayLike, sigma: int = 1
    ) -> npt.NDArray[np.float64]:
        return occupation(omega, sigma, self.beta, self.mu)


@dataclass(frozen=True)
class BathExponent:
    """One term a exp(-b tau) of C^sigma, paired with its (mode, -sigma) partner."""

    sigma: int
    a: complex
    b: complex
    mode: int

    def __post_init__(self) -> None:
        if self.sigma not in SIGMAS:
            raise DecompositionError(
                f"Exponent sigma must be +1 or -1 (got {self.sigma})."
            )
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", complex(self.b))

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma": self.sigma,
            "a": [self.a.real, self.a.imag],
            "b": [self.b.real, self.b.imag],
            "mode": self.mode,
        }


@dataclass(frozen=True)
class CorrelationDecomposition:
    """
    Exponential expansion C^sigma(tau) ~ sum_m a_m^sigma exp(-b_m^sigma tau).

    Every exponent (m, sigma) must have a partner (m, -sigma); the lowering
    vertex of the hierarchy needs the partner's amplitude.

    """

    exponents: Tuple[BathExponent, ...]
    provenance: str
    _partners: Mapping[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        exponents = tuple(self.exponents)
        object.__setattr__(self, "exponents", exponents)
        positions: dict[tuple[int, int], int] = {}
        for index, exponent in enumerate(exponents):
            key = (exponent.mode, exponent.sigma)
            if key in positions:
                raise DecompositionError(
                    f"Exponent (mode={key[0]}, sigma={key[1]}) appears twice."
                )
            positions[key] = index
        partners = {
            index: positions[(exponent.mode, -exponent.sigma)]
            for index, exponent in enumerate(exponents)
            if (exponent.mode, -exponent.sigma) in positions
        }
        object.__setattr__(self, "_partners", partners)

    def __len__(self) -> int:
        return len(self.exponents)

    def __iter__(self) -> Iterator[BathExponent]:
        return iter(self.exponents)

    @property
    def decays(self) -> bool:
        return any(exponent.b.real != 0 for exponent in self.exponents)

    def partner(self, index: int) -> int:
        """Return the index of the (mode, -sigma) partner of exponent index."""
        try:
            return self._partners[index]
        except KeyError:
            exponent = self.exponents[index]
            raise DecompositionError(
                f"Exponent {index} (mode={exponent.mode}, sigma={exponent.sigma}) "
                "has no partner with the opposite sigma."
            ) from None

    def evaluate(self, sigma: int, times: npt.ArrayLike) -> npt.NDArray[np.complex128]:
        """Raw exponent sum at (possibly complex) times."""
        taus = np.asarray(times, dtype=complex)
        total = np.zeros(taus.shape, dtype=complex)
        for exponent in self.exponents:
            if exponent.sigma == sigma:
                total += exponent.a * np.exp(-exponent.b * taus)
        return total

    def correlation(self, sigma: int, tau: npt.ArrayLike) -> Any:
        """
        Return C^sigma(tau) from the expansion.

        Decaying expansions are only valid for tau >= 0; negative times are
        obtained from conj(C(tau)) = C(-tau).

        """
        taus = np.asarray(tau, dtype=float)
        if self.decays:
            values = self.evaluate(sigma, np.abs(taus))
            values = np.where(taus < 0, values.conj(), values)
        else:
            values = self.evaluate(sigma, taus)
        return values[()] if values.ndim == 0 else values

    def concatenate(
        self, *others: CorrelationDecomposition
    ) -> CorrelationDecomposition:
        """Join several baths into one exponent list, renumbering modes."""
        exponents = list(self.exponents)
        provenance = [self.provenance]
        for other in others:
            offset = max((e.mode for e in exponents), default=-1) + 1
            exponents.extend(
                BathExponent(e.sigma, e.a, e.b, e.mode + offset)
                for e in other.exponents
            )
            provenance.append(other.provenance)
        return CorrelationDecomposition(tuple(exponents), "+".join(provenance))

    def to_dict(self) -> dict[str, Any]:
        return {
            "provenance": self.provenance,
            "exponents": [exponent.to_dict() for exponent in self.exponents],
        }

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> CorrelationDecomposition:
        counts = {1: 0, -1: 0}
        exponents = []
        for item in document["exponents"]:
            sigma = int(item["sigma"])
            if sigma not in counts:
                raise DecompositionError(
                    f"Exponent sigma must be +1 or -1 (got {sigma})."
                )
            mode = int(item.get("mode", counts[sigma]))
            counts[sigma] += 1
            exponents.append(
                BathExponent(sigma, complex(*item["a"]), complex(*item["b"]), mode)
            )
        return cls(tuple(exponents), str(document.get("provenance", "external")))


def markov_rates(bath: BathSpec) -> dict[int, float]:
    """Return the white-noise rates Gamma^sigma = Gamma (1 - sigma + 2 sigma n0)."""
    density = bath.density
    if not isinstance(density, FlatDensity):
        raise UnsupportedBath(f"Markov rates need a flat bath, not {density.kind}.")
    return {
        sigma: density.gamma * (1 - sigma + 2 * sigma * density.n0) for sigma in SIGMAS
    }


def correlation_exact(bath: BathSpec, sigma: int, t2: float, t1: float) -> complex:
    """
    Return C^sigma(t2, t1), which depends on tau = t2 - t1 only.

    Discrete baths use the closed-form mode sum; Lorentzian baths are
    integrated numerically.

    """
    if sigma not in SIGMAS:
        raise BathError(f"sigma must be +1 or -1 (got {sigma}).")
    tau = t2 - t1
    density = bath.density
    if isinstance(density, FlatDensity):
        raise UnsupportedBath(
            "A flat bath has delta-correlated fluctuations; use the lindblad module."
        )
    if isinstance(density, DiscreteDensity):
        weights = density.couplings**2 * bath.occupation(density.energies, sigma)
        return complex(np.sum(weights * np.exp(1j * sigma * density.energies * tau)))
    return _lorentzian_correlation(bath, density, sigma, tau)


def _lorentzian_correlation(
    bath: BathSpec, density: LorentzianDensity, sigma: int, tau: float
) -> complex:
    if bath.zero_temperature:
        raise UnsupportedBath("Continuum baths need a finite temperature.")
    half_width = settings.QUAD_WIDTH_FACTOR * density.width
    if bath.beta > 0:
        half_width = max(half_width, settings.QUAD_THERMAL_FACTOR / bath.beta)
    lower = density.center - half_width
    upper = density.center + half_width
    beta, mu = bath.beta, bath.mu
    options = {"epsabs": settings.QUAD_EPSABS, "epsrel": settings.QUAD_EPSREL}

    def weight(omega: float) -> float:
        return (
            density.gamma
            * density.width**2
            / ((omega - density.center) ** 2 + density.width**2)
            * _occupation_scalar(omega, sigma, beta, mu)
            / math.pi
        )

    def mirrored(x: float) -> float:
        return weight(-x)

    frequency = abs(tau)
    # sin(w tau) = sign(tau) sin(w |tau|)
    odd_sign = sigma * (1 if tau >= 0 else -1)
    estimate = 0.0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        if frequency == 0.0:
            points = [p for p in (density.center, mu) if lower < p < upper]
            real, error = integrate.quad(
                weight,
                lower,
                upper,
                points=points or None,
                limit=settings.QUAD_LIMIT,
                **options,
            )
            estimate += error
            for tail in (
                integrate.quad(
                    weight, upper, np.inf, limit=settings.QUAD_LIMIT, **options
                ),
                integrate.quad(
                    weight, -np.inf, lower, limit=settings.QUAD_LIMIT, **options
                ),
            ):
                real += tail[0]
                estimate += tail[1]
            value = complex(real, 0.0)
        else:
            parts = {}
            for kind in ("cos", "sin"):
                core = integrate.quad(
                    weight,
                    lower,
                    upper,
                    weight=kind,
                    wvar=frequency,
                    limit=settings.QUAD_LIMIT,
                    **options,
                )
                high = integrate.quad(
                    weight,
                    upper,
                    np.inf,
                    weight=kind,
                    wvar=frequency,
                    epsabs=settings.QUAD_EPSABS,
                )
                low = integrate.quad(
                    mirrored,
                    -lower,
                    np.inf,
                    weight=kind,
                    wvar=frequency,
                    epsabs=settings.QUAD_EPSABS,
                )
                # the mirrored lower tail flips the sign of the sine part
                low_sign = 1.0 if kind == "cos" else -1.0
                parts[kind] = core[0] + high[0] + low_sign * low[0]
                estimate += core[1] + high[1] + low[1]
            value = complex(parts["cos"], odd_sign * parts["sin"])
    if any(issubclass(w.category, integrate.IntegrationWarning) for w in caught):
        raise QuadratureError(
            f"Correlation quadrature did not converge at tau={tau}", estimate
        )
    logger.debug("C^%+d(%g) = %s (estimated error %.3e)", sigma, tau, value, estimate)
    return value


def decompose_discrete(bath: BathSpec) -> CorrelationDecomposition:
    """Exact expansion of a discrete bath: a = g**2 n^sigma(w), b = -i sigma w."""
    density = bath.density
    if not isinstance(density, DiscreteDensity):
        raise UnsupportedBath(
            f"Exact decomposition needs a discrete bath, not {density.kind}."
        )
    exponents = []
    for mode, (coupling, energy) in enumerate(density.modes):
        for sigma in SIGMAS:
            amplitude = coupling**2 * float(bath.occupation(energy, sigma))
            exponents.append(
                BathExponent(sigma, complex(amplitude), -1j * sigma * energy, mode)
            )
    return CorrelationDecomposition(tuple(exponents), "discrete-exact")


def decompose_matsubara(
    bath: BathSpec, n_matsubara: int | None = None
) -> CorrelationDecomposition:
    """
    Expand a Lorentzian bath by contour integration.

    Per sigma this gives one term from the pole of J at center + i sigma W
    and n_matsubara terms from the Fermi-function poles mu + i sigma nu_j,
    nu_j = (2j - 1) pi / beta. Terms with the same mode index are partners.

    """
    if n_matsubara is None:
        n_matsubara = settings.DEFAULT_N_MATSUBARA
    density = bath.density
    if not isinstance(density, LorentzianDensity):
        raise UnsupportedBath(
            "Matsubara decomposition needs a Lorentzian bath, "
            f"not {density.kind}."
        )
    if bath.zero_temperature or bath.beta == 0:
        raise UnsupportedBath(
            f"Matsubara decomposition needs 0 < beta < inf (got {bath.beta})."
        )
    if n_matsubara < 1:
        raise DecompositionError(f"n_matsubara must be >= 1 (got {n_matsubara}).")
    beta, mu = bath.beta, bath.mu
    gamma, width, center = density.gamma, density.width, density.center
    exponents = []
    for sigma in SIGMAS:
        pole = center + 1j * sigma * width
        exponents.append(
            BathExponent(
                sigma,
                gamma * width * _occupation_complex(pole, sigma, beta, mu),
                width - 1j * sigma * center,
                0,
            )
        )
        for j in range(1, n_matsubara + 1):
            nu = (2 * j - 1) * math.pi / beta
            z = mu + 1j * sigma * nu
            if abs((z - center) ** 2 + width**2) < 1e-12:
                raise DecompositionError(
                    f"Matsubara frequency {nu} coincides with the Lorentzian pole."
                )
            amplitude = -2j / beta * density(z)
            exponents.append(BathExponent(sigma, amplitude, nu - 1j * sigma * mu, j))
    return CorrelationDecomposition(tuple(exponents), f"matsubara{n_matsubara}")


def decompose(
    bath: BathSpec, n_matsubara: int | None = None
) -> CorrelationDecomposition:
    """Dispatch to the decomposition matching the spectral density."""
    if isinstance(bath.density, DiscreteDensity):
        return decompose_discrete(bath)
    return decompose_matsubara(bath, n_matsubara)


def default_taus(bath: BathSpec, count: int = 100) -> npt.NDArray[np.float64]:
    scale = 1.0
    if isinstance(bath.density, LorentzianDensity):
        scale = 1.0 / bath.density.width
    return np.linspace(0.1, 10.0, count) * scale


@dataclass(frozen=True)
class SymmetryReport:
    """Residuals of the correlation-function identities; None means not applicable."""

    hermiticity: float | None
    kms: float | None
    pairing: float | None
    note: str = ""

    @property
    def applicable(self) -> bool:
        values = (self.hermiticity, self.kms, self.pairing)
        return any(value is not None for value in values)

    def as_dict(self) -> dict[str, Any]:
        return {
            "hermiticity": self.hermiticity,
            "kms": self.kms,
            "pairing": self.pairing,
            "note": self.note,
        }


def check_decomposition_symmetries(
    decomposition: CorrelationDecomposition,
    bath: BathSpec,
    taus: Sequence[float] | None = None,
) -> SymmetryReport:
    """
    Measure how well a decomposition satisfies the exact identities.

    hermiticity: conj(C^sigma(tau)) = C^sigma(-tau);
    kms: C^{-1}(-tau) = exp(-beta mu) C^{+1}(tau - i beta);
    pairing: b^{-sigma} = conj(b^sigma) and
    conj(a^{-1}) = exp(-beta (mu - i b^{+1})) a^{+1} for every partner pair.

    """
    if isinstance(bath.density, FlatDensity):
        return SymmetryReport(None, None, None, "not-applicable: delta-correlated bath")
    samples = default_taus(bath) if taus is None else np.asarray(taus, dtype=float)
    hermiticity = max(
        float(
            np.max(
                np.abs(
                    np.conj(decomposition.correlation(sigma, samples))
                    - decomposition.correlation(sigma, -samples)
                )
            )
        )
        for sigma in SIGMAS
    )
    if bath.zero_temperature:
        return SymmetryReport(
            hermiticity, None, None, "kms and pairing need finite beta"
        )
    beta, mu = bath.beta, bath.mu
    kms_lhs = decomposition.correlation(-1, -samples)
    kms_rhs = math.exp(-beta * mu) * decomposition.evaluate(1, samples - 1j * beta)
    kms = float(np.max(np.abs(kms_lhs - kms_rhs)))
    pairing = 0.0
    for index, exponent in enumerate(decomposition.exponents):
        if exponent.sigma != 1:
            continue
        partner = decomposition.exponents[decomposition.partner(index)]
        pairing = max(
            pairing,
            abs(partner.b.conjugate() - exponent.b),
            abs(
                partner.a.conjugate()
                - cmath.exp(-beta * (mu - 1j * exponent.b)) * exponent.a
            ),
        )
    return SymmetryReport(hermiticity, kms, pairing)


def reconstruction_error(
    decomposition: CorrelationDecomposition,
    bath: BathSpec,
    taus: Sequence[float] | None = None,
) -> float:
    """Max deviation from correlation_exact, relative to the largest exact value."""
    samples = default_taus(bath, 25) if taus is None else np.asarray(taus, dtype=float)
    worst = 0.0
    scale = 0.0
    for sigma in SIGMAS:
        exact = np.array([correlation_exact(bath, sigma, tau, 0.0) for tau in samples])
        approx = decomposition.correlation(sigma, samples)
        worst = max(worst, float(np.max(np.abs(approx - exact))))
        scale = max(scale, float(np.max(np.abs(exact))))
    return worst / scale if scale > 0 else worst
