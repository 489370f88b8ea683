"""Qubit and telegraph-noise domain types.

All rates and couplings are inverse microseconds. Qubit energies may be
given in GHz (multiplied by 10**3 on ingestion) when tagged ``unit="GHz"``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

UNIT_SCALE = {"us^-1": 1.0, "MHz": 1.0, "GHz": 1.0e3}
CRITICAL_TOL = 0.05
GAMMA_MAX_FACTOR = 1.0e4


class ConfigurationError(ValueError):
    """Raised when a qubit or noise definition violates its invariants."""


class EmptyEnsembleWarning(UserWarning):
    pass


def to_inverse_us(value: float, unit: str) -> float:
    try:
        return float(value) * UNIT_SCALE[unit]
    except KeyError:
        raise ConfigurationError(
            f"unknown unit {unit!r}; expected one of {sorted(UNIT_SCALE)}"
        ) from None


def working_point(epsilon: float, delta: float) -> tuple[float, float, float]:
    """Return ``(B0, theta, cos_theta)`` for energy bias and tunnel splitting."""
    if epsilon < 0 or delta < 0:
        raise ConfigurationError("epsilon and delta must be non-negative")
    if epsilon == 0 and delta == 0:
        raise ConfigurationError("epsilon and delta cannot both be zero")
    b0 = math.hypot(epsilon, delta)
    theta = math.atan2(delta, epsilon)
    return b0, theta, epsilon / b0


def _cos(theta: float) -> float:
    # exact zero on the transverse axis, where cos(pi/2) would leave 6e-17
    return 0.0 if abs(theta - math.pi / 2) < 1e-12 else math.cos(theta)


@dataclass(frozen=True)
class QubitConfig:
    epsilon: float
    delta: float

    def __post_init__(self):
        working_point(self.epsilon, self.delta)

    @classmethod
    def from_units(cls, epsilon: float, delta: float, unit: str = "us^-1") -> "QubitConfig":
        return cls(to_inverse_us(epsilon, unit), to_inverse_us(delta, unit))

    @property
    def b0(self) -> float:
        return math.hypot(self.epsilon, self.delta)

    @property
    def theta(self) -> float:
        return math.atan2(self.delta, self.epsilon)

    @property
    def cos_theta(self) -> float:
        return self.epsilon / self.b0

    @property
    def sin_theta(self) -> float:
        return self.delta / self.b0


@dataclass(frozen=True)
class RtnSource:
    """A symmetric telegraph fluctuator coupled along ``(sin theta_k, 0, cos theta_k)``."""

    g: float
    gamma: float
    theta_k: float = 0.0

    def __post_init__(self):
        if not self.g >= 0:
            raise ConfigurationError(f"coupling g must be >= 0, got {self.g}")
        if not self.gamma > 0:
            raise ConfigurationError(f"switching rate gamma must be > 0, got {self.gamma}")
        if not -1e-12 <= self.theta_k <= math.pi / 2 + 1e-12:
            raise ConfigurationError(f"theta_k must lie in [0, pi/2], got {self.theta_k}")

    @property
    def coupling_z(self) -> float:
        return self.g * _cos(self.theta_k)

    @property
    def coupling_x(self) -> float:
        return self.g * math.sin(self.theta_k)

    @property
    def eps1(self) -> float:
        vz = self.coupling_z
        if vz <= 0:
            raise ConfigurationError("eps1 undefined for a source with zero longitudinal coupling")
        return self.gamma / vz

    def eps2(self, b0: float) -> float:
        return self.g / b0


class SourceClass(enum.Enum):
    FAST = "fast"
    SLOW = "slow"
    CRITICAL = "critical"


def classify(source: RtnSource, tol: float = CRITICAL_TOL) -> SourceClass:
    vz = source.coupling_z
    if vz > (1.0 + tol) * source.gamma:
        return SourceClass.SLOW
    if vz < (1.0 - tol) * source.gamma:
        return SourceClass.FAST
    return SourceClass.CRITICAL


def split_sources(
    sources: Sequence[RtnSource], tol: float = CRITICAL_TOL, critical_as: SourceClass = SourceClass.SLOW
) -> tuple[list[RtnSource], list[RtnSource], int]:
    """Partition into ``(fast, slow, n_critical)``; critical sources join ``critical_as``."""
    fast, slow, n_crit = [], [], 0
    for src in sources:
        cls = classify(src, tol)
        if cls is SourceClass.CRITICAL:
            n_crit += 1
            cls = critical_as
        (slow if cls is SourceClass.SLOW else fast).append(src)
    return fast, slow, n_crit


@dataclass(frozen=True)
class PowerLawSpectrum:
    """Rate density ``n(gamma) = alpha * gamma**(s - 1)`` on ``[gamma_min, gamma_max]``.

    ``alpha`` carries whatever units make the source count dimensionless; it is
    dimensionless only for ``s == 0``.
    """

    alpha: float
    s: float
    gamma_min: float
    gamma_max: Optional[float] = None
    g: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.gamma_max is None:
            object.__setattr__(self, "gamma_max", GAMMA_MAX_FACTOR * self.gamma_min)
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.gamma_min:
            raise ConfigurationError(f"gamma_min must be > 0, got {self.gamma_min}")
        if not self.gamma_min < self.gamma_max:
            raise ConfigurationError(
                f"gamma_max ({self.gamma_max}) must exceed gamma_min ({self.gamma_min})"
            )
        if not self.g >= 0:
            raise ConfigurationError(f"g must be >= 0, got {self.g}")

    @property
    def gamma_c(self) -> float:
        return self.g * _cos(self.theta)

    def density(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        inside = (gamma >= self.gamma_min) & (gamma <= self.gamma_max)
        return np.where(inside, self.alpha * gamma ** (self.s - 1.0), 0.0)

    def moment(self, lo: float, hi: float, order: int = 0) -> float:
        """Closed form of ``int_lo^hi n(gamma) gamma**order dgamma``."""
        p = self.s + order
        if abs(p) < 1e-14:
            return self.alpha * math.log(hi / lo)
        return self.alpha * (hi**p - lo**p) / p

    @property
    def source_count(self) -> float:
        return self.moment(self.gamma_min, self.gamma_max)

    def quantile(self, u):
        """Inverse CDF of the normalized rate density."""
        u = np.asarray(u, dtype=float)
        lo, hi, s = self.gamma_min, self.gamma_max, self.s
        if abs(s) < 1e-14:
            return lo * (hi / lo) ** u
        return (lo**s + u * (hi**s - lo**s)) ** (1.0 / s)

    def with_theta(self, theta: float) -> "PowerLawSpectrum":
        return PowerLawSpectrum(self.alpha, self.s, self.gamma_min, self.gamma_max, self.g, theta)

    def with_alpha(self, alpha: float) -> "PowerLawSpectrum":
        return PowerLawSpectrum(alpha, self.s, self.gamma_min, self.gamma_max, self.g, self.theta)


def discretize(spectrum: PowerLawSpectrum, seed: Optional[int] = None) -> list[RtnSource]:
    """Realize the continuum rate density as ``round(K)`` sources.

    Rates sit at the quantiles ``(i - 1/2)/K``. Passing ``seed`` draws the
    rates at random from the same density instead.
    """
    k = int(round(spectrum.source_count))
    if k == 0:
        warnings.warn("spectrum holds fewer than half a source; ensemble is empty", EmptyEnsembleWarning)
        return []
    if seed is None:
        u = (np.arange(1, k + 1) - 0.5) / k
    else:
        u = np.sort(np.random.default_rng(seed).uniform(size=k))
    rates = spectrum.quantile(u)
    return [RtnSource(spectrum.g, float(r), spectrum.theta) for r in rates]


def lorentzian(g: float, gamma: float, omega):
    omega = np.asarray(omega, dtype=float)
    return g * g * 4.0 * gamma / (omega * omega + 4.0 * gamma * gamma)


def psd(sources: Sequence[RtnSource], omega):
    """Noise power ``S(omega) = sum_k g_k**2 4 gamma_k / (omega**2 + 4 gamma_k**2)``.

    Normalized so ``Gamma_1 = sin^2(theta) S(B0) / 2`` and
    ``Gamma_phi = cos^2(theta) S(0) / 2`` for a single source.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be non-negative")
    total = np.zeros_like(omega)
    for src in sources:
        total = total + lorentzian(src.g, src.gamma, omega)
    return total
