"""Closed-form echo and relaxation signals for telegraph-noise ensembles."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .noise_model import (
    CRITICAL_TOL,
    ConfigurationError,
    PowerLawSpectrum,
    QubitConfig,
    RtnSource,
    SourceClass,
    classify,
    split_sources,
)

QUAD_RTOL = 1e-9


class ClassificationError(ValueError):
    """A source was passed to a formula valid only for the other regime."""


class NoLoopingError(ValueError):
    """Looping needs a nonzero longitudinal coupling."""


class OutOfBandWarning(UserWarning):
    pass


class Protocol(str, enum.Enum):
    ER = "ER"
    SE = "SE"
    PHI_SE = "PhiSE"


@dataclass(frozen=True)
class RateSet:
    gamma1: float
    gamma_phi: float
    gamma3: float
    gamma_c: float
    n_critical: int = 0

    @property
    def gamma2(self) -> float:
        return 0.5 * self.gamma1 + self.gamma_phi


@dataclass
class DecoherenceCurve:
    protocol: Protocol
    times: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.protocol = Protocol(self.protocol)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.times.size and self.times[0] < 0:
            raise ValueError("times must be non-negative")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr must match values in length")
            if np.any(self.stderr < 0):
                raise ValueError("stderr must be non-negative")

    def __len__(self):
        return self.times.size


def _check_fast(sources: Sequence[RtnSource], tol: float):
    for src in sources:
        if classify(src, tol) is SourceClass.SLOW:
            raise ClassificationError(f"slow source {src} passed to a fast-noise rate")


def gamma1_discrete(fast_sources: Sequence[RtnSource], b0: float, tol: float = CRITICAL_TOL) -> float:
    """Redfield relaxation rate of the fast sources."""
    if not b0 > 0:
        raise ConfigurationError("B0 must be positive")
    _check_fast(fast_sources, tol)
    return float(sum(
        2.0 * s.gamma * s.g**2 * math.sin(s.theta_k) ** 2 / (4.0 * s.gamma**2 + b0**2)
        for s in fast_sources
    ))


def gamma_phi_discrete(fast_sources: Sequence[RtnSource], tol: float = CRITICAL_TOL) -> float:
    _check_fast(fast_sources, tol)
    return float(sum(s.coupling_z**2 / (2.0 * s.gamma) for s in fast_sources))


def gamma2(fast_sources: Sequence[RtnSource], b0: float, tol: float = CRITICAL_TOL) -> float:
    return 0.5 * gamma1_discrete(fast_sources, b0, tol) + gamma_phi_discrete(fast_sources, tol)


def gamma3_discrete(slow_sources: Sequence[RtnSource]) -> float:
    return float(sum(s.gamma for s in slow_sources))


def rates(sources: Sequence[RtnSource], qubit: QubitConfig, tol: float = CRITICAL_TOL) -> RateSet:
    fast, slow, n_crit = split_sources(sources, tol)
    # rms longitudinal coupling; equals g cos(theta) for a common coupling
    gc = math.sqrt(sum(s.coupling_z**2 for s in sources) / len(sources)) if sources else 0.0
    return RateSet(
        gamma1=gamma1_discrete(fast, qubit.b0, tol),
        gamma_phi=gamma_phi_discrete(fast, tol),
        gamma3=gamma3_discrete(slow),
        gamma_c=gc,
        n_critical=n_crit,
    )


def gamma3_continuum(spectrum: PowerLawSpectrum, gamma_c: float) -> float:
    """Total switching rate of the sources slower than ``gamma_c``."""
    if gamma_c < spectrum.gamma_min:
        warnings.warn(
            f"gamma_c={gamma_c} lies below gamma_min={spectrum.gamma_min}; no slow sources",
            OutOfBandWarning,
        )
        return 0.0
    if gamma_c > spectrum.gamma_max:
        warnings.warn(f"gamma_c={gamma_c} exceeds gamma_max; clipping", OutOfBandWarning)
        gamma_c = spectrum.gamma_max
    return spectrum.moment(spectrum.gamma_min, gamma_c, order=1)


def gamma1_continuum(
    spectrum: PowerLawSpectrum,
    b0: float,
    gamma_c: Optional[float] = None,
    gamma_max: Optional[float] = None,
) -> float:
    """Relaxation rate from the fast part of the spectrum.

    Integrates the Redfield rate over ``n(gamma)`` from ``max(gamma_c, gamma_min)``
    to ``gamma_max`` (may be ``inf``). The noise angle is ``spectrum.theta``.
    """
    if gamma_c is None:
        gamma_c = spectrum.gamma_c
    if gamma_max is None:
        gamma_max = spectrum.gamma_max
    if spectrum.g > 0.1 * b0:
        warnings.warn("B0 is not much larger than g; Redfield rate is unreliable", OutOfBandWarning)
    lo = max(gamma_c, spectrum.gamma_min)
    if gamma_max <= lo:
        return 0.0
    amp = spectrum.g**2 * math.sin(spectrum.theta) ** 2
    if amp == 0.0:
        return 0.0
    if abs(spectrum.s) < 1e-14:
        hi_term = math.pi / 2 if math.isinf(gamma_max) else math.atan(2.0 * gamma_max / b0)
        return spectrum.alpha * amp / b0 * (hi_term - math.atan(2.0 * lo / b0))

    def integrand(gam):
        return spectrum.alpha * gam ** (spectrum.s - 1.0) * 2.0 * gam / (4.0 * gam * gam + b0 * b0)

    val, _ = integrate.quad(integrand, lo, gamma_max, epsrel=QUAD_RTOL, epsabs=0.0, limit=200)
    return amp * val


def gamma_phi_continuum(spectrum: PowerLawSpectrum, gamma_c: Optional[float] = None) -> float:
    if gamma_c is None:
        gamma_c = spectrum.gamma_c
    lo = max(gamma_c, spectrum.gamma_min)
    if lo >= spectrum.gamma_max:
        return 0.0
    vz2 = (spectrum.g * math.cos(spectrum.theta)) ** 2
    return 0.5 * vz2 * spectrum.moment(lo, spectrum.gamma_max, order=-1)


def n_er_discrete(sources: Sequence[RtnSource], qubit: QubitConfig, t, tol: float = CRITICAL_TOL):
    """Population decay; fast sources give Gamma_1, slow ones a small correction."""
    fast, slow, _ = split_sources(sources, tol)
    b0 = qubit.b0
    slow_rate = sum(2.0 * s.gamma * (s.g / b0) ** 2 * math.sin(s.theta_k) ** 2 for s in slow)
    rate = gamma1_discrete(fast, b0, tol) + slow_rate
    return np.exp(-rate * np.asarray(t, dtype=float))


def _slow_bracket(slow: Sequence[RtnSource], t):
    bracket = np.ones_like(t)
    for s in slow:
        vz = s.coupling_z
        if vz <= 0:
            raise ClassificationError("slow source with zero longitudinal coupling has undefined eps1")
        bracket = bracket + (s.gamma / vz) * np.sin(vz * t)
    return bracket


def n_se_discrete(sources: Sequence[RtnSource], qubit: QubitConfig, t, tol: float = CRITICAL_TOL):
    t = np.asarray(t, dtype=float)
    fast, slow, _ = split_sources(sources, tol)
    decay = gamma2(fast, qubit.b0, tol) + gamma3_discrete(slow)
    return np.exp(-decay * t) * _slow_bracket(slow, t)


def phi_se_discrete(sources: Sequence[RtnSource], t, tol: float = CRITICAL_TOL):
    """Pure-dephasing echo of a discrete ensemble: the echo with the Gamma_1/2 factor removed.

    Unlike the continuum ``phi_se``, the fast sources' ``Gamma_phi`` is kept.
    """
    t = np.asarray(t, dtype=float)
    fast, slow, _ = split_sources(sources, tol)
    decay = gamma_phi_discrete(fast, tol) + gamma3_discrete(slow)
    return np.exp(-decay * t) * _slow_bracket(slow, t)


def phi_se(gamma3: float, gamma_c: float, t):
    """Phase-memory functional of a power-law ensemble with common coupling."""
    t = np.asarray(t, dtype=float)
    if gamma3 == 0.0:
        return np.ones_like(t)
    if gamma_c <= 0:
        raise NoLoopingError("gamma_c must be positive when gamma3 > 0")
    return np.exp(-gamma3 * t) * (1.0 + (gamma3 / gamma_c) * np.sin(gamma_c * t))


def n_se_continuum(spectrum: PowerLawSpectrum, qubit: QubitConfig, t, exact_gamma2: bool = False):
    """Echo signal of a power-law ensemble whose noise axis follows the working point.

    By default Gamma_2 is the working-point independent ``Gamma_1(pi/2)/2``;
    ``exact_gamma2`` uses ``Gamma_1(theta)/2 + Gamma_phi(theta)`` instead.
    """
    spec = spectrum.with_theta(qubit.theta)
    gc = spec.gamma_c
    g3 = gamma3_continuum(spec, gc) if gc >= spec.gamma_min else 0.0
    if exact_gamma2:
        g2 = 0.5 * gamma1_continuum(spec, qubit.b0, gc) + gamma_phi_continuum(spec, gc)
    else:
        g2 = 0.5 * gamma1_continuum(spec.with_theta(math.pi / 2), qubit.b0, 0.0)
    return np.exp(-g2 * np.asarray(t, dtype=float)) * phi_se(g3, gc, t)


def gaussian_model(gamma_g: float, t):
    t = np.asarray(t, dtype=float)
    return np.exp(-(gamma_g * t) ** 2)


def plateau_time(gamma_c: float) -> float:
    """Center of the first echo plateau, ``5 pi / (2 gamma_c)``."""
    if not gamma_c > 0:
        raise NoLoopingError("no plateau without a positive critical rate")
    return 5.0 * math.pi / (2.0 * gamma_c)


def looping_period(g: float, cos_theta: float) -> float:
    vz = g * cos_theta
    if not vz > 0:
        raise NoLoopingError("no looping when the longitudinal coupling g cos(theta) vanishes")
    return 2.0 * math.pi / vz


def envelope(gamma3: float, gamma_c: float, t):
    t = np.asarray(t, dtype=float)
    return np.exp(-gamma3 * t) * (1.0 + gamma3 / gamma_c)


def plateau_height(times, values) -> float:
    """Signal level at the first flattening of a sampled decay curve.

    Returns the value where ``|d value/dt|`` first has an interior local
    minimum, or 0 when the curve decays without flattening. Higher means a
    more visible plateau.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    slope = np.abs(np.gradient(values, times))
    for i in range(2, slope.size - 1):
        if slope[i] <= slope[i - 1] and slope[i] < slope[i + 1]:
            return float(values[i])
    return 0.0
