"""Noise-parameter inference from echo and relaxation curves.

Per working point, the phase-memory functional gives ``(Gamma_3, gamma_c)``.
Across working points ``gamma_c = g cos(theta)`` yields ``g`` and the
``Gamma_3(gamma_c)`` relation yields ``alpha``, ``gamma_min`` and the
spectral exponent ``s``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import analytic
from .analytic import DecoherenceCurve, Protocol
from .noise_model import PowerLawSpectrum
from .solver import levenberg_marquardt

GAUSS_WINDOW = 0.2
S_GRID = (-0.5, 0.0, 0.5, 1.0)
GC_GRID = np.logspace(-1.0, 1.0, 41)
G3_GRID = np.logspace(-1.0, 0.0, 6)
N_REFINE = 8
MISSING_NOISE_RATIO = 0.2
COMPLETE_RATIO = (0.5, 2.0)


class InsufficientDataError(ValueError):
    pass


class UnderdeterminedError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, best_candidate=None):
        super().__init__(message)
        self.best_candidate = best_candidate


@dataclass
class PhiSEFit:
    gamma3: float
    gamma_c: float
    covariance: np.ndarray
    residual_rms: float
    n_points: int
    iterations: int = 0


@dataclass
class WorkingPointFit:
    cos_theta: float
    gamma3_hat: float
    gamma_c_hat: float
    gamma_G_hat: float
    residual_rms: float
    covariance: list
    n_points: int

    @property
    def gamma3_stderr(self) -> float:
        return math.sqrt(max(self.covariance[0][0], 0.0))

    @property
    def gamma_c_stderr(self) -> float:
        return math.sqrt(max(self.covariance[1][1], 0.0))


@dataclass
class Gamma3Fit:
    s: float
    alpha: float
    gamma_min: float
    alpha_stderr: float
    gamma_min_stderr: float
    rss: float
    clamped: bool = False

    @property
    def gamma_min_consistent_with_zero(self) -> bool:
        return self.clamped or self.gamma_min < 2.0 * self.gamma_min_stderr


@dataclass
class FitReport:
    per_point: list = field(default_factory=list)
    g_hat: Optional[float] = None
    alpha_hat: Optional[float] = None
    s_hat: Optional[float] = None
    gamma_min_hat: Optional[float] = None
    gamma_min_stderr: Optional[float] = None
    gamma_min_flag: Optional[str] = None
    gamma1_th: Optional[float] = None
    gamma1_th_range: Optional[list] = None
    gamma1_ex: Optional[float] = None
    consistency_ratio: Optional[float] = None
    consistency_verdict: Optional[str] = None
    gof: list = field(default_factory=list)
    underdetermined: Optional[str] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_point"] = [asdict(p) for p in self.per_point]
        return d


def _weights(curve: DecoherenceCurve):
    if curve.stderr is None:
        return None
    err = np.asarray(curve.stderr, dtype=float)
    positive = err[err > 0]
    if positive.size == 0:
        return None
    return 1.0 / np.maximum(err, positive.min())


def _require_phi(curve: DecoherenceCurve):
    if curve.protocol is not Protocol.PHI_SE:
        raise ValueError(f"expected a PhiSE curve, got {curve.protocol.value}")


def fit_gaussian(curve: DecoherenceCurve, min_value: float = GAUSS_WINDOW) -> float:
    """``Gamma_G`` from regressing ``-ln(value)`` on ``t**2`` through the origin.

    Only points with ``value >= min_value`` enter the fit.
    """
    _require_phi(curve)
    mask = curve.values >= min_value
    if mask.sum() < 4:
        raise InsufficientDataError(f"need >= 4 points with value >= {min_value}, have {int(mask.sum())}")
    t2 = curve.times[mask] ** 2
    y = -np.log(np.minimum(curve.values[mask], 1.0))
    denom = t2 @ t2
    if denom == 0:
        raise InsufficientDataError("all in-window points sit at t = 0")
    return math.sqrt(max(t2 @ y / denom, 0.0))


def _phi_model(q, t):
    """Phase-memory model and its Jacobian in log-parameters ``q = ln(gamma3, gamma_c)``."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _phi_model_raw(q, t)


def _phi_model_raw(q, t):
    g3, gc = np.exp(q)
    e = np.exp(-g3 * t)
    sn, cs = np.sin(gc * t), np.cos(gc * t)
    bracket = 1.0 + (g3 / gc) * sn
    model = e * bracket
    d_g3 = -t * model + e * sn / gc
    d_gc = e * g3 * (t * cs / gc - sn / gc**2)
    return model, np.column_stack([d_g3 * g3, d_gc * gc])


def fit_phi_se(curve: DecoherenceCurve, weights=None) -> PhiSEFit:
    """Weighted nonlinear least squares of the phase-memory functional.

    ``gamma_c`` is seeded from a log grid around the Gaussian estimate because
    the oscillating term makes the cost multimodal; the ``N_REFINE`` best seeds are
    refined and the lowest cost wins.
    """
    _require_phi(curve)
    t, y = curve.times, curve.values
    if t.size < 6:
        raise InsufficientDataError(f"need >= 6 points, have {t.size}")
    w = _weights(curve) if weights is None else np.asarray(weights, dtype=float)
    w = np.ones_like(y) if w is None else w
    try:
        g3_0 = math.sqrt(2.0) * fit_gaussian(curve)
    except InsufficientDataError:
        g3_0 = 1.0 / float(np.median(t[t > 0]))
    if g3_0 == 0.0 or np.allclose(y, 1.0, rtol=0, atol=1e-12):
        raise InsufficientDataError("no decay: Gamma_3 = 0 leaves gamma_c unidentifiable")

    def fun(q):
        return (_phi_model(q, t)[0] - y) * w

    def jac(q):
        return _phi_model(q, t)[1] * w[:, None]

    # the Gaussian seed overshoots Gamma_3 when Gamma_3 << gamma_c, so Gamma_3 is
    # scanned downward too, and gamma_c spans 0.1..10 times the larger of the two
    seeds = [(g3_0 * a, g3_0 * b) for a in G3_GRID for b in GC_GRID]
    seeds += [(g3_0 * a, g3_0 * a * b) for a in G3_GRID[:-1] for b in GC_GRID * 10.0]
    costs = [float(np.sum(fun(np.log(seed)) ** 2)) for seed in seeds]
    best = None
    for idx in np.argsort(costs, kind="stable")[:N_REFINE]:
        res = levenberg_marquardt(fun, jac, np.log(seeds[idx]))
        if res.converged and (best is None or res.cost < best.cost):
            best = res
    if best is None:
        raise NonConvergenceError(
            "phase-memory fit did not converge",
            best_candidate=seeds[int(np.argmin(costs))],
        )
    p = np.exp(best.x)
    cov_q = best.covariance(absolute_sigma=weights is None and _weights(curve) is not None)
    cov = cov_q * np.outer(p, p)
    rms = math.sqrt(float(np.mean((_phi_model(best.x, t)[0] - y) ** 2)))
    return PhiSEFit(float(p[0]), float(p[1]), cov, rms, int(t.size), best.iterations)


def fit_working_point(curve: DecoherenceCurve, cos_theta: float) -> WorkingPointFit:
    fit = fit_phi_se(curve)
    try:
        gg = fit_gaussian(curve)
    except InsufficientDataError:
        gg = float("nan")
    return WorkingPointFit(
        cos_theta=float(cos_theta),
        gamma3_hat=fit.gamma3,
        gamma_c_hat=fit.gamma_c,
        gamma_G_hat=gg,
        residual_rms=fit.residual_rms,
        covariance=fit.covariance.tolist(),
        n_points=fit.n_points,
    )


def regress_gc(points: Sequence[tuple[float, float]], sigma: Optional[Sequence[float]] = None) -> float:
    """Slope ``g`` of ``gamma_c = g cos(theta)`` through the origin."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise InsufficientDataError("need at least one (cos_theta, gamma_c) point")
    x, y = pts[:, 0], pts[:, 1]
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    denom = np.sum(w * x * x)
    if denom == 0:
        raise InsufficientDataError("all working points have cos(theta) = 0")
    return float(np.sum(w * x * y) / denom)


def _gamma3_basis(x, s, gmin):
    p = s + 1.0
    if abs(p) < 1e-14:
        return np.log(x / gmin)
    return (x**p - gmin**p) / p


def _linear_gamma3(x, y, w):
    """Weighted fit of ``Gamma_3 = alpha gamma_c - alpha gamma_min``."""
    X = np.column_stack([x, np.ones_like(x)])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = (X @ coef - y) * sw
    dof = max(x.size - 2, 1)
    cov = np.linalg.pinv((X * w[:, None]).T @ X) * (resid @ resid) / dof
    return coef, cov


def regress_gamma3(
    points: Sequence[tuple[float, float]], s: float = 0.0, sigma: Optional[Sequence[float]] = None
) -> Gamma3Fit:
    """Fit ``alpha`` and ``gamma_min`` to ``(gamma_c, Gamma_3)`` pairs at fixed ``s``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise UnderdeterminedError("need at least two (gamma_c, Gamma_3) points")
    x, y = pts[:, 0], pts[:, 1]
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    (a, b), cov = _linear_gamma3(x, y, w)
    if s == 0.0 and a > 0 and -b / a >= 0:
        gmin = -b / a
        # delta method on gamma_min = -b / a
        grad = np.array([b / a**2, -1.0 / a])
        gmin_err = math.sqrt(max(grad @ cov @ grad, 0.0))
        rss = float(np.sum(w * (a * (x - gmin) - y) ** 2))
        return Gamma3Fit(0.0, float(a), float(gmin), math.sqrt(max(cov[0, 0], 0.0)), gmin_err, rss)

    gmin0 = -b / a if a > 0 and 0 < -b / a < x.min() else 0.1 * x.min()
    f0 = _gamma3_basis(x, s, gmin0)
    alpha0 = max(float(np.sum(w * f0 * y) / np.sum(w * f0 * f0)), 1e-6)
    sw = np.sqrt(w)

    def fun(q):
        al, gm = np.exp(q)
        return (al * _gamma3_basis(x, s, gm) - y) * sw

    def jac(q):
        al, gm = np.exp(q)
        d_al = _gamma3_basis(x, s, gm)
        d_gm = -al * gm**s * np.ones_like(x)
        return np.column_stack([d_al * al, d_gm * gm]) * sw[:, None]

    res = levenberg_marquardt(fun, jac, np.log([alpha0, gmin0]))
    al, gm = np.exp(res.x)
    cov_q = res.covariance()
    errs = np.sqrt(np.maximum(np.diag(cov_q), 0.0)) * np.array([al, gm])
    clamped = gm < 1e-6 * x.min()
    if clamped:
        gm = 0.0 if s > -1.0 else gm
    rss = float(np.sum(w * (al * _gamma3_basis(x, s, gm) - y) ** 2)) if gm > 0 or s > -1 else res.cost
    return Gamma3Fit(float(s), float(al), float(gm), float(errs[0]), float(errs[1]), rss, bool(clamped))


def scan_s(
    points: Sequence[tuple[float, float]], grid: Sequence[float] = S_GRID, sigma=None
) -> tuple[float, list[Gamma3Fit]]:
    """Pick the exponent whose ``Gamma_3(gamma_c)`` fit has the smallest residual."""
    if len(points) < 4:
        raise UnderdeterminedError(f"s scan needs >= 4 working points, have {len(points)}")
    table = [regress_gamma3(points, s, sigma) for s in grid]
    best = min(table, key=lambda f: f.rss)
    return best.s, table


def fit_er(curve: DecoherenceCurve, floor: float = 0.05) -> float:
    """Relaxation rate from a log-linear fit of an ER curve above ``floor``."""
    if curve.protocol is not Protocol.ER:
        raise ValueError(f"expected an ER curve, got {curve.protocol.value}")
    mask = curve.values > floor
    if curve.stderr is not None:
        mask &= curve.values > 3.0 * curve.stderr
    if mask.sum() < 3:
        raise InsufficientDataError("need >= 3 ER points above the noise floor")
    slope, _ = np.polyfit(curve.times[mask], np.log(curve.values[mask]), 1)
    return float(-slope)


def consistency_verdict(ratio: float) -> str:
    if ratio < MISSING_NOISE_RATIO:
        return "additional high-frequency noise suspected"
    if COMPLETE_RATIO[0] <= ratio <= COMPLETE_RATIO[1]:
        return "noise model reasonably complete"
    return "inconclusive"


def consistency_check(report: FitReport) -> Optional[float]:
    """Fill in ``Gamma_1(th) / Gamma_1(ex)`` and its verdict when both are known."""
    if report.gamma1_th is None or report.gamma1_ex is None:
        return None
    ratio = report.gamma1_th / report.gamma1_ex
    report.consistency_ratio = ratio
    report.consistency_verdict = consistency_verdict(ratio)
    return ratio


def theory_gamma1(alpha, s, gamma_min, g, delta, cos_theta=0.0, gamma_max=None):
    """Relaxation rate implied by fitted noise parameters at one working point.

    ``delta`` is the splitting at ``cos(theta) = 0``, so ``B0 = delta / sin(theta)``.
    The rate cutoff defaults to infinity, which converges only for ``s < 1``;
    otherwise it defaults to ``1e3 * B0``.
    """
    cos_theta = min(max(cos_theta, 0.0), 1.0 - 1e-12)
    sin_theta = math.sqrt(1.0 - cos_theta**2)
    b0 = delta / sin_theta
    if gamma_max is None:
        gamma_max = math.inf if s < 1.0 else 1e3 * b0
    spec = PowerLawSpectrum(alpha, s, max(gamma_min, 1e-12), gamma_max, g, math.acos(cos_theta))
    return analytic.gamma1_continuum(spec, b0, g * cos_theta, gamma_max)


def analyze(
    curves: Mapping[float, DecoherenceCurve],
    delta: Optional[float] = None,
    gamma1_ex: Optional[float] = None,
    s_grid: Sequence[float] = S_GRID,
    weighted: bool = True,
) -> FitReport:
    """Full pipeline from per-working-point curves to global noise parameters.

    ``delta`` is the qubit splitting at ``cos(theta) = 0``; the theoretical
    ``Gamma_1`` is evaluated there and over the fitted working points.
    With ``weighted`` the regressions use the per-point fit errors; ``gamma_min``
    is a small intercept and is poorly determined without them.
    """
    report = FitReport()
    for cos_theta in sorted(curves):
        report.per_point.append(fit_working_point(curves[cos_theta], cos_theta))
    pp = report.per_point
    distinct = {p.cos_theta for p in pp}
    if len(distinct) < 2:
        report.underdetermined = "global parameters need >= 2 distinct working points"
        return report
    sig_c = sig_3 = None
    if weighted:
        sig_c = [p.gamma_c_stderr for p in pp]
        sig_3 = [p.gamma3_stderr for p in pp]
        if not all(math.isfinite(e) and e > 0 for e in sig_c + sig_3):
            # exact (noiseless) fits carry zero errors
            sig_c = sig_3 = None
            report.notes.append("per-point errors vanish; regressions unweighted")
    report.g_hat = regress_gc([(p.cos_theta, p.gamma_c_hat) for p in pp], sig_c)
    g3_points = [(p.gamma_c_hat, p.gamma3_hat) for p in pp]
    if len(pp) >= 4:
        s_hat, table = scan_s(g3_points, s_grid, sig_3)
        report.gof = [asdict(f) for f in table]
        best = next(f for f in table if f.s == s_hat)
    else:
        report.notes.append("s scan needs >= 4 working points; s fixed at 0")
        best = regress_gamma3(g3_points, 0.0, sig_3)
        report.gof = [asdict(best)]
    report.s_hat = best.s
    report.alpha_hat = best.alpha
    report.gamma_min_hat = best.gamma_min
    report.gamma_min_stderr = best.gamma_min_stderr
    if best.clamped:
        report.gamma_min_flag = "clamped to 0"
    elif best.gamma_min_consistent_with_zero:
        report.gamma_min_flag = "consistent with 0"
    if delta is not None:
        report.gamma1_th = theory_gamma1(best.alpha, best.s, best.gamma_min, report.g_hat, delta)
        spread = [
            theory_gamma1(best.alpha, best.s, best.gamma_min, report.g_hat, delta, c)
            for c in sorted(distinct)
        ]
        report.gamma1_th_range = [min(spread), max(spread)]
    report.gamma1_ex = gamma1_ex
    consistency_check(report)
    return report
