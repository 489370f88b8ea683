"""Damped Gauss-Newton (Levenberg-Marquardt) least squares."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    residual: np.ndarray
    jac: np.ndarray
    iterations: int
    converged: bool

    @property
    def cost(self) -> float:
        return float(self.residual @ self.residual)

    def covariance(self, absolute_sigma: bool = False) -> np.ndarray:
        """Parameter covariance ``(J^T J)^-1``, scaled by the reduced chi-square
        unless the residuals were already divided by their true errors."""
        jtj = self.jac.T @ self.jac
        cov = np.linalg.pinv(jtj)
        if not absolute_sigma:
            dof = max(self.residual.size - self.x.size, 1)
            cov = cov * self.cost / dof
        return cov


def levenberg_marquardt(fun, jac, x0, max_iter: int = 200, xtol: float = 1e-8, lam: float = 1e-3):
    """Minimize ``|fun(x)|**2`` starting at ``x0``.

    ``jac(x)`` returns the ``(m, n)`` Jacobian of the residual vector. Stops
    when a step changes every parameter by less than ``xtol * (|x| + xtol)``.
    """
    x = np.array(x0, dtype=float)
    r = fun(x)
    cost = r @ r
    J = jac(x)
    for it in range(1, max_iter + 1):
        A = J.T @ J
        grad = J.T @ r
        diag = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                step = np.full_like(x, np.nan)
            x_new = x + step
            r_new = fun(x_new) if np.all(np.isfinite(x_new)) else None
            if r_new is not None and np.all(np.isfinite(r_new)) and r_new @ r_new <= cost:
                break
            lam *= 10.0
            if lam > 1e16:
                # no downhill step left: at a minimum to working precision
                return LeastSquaresResult(x, r, J, it, bool(np.linalg.norm(grad) < 1e-8 * (1 + cost)))
        small = np.all(np.abs(step) <= xtol * (np.abs(x) + xtol))
        x, r, cost = x_new, r_new, r_new @ r_new
        J = jac(x)
        lam = max(lam / 10.0, 1e-12)
        if small or cost == 0.0:
            return LeastSquaresResult(x, r, J, it, True)
    return LeastSquaresResult(x, r, J, max_iter, False)
