"""Independent first-order optimality check for solutions returned by :mod:`pdipm`.

Works only from the problem's own evaluation functions and the returned
primal/dual point; slack variables are ignored and bound distances are
recomputed from ``h(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["KktReport", "check_kkt"]


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    feasibility: float
    complementarity: float
    dual_sign: float

    def passed(self, tol: float = 1e-6) -> bool:
        return max(self.stationarity, self.feasibility, self.complementarity,
                   self.dual_sign) < tol


def check_kkt(problem, x, y, z, w) -> KktReport:
    """Residuals of the KKT conditions of ``min c(x)`` (``c = -f`` when maximizing).

    Sign convention: ``grad c - Jg' y - Jh' (z + w) = 0`` with ``z >= 0`` on
    lower bounds and ``w <= 0`` on upper bounds.
    """
    sign = -1.0 if getattr(problem, "maximize", False) else 1.0
    _, grad = problem.objective(x)
    g, Jg = problem.equalities(x)
    h, Jh = problem.inequalities(x)
    lo = np.asarray(problem.h_lower, float)
    hi = np.asarray(problem.h_upper, float)
    z = np.asarray(z, float)
    w = np.asarray(w, float)

    resid = sign * np.asarray(grad) - np.atleast_2d(Jg).T @ np.asarray(y) \
        - np.atleast_2d(Jh).T @ (z + w)
    stationarity = float(np.max(np.abs(resid), initial=0.0))

    viol = np.concatenate([np.abs(g), np.maximum(lo - h, 0), np.maximum(h - hi, 0)])
    feasibility = float(np.max(viol, initial=0.0))

    comp = np.concatenate([z * (h - lo), -w * (hi - h)])
    complementarity = float(np.max(np.abs(comp), initial=0.0))

    dual_sign = float(max(np.max(-z, initial=0.0), np.max(w, initial=0.0), 0.0))
    return KktReport(stationarity, feasibility, complementarity, dual_sign)
