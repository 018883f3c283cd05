"""Power scaling between power minimization (PM) and SINR balancing (SB).

If ``x_pm`` minimizes ``||x||^2`` subject to the CI constraints with
thresholds ``b``, then ``sqrt(p / p_pm) * x_pm`` maximizes the common
threshold scaling ``mu`` under the budget ``||x||^2 <= p``, with
``mu = sqrt(p / p_pm)``.  The converse map divides by ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracle
from .ci_model import CISystem

BALANCE_TOL = 1e-6


@dataclass(frozen=True)
class SBResult:
    x: np.ndarray
    mu: float
    power_used: float
    budget: float


def evaluate_balance(system: CISystem, x) -> float:
    """Balance level ``min_i (a_i^T x) / b_i`` over inequality rows.

    Equality rows are left out of the minimum; use
    :func:`equality_consistency` to check them.  A system without inequality
    rows falls back to the minimum over all rows.
    """
    if np.any(system.b == 0):
        raise ValueError("balance level is undefined for a zero threshold row")
    ratios = (system.A @ np.asarray(x, dtype=float)) / system.b
    rows = ratios[system.ineq_mask] if system.ineq_mask.any() else ratios
    return float(np.min(rows))


def equality_consistency(system: CISystem, x, mu: float) -> float:
    """``max |a_i^T x - mu b_i| / (1 + |mu|)`` over equality rows (0 if none)."""
    eq = system.eq_mask
    if not eq.any():
        return 0.0
    dev = np.abs(system.A[eq] @ np.asarray(x, dtype=float) - mu * system.b[eq])
    return float(np.max(dev) / (1.0 + abs(mu)))


def pm_to_sb(x_pm, p_pm: float, budget: float) -> SBResult:
    """Scale a PM solution to spend exactly ``budget``.

    ``x_pm`` is assumed optimal for the thresholds it was solved with; the
    returned ``mu`` is the balance level that optimality implies.
    """
    if budget <= 0:
        raise ValueError("power budget must be positive")
    if p_pm <= 0:
        raise ValueError("PM power must be positive to scale to a positive budget")
    scale = math.sqrt(budget / p_pm)
    x = scale * np.asarray(x_pm, dtype=float)
    return SBResult(x, scale, float(x @ x), budget)


def sb_to_pm(x_sb, mu: float, budget: float) -> tuple[np.ndarray, float]:
    if mu <= 0:
        raise ValueError("balance level must be positive to recover a PM solution")
    return np.asarray(x_sb, dtype=float) / mu, budget / mu**2


PMSolver = Callable[[CISystem], tuple[np.ndarray, float]]


def bisection_sb(system: CISystem, budget: float, pm_solver: PMSolver = oracle.solve_pm,
                 tol_mu: float = 1e-4, max_doublings: int = 60) -> SBResult:
    """Solve SB by bisecting on the threshold scale ``alpha``.

    Each probe solves PM with thresholds ``alpha * b`` and compares its power
    against ``budget``.  The initial upper end is twice the closed-form
    prediction; the search only trusts the power comparison, and expands the
    bracket if the hint is too small.
    """
    if budget <= 0:
        raise ValueError("power budget must be positive")
    if not np.any(system.b):
        raise ValueError("zero thresholds: balance level is unbounded")

    def power(alpha: float) -> tuple[np.ndarray, float]:
        return pm_solver(system.with_thresholds(alpha))

    _, p_unit = power(1.0)
    lo, hi = 0.0, 2.0 * math.sqrt(budget / p_unit)
    x_hi, p_hi = power(hi)
    doublings = 0
    while p_hi < budget:
        if doublings == max_doublings:
            raise RuntimeError("could not bracket the budget")
        lo, hi = hi, 2 * hi
        x_hi, p_hi = power(hi)
        doublings += 1
    x_lo, p_lo = (np.zeros_like(x_hi), 0.0) if lo == 0 else power(lo)
    while hi - lo >= tol_mu:
        mid = 0.5 * (lo + hi)
        x_mid, p_mid = power(mid)
        if p_mid < budget:
            lo, x_lo, p_lo = mid, x_mid, p_mid
        else:
            hi, x_hi, p_hi = mid, x_mid, p_mid
    x = x_hi * math.sqrt(budget / p_hi)
    return SBResult(x, evaluate_balance(system, x), float(x @ x), budget)
