"""Reference solver for the power-minimization QP through its dual.

For ``min ||x||^2`` subject to ``A x >= b`` (inequality rows) and ``A x == b``
(equality rows) the dual is

    max_lam  b^T lam - lam^T A A^T lam / 4,   lam_i >= 0 on inequality rows,

with ``x = A^T lam / 2``.  The dual is solved by projected gradient ascent
(step ``1/L``, ``L = ||A||^2 / 2``).  Every ``polish_every`` iterations the
current support of ``lam`` is taken as the active set and the reduced KKT
system is solved exactly; the polished point is accepted only if it passes
the certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ci_model import CISystem


class NotCertified(RuntimeError):
    """Raised when the iteration budget ends before the KKT certificate holds."""

    def __init__(self, message: str, x: np.ndarray, lam: np.ndarray, report: KKTReport):
        super().__init__(message)
        self.x = x
        self.lam = lam
        self.report = report


@dataclass(frozen=True)
class KKTReport:
    stationarity: float
    primal_infeas: float
    dual_infeas: float
    complementarity: float

    @property
    def residual(self) -> float:
        return max(self.stationarity, self.primal_infeas, -self.dual_infeas, self.complementarity)

    def ok(self, tol: float) -> bool:
        return self.residual < tol


def kkt_check(system: CISystem, x, lam) -> KKTReport:
    """Optimality residuals of a primal/dual pair.

    ``dual_infeas`` is the most negative inequality-row multiplier (0 when
    none is negative); complementarity is ``max |lam_i (A x - b)_i|``.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    A, b, eq = system.A, system.b, system.eq_mask
    r = A @ x - b
    stat = float(np.max(np.abs(2 * x - A.T @ lam))) if x.size else 0.0
    viol = np.where(eq, np.abs(r), np.maximum(-r, 0.0))
    prim = float(np.max(viol)) if viol.size else 0.0
    ineq = lam[~eq]
    dual = float(min(np.min(ineq), 0.0)) if ineq.size else 0.0
    comp = float(np.max(np.abs(lam * r))) if r.size else 0.0
    return KKTReport(stat, prim, dual, comp)


def dual_objective(system: CISystem, lam) -> float:
    AtL = system.A.T @ lam
    return float(system.b @ lam - 0.25 * AtL @ AtL)


def _project(lam: np.ndarray, eq: np.ndarray) -> np.ndarray:
    return np.where(eq, lam, np.maximum(lam, 0.0))


def _polish(system: CISystem, lam: np.ndarray, max_swaps: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Exact solve on a guessed active set, refined by primal-dual swaps.

    Starting from the support of ``lam``, rows with a negative multiplier
    leave the set and violated rows join it until the set is stable.
    """
    A, b, eq = system.A, system.b, system.eq_mask
    active = eq | (lam > 0)
    for _ in range(max_swaps):
        full = np.zeros_like(lam)
        if active.any():
            # min-norm solution of A_S x = b_S, then multipliers from 2x = A_S^T lam_S;
            # working on A_S directly avoids squaring its condition number
            As = A[active]
            x = np.linalg.lstsq(As, b[active], rcond=None)[0]
            full[active] = np.linalg.lstsq(As.T, 2 * x, rcond=None)[0]
        else:
            x = np.zeros(A.shape[1])
        r = A @ x - b
        nxt = eq | (active & (full > 0)) | (~active & (r < 0))
        if np.array_equal(nxt, active):
            break
        active = nxt
    return x, full


def solve_pm_dual(system: CISystem, tol: float = 1e-8, max_iters: int = 200000,
                  accelerated: bool = False, polish_every: int = 25) -> tuple[np.ndarray, np.ndarray, KKTReport]:
    """Certified optimum of the PM problem.

    Returns ``(x, lam, report)`` with ``report.residual < tol``.

    Raises
    ------
    NotCertified
        When ``max_iters`` pass without a certificate; carries the last iterate.
    ValueError
        For rank-deficient equality-only systems or ``tol < 1e-12``.
    """
    if tol < 1e-12:
        raise ValueError("tol below 1e-12 is not attainable in double precision")
    A, b, eq = system.A, system.b, system.eq_mask
    m = A.shape[0]
    if eq.all() and np.linalg.matrix_rank(A) < m:
        raise ValueError("equality-only system with rank-deficient A")
    if not np.any(b):
        x = np.zeros(A.shape[1])
        lam = np.zeros(m)
        return x, lam, kkt_check(system, x, lam)

    L = 0.5 * system.spectral_norm_sq
    step = 1.0 / L
    lam = np.zeros(m)
    y = lam.copy()
    theta = 1.0
    for it in range(1, max_iters + 1):
        grad = b - 0.5 * A @ (A.T @ y)
        new = _project(y + step * grad, eq)
        if not accelerated:
            y = lam = new
        elif dual_objective(system, new) < dual_objective(system, lam):
            # momentum overshot: drop it and restart from the last accepted point
            theta = 1.0
            y = lam
        else:
            theta_next = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
            y = new + ((theta - 1) / theta_next) * (new - lam)
            theta = theta_next
            lam = new
        if it % polish_every == 0:
            cand = _polish(system, lam)
            rep = kkt_check(system, *cand)
            if rep.ok(tol):
                return cand[0], cand[1], rep
            x = 0.5 * A.T @ lam
            rep = kkt_check(system, x, lam)
            if rep.ok(tol):
                return x, lam, rep
    x = 0.5 * A.T @ lam
    rep = kkt_check(system, x, lam)
    if rep.ok(tol):
        return x, lam, rep
    raise NotCertified(f"no certificate after {max_iters} iterations (residual {rep.residual:.3g})",
                       x, lam, rep)


def solve_pm(system: CISystem, tol: float = 1e-8, **kw) -> tuple[np.ndarray, float]:
    """``(x*, ||x*||^2)``; convenience wrapper for callers needing only the primal."""
    x, _, _ = solve_pm_dual(system, tol=tol, **kw)
    return x, float(x @ x)
