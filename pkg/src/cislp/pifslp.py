"""Parallel inverse-free PJ-ADMM for power-minimization SLP.

Solves ``min ||x||^2  s.t.  A x >= b`` (inequality rows) and ``A x == b``
(equality rows) by splitting ``A x = b + c`` with a slack ``c`` confined to
``{c_j >= 0 on inequality rows, c_j = 0 on equality rows}``.  Each iteration
updates the slack by projection, every block of ``x`` from the same previous
iterate, and then the multiplier.  The proximal weight ``P_i = tau I - rho
A_i^T A_i`` cancels the coupling so no block needs a matrix inverse.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .ci_model import BlockPartition, CISystem, max_infeasibility, parse_partition, partition

log = logging.getLogger(__name__)

TAU_FACTOR = 0.8
DIVERGENCE_FACTOR = 1e8

# rho by (K, N_t) for the scenario list the algorithm was tuned on
_PSK_RHO = {(8, 8): 0.3, (12, 12): 0.4, (12, 16): 0.06, (24, 32): 0.03, (48, 64): 0.015}
_QAM_FULL_RHO = 0.8
# fully-loaded stopping rules: (delta_tol by K, max_iters)
_FULL_STOP = {
    ("PSK", "PM"): ({}, 1e-2, 100),
    ("PSK", "SB"): ({}, 1e-2, 100),
    ("QAM", "PM"): ({8: 1e-7, 12: 1e-6}, 1e-6, 4000),
    ("QAM", "SB"): ({8: 1e-4, 12: 1e-3}, 1e-3, 300),
}


class SolverDivergence(RuntimeError):
    def __init__(self, iteration: int, norm: float):
        super().__init__(f"PJ-ADMM diverged at iteration {iteration} (||x|| = {norm:.3g})")
        self.iteration = iteration
        self.norm = norm


@dataclass(frozen=True)
class PJADMMConfig:
    """Penalty ``rho``, damping ``beta`` and proximal weight.

    ``tau`` is absolute when given; otherwise ``tau_factor * rho * ||A||_2^2``
    is used per system.  ``fixed_iters`` runs exactly that many iterations;
    without it the loop stops once ``||x^t - x^{t-1}|| < delta_tol`` or at
    ``max_iters``.
    """

    rho: float
    beta: float = 1.0
    tau: Optional[float] = None
    tau_factor: float = TAU_FACTOR
    partition: str = "1"
    max_iters: int = 1000
    delta_tol: float = 1e-6
    fixed_iters: Optional[int] = None
    tuned: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.tau_factor < 0:
            raise ValueError("tau_factor must be nonnegative")

    def tau_for(self, system: CISystem) -> float:
        if self.tau is not None:
            return self.tau
        return self.tau_factor * self.rho * system.spectral_norm_sq


def default_config(K: int, Nt: int, modulation: str = "QPSK", mode: str = "PM") -> PJADMMConfig:
    """Scenario-matched parameters.

    Recognized sizes use the tuned ``rho``; others fall back to
    ``0.06 * 192 / (K * N_t)`` and are flagged ``tuned=False``.
    Under-loaded systems run a fixed 40 (PSK) or 150 (QAM) iterations;
    fully-loaded ones stop on the iteration decrease.
    """
    family = "QAM" if modulation.upper().endswith("QAM") else "PSK"
    mode = mode.upper()
    tuned = (K, Nt) in _PSK_RHO
    rho = _PSK_RHO.get((K, Nt), 0.06 * 12 * 16 / (K * Nt))
    if family == "QAM" and K == Nt and (K, Nt) in _PSK_RHO:
        rho = _QAM_FULL_RHO
    if K < Nt:
        return PJADMMConfig(rho=rho, fixed_iters=40 if family == "PSK" else 150,
                            max_iters=40 if family == "PSK" else 150, tuned=tuned)
    by_k, fallback, t_max = _FULL_STOP[(family, mode)]
    return PJADMMConfig(rho=rho, delta_tol=by_k.get(K, fallback), max_iters=t_max,
                        tuned=tuned and (family == "PSK" or K in by_k))


@dataclass
class SolverState:
    x: np.ndarray
    c: np.ndarray
    lam: np.ndarray
    iter: int = 0
    delta: float = math.inf

    @classmethod
    def zeros(cls, system: CISystem) -> SolverState:
        m, n = system.A.shape
        return cls(np.zeros(n), np.zeros(m), np.zeros(m))


@dataclass(frozen=True)
class SolverReport:
    converged: bool
    iters: int
    final_delta: float
    objective: float
    max_infeasibility: float
    flop_estimate: int
    flops_per_iter: int
    trace: list = field(default_factory=list, repr=False)


class FlopCounter:
    """Tallies floating-point operations of the iteration kernels."""

    def __init__(self):
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


def update_c(Ax: np.ndarray, system: CISystem, lam: np.ndarray, rho: float,
             flops: FlopCounter | None = None) -> np.ndarray:
    """Project ``A x - b - lam/rho`` onto the slack set."""
    v = Ax - system.b - lam / rho
    if flops is not None:
        flops.add(4 * v.size)
    return np.where(system.eq_mask, 0.0, np.maximum(v, 0.0))


def update_c_psk(Ax: np.ndarray, system: CISystem, lam: np.ndarray, rho: float) -> np.ndarray:
    """All-inequality slack update; matches :func:`update_c` when no row is an equality."""
    return np.maximum(Ax - system.b - lam / rho, 0.0)


def shared_residual(Ax, system: CISystem, c, lam, rho, flops: FlopCounter | None = None) -> np.ndarray:
    """``-A x + b + c + lam/rho``, computed once per iteration and read by every block."""
    if flops is not None:
        flops.add(4 * Ax.size)
    return -Ax + system.b + c + lam / rho


def update_x_blocks(x: np.ndarray, residual: np.ndarray, blocks: BlockPartition, A_views: list,
                    rho: float, tau: float, executor: ThreadPoolExecutor | None = None,
                    flops: FlopCounter | None = None) -> np.ndarray:
    """Inverse-free Jacobian block update.

    Every block reads the same ``x`` and ``residual`` and writes a disjoint
    slice of the output, so execution order does not affect the result.
    """
    out = np.empty_like(x)
    denom = 2.0 + tau

    def one(i: int) -> None:
        idx = blocks.blocks[i]
        out[idx] = (tau * x[idx] + rho * (A_views[i].T @ residual)) / denom

    if executor is None:
        for i in range(blocks.N):
            one(i)
    else:
        list(executor.map(one, range(blocks.N)))
    if flops is not None:
        m = residual.size
        # per block: A_i^T r (2m-1 per column + ...) folded as (2m+1) * n_i, plus scale/add
        flops.add(sum((2 * m + 1) * len(b) + 3 * len(b) for b in blocks.blocks))
    return out


def update_x_explicit(x: np.ndarray, system: CISystem, blocks: BlockPartition, c: np.ndarray,
                      lam: np.ndarray, rho: float, tau: float) -> np.ndarray:
    """Reference block update with the proximal matrix written out and inverted.

    Solves ``(2I + rho A_i^T A_i + P_i) x_i = P_i x_i^t + rho A_i^T(-sum_{j != i}
    A_j x_j^t + b + c + lam/rho)`` with ``P_i = tau I - rho A_i^T A_i``.  Used to
    check :func:`update_x_blocks`; not meant for production runs.
    """
    A = system.A
    out = np.empty_like(x)
    Ax = A @ x
    for idx in blocks.blocks:
        Ai = A[:, idx]
        n = len(idx)
        P = tau * np.eye(n) - rho * Ai.T @ Ai
        others = Ax - Ai @ x[idx]
        rhs = P @ x[idx] + rho * Ai.T @ (-others + system.b + c + lam / rho)
        out[idx] = np.linalg.solve(2 * np.eye(n) + rho * Ai.T @ Ai + P, rhs)
    return out


def update_x_special(x: np.ndarray, system: CISystem, blocks: BlockPartition, c: np.ndarray,
                     lam: np.ndarray, rho: float, tau: float) -> np.ndarray:
    """Scalar or antenna-pair closed forms with a diagonal denominator.

    Scalar blocks use ``p_i = tau - rho a_i^T a_i``.  Antenna-pair blocks use
    a diagonal ``P_i`` and divide elementwise, which is exact when
    ``A_i^T A_i`` is a multiple of the identity (PSK with M = 4); otherwise
    the 2x2 system is solved.
    """
    A = system.A
    out = np.empty_like(x)
    Ax = A @ x
    for idx in blocks.blocks:
        Ai = A[:, idx]
        gram = Ai.T @ Ai
        if len(idx) == 1:
            p = tau - rho * gram[0, 0]
            others = Ax - Ai[:, 0] * x[idx[0]]
            num = p * x[idx[0]] + rho * Ai[:, 0] @ (-others + system.b + c + lam / rho)
            out[idx[0]] = num / (2 + rho * gram[0, 0] + p)
        elif len(idx) == 2:
            P = np.diag(tau - rho * np.diag(gram))
            others = Ax - Ai @ x[idx]
            num = P @ x[idx] + rho * Ai.T @ (-others + system.b + c + lam / rho)
            lhs = 2 * np.eye(2) + rho * gram + P
            if abs(gram[0, 1]) <= 1e-12 * (1 + abs(gram[0, 0])):
                out[idx] = num / np.diag(lhs)
            else:
                # columns not orthogonal (e.g. QAM edge points): no diagonal shortcut
                out[idx] = np.linalg.solve(lhs, num)
        else:
            raise ValueError("closed forms cover blocks of width 1 or 2 only")
    return out


def update_lambda(lam: np.ndarray, Ax: np.ndarray, system: CISystem, c: np.ndarray,
                  rho: float, beta: float, flops: FlopCounter | None = None) -> np.ndarray:
    """Damped multiplier ascent; no sign projection is applied."""
    if flops is not None:
        flops.add(5 * lam.size)
    return lam + beta * rho * (-Ax + system.b + c)


def kkt_residual(system: CISystem, x, c, lam) -> float:
    stat = np.max(np.abs(2 * x - system.A.T @ lam)) if x.size else 0.0
    prim = np.max(np.abs(system.A @ x - system.b - c)) if c.size else 0.0
    return float(max(stat, prim))


def solve_pm(system: CISystem, config: PJADMMConfig, blocks: BlockPartition | None = None,
             workers: int = 1, trace: bool = False,
             callback: Callable[[SolverState], None] | None = None,
             psk_path: bool = False) -> tuple[np.ndarray, SolverReport]:
    """Run PJ-ADMM from ``x = c = lam = 0``.

    Parameters
    ----------
    system : CISystem
    config : PJADMMConfig
    blocks : BlockPartition, optional
        Defaults to the partition named in ``config``.
    workers : int
        Threads used for the block phase; ``1`` runs blocks inline.
    trace : bool
        Record ``(iter, objective, delta, max_infeas, kkt_residual)`` rows.
    callback : callable, optional
        Called with the state after every iteration.
    psk_path : bool
        Use the all-inequality slack update.  Only valid for systems without
        equality rows.

    Raises
    ------
    SolverDivergence
        If an iterate is non-finite or its norm exceeds ``1e8 (1 + ||b||)``.
    """
    if psk_path and system.eq_mask.any():
        raise ValueError("PSK path requires a system without equality rows")
    if blocks is None:
        blocks = parse_partition(config.partition, system.Nt)
    rho, beta = config.rho, config.beta
    tau = config.tau_for(system)
    A = system.A
    A_views = blocks.views(A)
    n_iter = config.fixed_iters if config.fixed_iters is not None else config.max_iters
    limit = DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(system.b)))

    state = SolverState.zeros(system)
    Ax = np.zeros_like(state.c)
    flops = FlopCounter()
    rows: list = []
    converged = False
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(1, n_iter + 1):
            if psk_path:
                c = update_c_psk(Ax, system, state.lam, rho)
                flops.add(4 * c.size)
            else:
                c = update_c(Ax, system, state.lam, rho, flops)
            r = shared_residual(Ax, system, c, state.lam, rho, flops)
            x = update_x_blocks(state.x, r, blocks, A_views, rho, tau, executor, flops)
            Ax = A @ x
            flops.add(2 * A.size)
            lam = update_lambda(state.lam, Ax, system, c, rho, beta, flops)
            delta = float(np.linalg.norm(x - state.x))
            state = SolverState(x, c, lam, t, delta)
            nrm = float(np.linalg.norm(x))
            if not np.isfinite(nrm) or not np.all(np.isfinite(lam)) or nrm > limit:
                raise SolverDivergence(t, nrm)
            if trace:
                rows.append((t, float(x @ x), delta, max_infeasibility(system, x),
                             kkt_residual(system, x, c, lam)))
            if callback is not None:
                callback(state)
            if config.fixed_iters is None and delta < config.delta_tol:
                converged = True
                break
    finally:
        if executor is not None:
            executor.shutdown()
    if config.fixed_iters is not None:
        converged = True
    x = state.x
    per_iter = flops.total // max(state.iter, 1)
    report = SolverReport(converged, state.iter, state.delta, float(x @ x),
                          max_infeasibility(system, x), flops.total, per_iter, rows)
    return x, report


def predicted_flops_per_iter(K: int, Nt: int, n_blocks: int = 1, rows_per_user: int = 2) -> int:
    """``O(2K) + N * O((2K + 1) 2N_t / N) + O(2K)`` with unit constants."""
    m = rows_per_user * K
    return m + n_blocks * ((m + 1) * (2 * Nt // n_blocks)) + m


def with_overrides(config: PJADMMConfig, **kw) -> PJADMMConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(config, **kw) if kw else config
