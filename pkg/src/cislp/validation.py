"""Quick invariant suite behind ``cislp validate``.

Each check is small enough to finish in a second or two; the exhaustive
versions live in the test suite.
"""

from __future__ import annotations

import io
import math
from typing import Callable

import numpy as np

from . import duality, oracle, pifslp
from .ci_model import build_ci_system, partition
from .constellation import ci_dof, detect, make_constellation, parse_modulation
from .simharness import Mode, Scenario, SolverKind, gen_channel, realization_rng, run_pm_sweep, run_sb_sweep

CHECKS: list[tuple[str, Callable[[], bool]]] = []


def check(fn: Callable[[], bool]) -> Callable[[], bool]:
    CHECKS.append((fn.__name__, fn))
    return fn


def _instance(seed: int, K: int, Nt: int, mod: str, gamma: float = 10.0):
    rng = np.random.default_rng(seed)
    spec = parse_modulation(mod)
    H = gen_channel(K, Nt, rng)
    s = spec.points[rng.integers(0, spec.order, K)]
    return build_ci_system(H, s, spec, gamma, 1.0), H, s


@check
def constellation_unit_energy() -> bool:
    specs = [make_constellation("PSK", m) for m in (2, 4, 8, 16)]
    specs += [make_constellation("QAM", m) for m in (4, 16, 64)]
    return all(abs(np.mean(np.abs(c.points) ** 2) - 1) < 1e-12 for c in specs)


@check
def detection_round_trip() -> bool:
    for name in ("QPSK", "8PSK", "16QAM", "64QAM"):
        c = parse_modulation(name)
        if not np.array_equal(detect(c, c.points), np.arange(c.order)):
            return False
    return True


@check
def qam16_dof_counts() -> bool:
    c = parse_modulation("16QAM")
    kinds = [tuple(d.value for d in ci_dof(c, p)) for p in c.points]
    both = kinds.count(("inequality", "inequality"))
    none = kinds.count(("equality", "equality"))
    return both == 4 and none == 4


@check
def psk_rows_match_complex_form() -> bool:
    for mod in ("QPSK", "8PSK"):
        system, H, s = _instance(1, 3, 4, mod)
        M = parse_modulation(mod).order
        x = np.random.default_rng(2).standard_normal(8)
        xc = x[:4] + 1j * x[4:]
        z = (H @ xc) / s
        ref = np.column_stack([z.real - z.imag / math.tan(math.pi / M),
                               z.real + z.imag / math.tan(math.pi / M)]).ravel()
        if np.max(np.abs(system.A @ x - ref)) > 1e-10:
            return False
    return True


@check
def qpsk_antenna_gram_is_scaled_identity() -> bool:
    system, _, _ = _instance(3, 4, 8, "QPSK")
    for Ai in partition(8, "antenna").views(system.A):
        g = Ai.T @ Ai
        if abs(g[0, 1]) > 1e-10 or abs(g[0, 0] - g[1, 1]) > 1e-10:
            return False
    return True


@check
def inverse_free_update_matches_explicit() -> bool:
    system, _, _ = _instance(4, 4, 8, "16QAM")
    rng = np.random.default_rng(5)
    x = rng.standard_normal(16)
    c = np.where(system.eq_mask, 0, np.abs(rng.standard_normal(8)))
    lam = rng.standard_normal(8)
    rho = 0.3
    tau = 0.8 * rho * system.spectral_norm_sq
    r = pifslp.shared_residual(system.A @ x, system, c, lam, rho)
    for bp in (partition(8, "scalar"), partition(8, "antenna"), partition(8, "contiguous", 4)):
        fast = pifslp.update_x_blocks(x, r, bp, bp.views(system.A), rho, tau)
        slow = pifslp.update_x_explicit(x, system, bp, c, lam, rho, tau)
        if np.max(np.abs(fast - slow)) > 1e-10:
            return False
    return True


@check
def psk_path_bit_identical() -> bool:
    system, _, _ = _instance(6, 4, 8, "QPSK")
    cfg = pifslp.PJADMMConfig(rho=0.36, fixed_iters=40)
    a, _ = pifslp.solve_pm(system, cfg)
    b, _ = pifslp.solve_pm(system, cfg, psk_path=True)
    return np.array_equal(a, b)


@check
def pif_reaches_oracle() -> bool:
    system, _, _ = _instance(7, 4, 8, "QPSK")
    _, p_star = oracle.solve_pm(system)
    cfg = pifslp.PJADMMConfig(rho=0.36, fixed_iters=None, max_iters=5000, delta_tol=1e-10)
    _, rep = pifslp.solve_pm(system, cfg)
    return abs(rep.objective - p_star) <= 1e-6 * p_star


@check
def duality_matches_bisection() -> bool:
    system, _, _ = _instance(8, 4, 8, "16QAM")
    _, p_pm = oracle.solve_pm(system)
    sb = duality.bisection_sb(system, 1.0, tol_mu=1e-5)
    return abs(sb.mu - math.sqrt(1.0 / p_pm)) <= 1e-3


@check
def threshold_scaling_law() -> bool:
    system, _, _ = _instance(9, 4, 8, "QPSK")
    x1, p1 = oracle.solve_pm(system)
    x2, p2 = oracle.solve_pm(system.with_thresholds(2.0))
    return np.linalg.norm(x2 - 2 * x1) <= 1e-6 * (1 + np.linalg.norm(x1)) and abs(p2 - 4 * p1) <= 1e-6 * (1 + p1)


@check
def realization_streams_are_reproducible() -> bool:
    a = gen_channel(4, 8, realization_rng(11, 3))
    b = gen_channel(4, 8, realization_rng(11, 3))
    c = gen_channel(4, 8, realization_rng(11, 4))
    return np.array_equal(a, b) and not np.array_equal(a, c)


@check
def sweeps_are_deterministic() -> bool:
    outs = []
    for _ in range(2):
        for sc in (Scenario(K=2, Nt=4, mode=Mode.PM, sweep=(5.0,), Nc=2, Ns=3, seed=5),
                   Scenario(K=2, Nt=4, mode=Mode.SB, sweep=(10.0,), Nc=2, Ns=3, seed=5,
                            solver=SolverKind.ORACLE)):
            buf = io.StringIO()
            (run_pm_sweep if sc.mode is Mode.PM else run_sb_sweep)(sc).to_csv(buf)
            outs.append(buf.getvalue())
    return outs[:2] == outs[2:]


def run_all(out=None) -> bool:
    """Run every check, print one line each, return overall success."""
    ok_all = True
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
        except Exception as exc:  # report, keep going
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok_all &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=out)
    return ok_all
