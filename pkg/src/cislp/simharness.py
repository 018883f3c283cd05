"""Monte-Carlo PM power sweeps and SB BER sweeps.

Randomness comes from one Philox (counter-based) stream per channel
realization, keyed by ``(seed, realization index)`` through
:class:`numpy.random.SeedSequence`.  Realizations are independent, so they can
run in any order or process; aggregation always walks them by index, which
keeps results bit-identical for any number of workers.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Optional, TextIO

import numpy as np

from . import duality, oracle, pifslp
from .ci_model import CISystem, build_ci_system, max_infeasibility
from .constellation import Constellation, bit_errors, detect, parse_modulation

log = logging.getLogger(__name__)

CSV_COLUMNS = ("scenarioId", "sweepValue", "avgPower", "BER", "avgMu", "avgIters", "maxInfeas", "wallMillis")


class Mode(str, enum.Enum):
    PM = "PM"
    SB = "SB"


class SolverKind(str, enum.Enum):
    PIF = "PIF"
    ORACLE = "Oracle"
    ZF = "ZF"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    """One experiment.

    ``sweep`` holds SINR thresholds in dB for PM and SNR values in dB for SB.
    The solver overrides (``rho`` ... ``max_iters``) replace the matching
    fields of :func:`pifslp.default_config`.
    """

    K: int
    Nt: int
    modulation: str = "QPSK"
    mode: Mode = Mode.PM
    sweep: tuple[float, ...] = (10.0,)
    budget: float = 1.0
    Nc: int = 10
    Ns: int = 20
    seed: int = 0
    solver: SolverKind = SolverKind.PIF
    name: str = "scenario"
    rho: Optional[float] = None
    beta: Optional[float] = None
    tau: Optional[float] = None
    tau_factor: Optional[float] = None
    partition: Optional[str] = None
    iters: Optional[int] = None
    delta_tol: Optional[float] = None
    max_iters: Optional[int] = None
    oracle_tol: float = 1e-8

    def __post_init__(self):
        if self.K < 1 or self.Nt < 1:
            raise ScenarioError("K and Nt must be positive")
        if self.Nc < 1 or self.Ns < 1:
            raise ScenarioError("Nc and Ns must be at least 1")
        if not self.sweep:
            raise ScenarioError("sweep must not be empty")
        if self.budget <= 0:
            raise ScenarioError("budget must be positive")
        if self.mode is Mode.PM and self.solver is SolverKind.ZF:
            raise ScenarioError("the ZF baseline only runs in SB mode")
        parse_modulation(self.modulation)

    @property
    def constellation(self) -> Constellation:
        return parse_modulation(self.modulation)

    def solver_config(self) -> pifslp.PJADMMConfig:
        cfg = pifslp.default_config(self.K, self.Nt, self.modulation, self.mode.value)
        cfg = pifslp.with_overrides(cfg, rho=self.rho, beta=self.beta, tau=self.tau,
                                    tau_factor=self.tau_factor, partition=self.partition,
                                    delta_tol=self.delta_tol, max_iters=self.max_iters)
        if self.iters is not None:
            cfg = replace(cfg, fixed_iters=self.iters if self.iters > 0 else None)
        return cfg


_INT_KEYS = {"K", "Nt", "Nc", "Ns", "seed", "iters", "max_iters"}
_FLOAT_KEYS = {"budget", "rho", "beta", "tau", "tau_factor", "delta_tol", "oracle_tol"}


def _coerce(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value, 0)
        if key in _FLOAT_KEYS:
            return float(value)
        if key == "sweep":
            return tuple(float(v) for v in value.replace(",", " ").split())
        if key == "mode":
            return Mode(value.upper())
        if key == "solver":
            return {s.value.lower(): s for s in SolverKind}[value.lower()]
    except (ValueError, KeyError):
        raise ScenarioError(f"bad value for {key}: {value!r}") from None
    return value


def scenario_from_pairs(pairs: Iterable[tuple[str, str]], base: Scenario | None = None) -> Scenario:
    """Build a scenario from ``(key, value)`` strings; unknown keys are errors."""
    known = {f.name for f in fields(Scenario)}
    values = {} if base is None else {f.name: getattr(base, f.name) for f in fields(Scenario)}
    for key, value in pairs:
        if key not in known:
            raise ScenarioError(f"unknown scenario key {key!r}")
        values[key] = _coerce(key, value)
    if "K" not in values or "Nt" not in values:
        raise ScenarioError("scenario needs K and Nt")
    try:
        return Scenario(**values)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def parse_scenario_text(text: str) -> list[tuple[str, str]]:
    """``key = value`` lines; ``#`` starts a comment."""
    pairs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ScenarioError(f"line {n}: expected 'key = value'")
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_scenario(path: str, overrides: Iterable[tuple[str, str]] = ()) -> Scenario:
    with open(path) as fh:
        pairs = parse_scenario_text(fh.read())
    return scenario_from_pairs(list(pairs) + list(overrides))


def realization_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def gen_channel(K: int, Nt: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) entries; row ``k`` is user ``k``'s channel."""
    if K < 1 or Nt < 1:
        raise ValueError("dimensions must be positive")
    return (rng.standard_normal((K, Nt)) + 1j * rng.standard_normal((K, Nt))) / math.sqrt(2)


def gen_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def zf_precoder(channel, symbols) -> np.ndarray:
    """Unscaled zero-forcing vector ``H^H (H H^H)^{-1} s``."""
    H = np.atleast_2d(np.asarray(channel, dtype=complex))
    K, Nt = H.shape
    if K > Nt or np.linalg.matrix_rank(H) < K:
        raise ValueError("zero forcing needs a full-row-rank channel")
    return H.conj().T @ np.linalg.solve(H @ H.conj().T, np.asarray(symbols, dtype=complex))


def zf_baseline(channel, symbols, power_budget: float) -> np.ndarray:
    """Zero-forcing transmit vector scaled to spend exactly ``power_budget``."""
    x = zf_precoder(channel, symbols)
    return x * math.sqrt(power_budget / np.real(np.vdot(x, x)))


def real_to_complex(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    return x[:n] + 1j * x[n:]


@dataclass(frozen=True)
class SweepPoint:
    sweep_value: float
    avg_power: float
    ber: float
    avg_mu: float
    avg_iters: float
    max_infeas: float
    feasible_rate: float
    wall_millis: float = 0.0


@dataclass(frozen=True)
class RunResult:
    scenario: Scenario
    points: tuple[SweepPoint, ...]
    records: Optional[list] = field(default=None, repr=False)

    def to_csv(self, fh: TextIO, timing: bool = False) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in self.points:
            w.writerow([self.scenario.name, repr(p.sweep_value), repr(p.avg_power), repr(p.ber),
                        repr(p.avg_mu), repr(p.avg_iters), repr(p.max_infeas),
                        f"{p.wall_millis:.3f}" if timing else "0"])


def _solve(system: CISystem, sc: Scenario, cfg: pifslp.PJADMMConfig) -> tuple[np.ndarray, int]:
    if sc.solver is SolverKind.ORACLE:
        tol = sc.oracle_tol * (1.0 + float(np.max(system.b)))
        x, _, _ = oracle.solve_pm_dual(system, tol=tol)
        return x, 0
    x, rep = pifslp.solve_pm(system, cfg)
    return x, rep.iters


def _realization(args: tuple[Scenario, int]) -> dict:
    """All sweep points of one channel realization, as per-point sums."""
    sc, index = args
    spec = sc.constellation
    rng = realization_rng(sc.seed, index)
    H = gen_channel(sc.K, sc.Nt, rng)
    sym_idx = rng.integers(0, spec.order, size=(sc.Ns, sc.K))
    noise = gen_noise((len(sc.sweep), sc.Ns, sc.K), rng)
    cfg = sc.solver_config()
    n_pts = len(sc.sweep)
    out = {k: np.zeros(n_pts) for k in ("power", "errors", "mu", "iters", "feasible")}
    out["max_infeas"] = np.zeros(n_pts)
    out["millis"] = np.zeros(n_pts)
    for j, value in enumerate(sc.sweep):
        t0 = time.perf_counter()
        if sc.mode is Mode.PM:
            gamma, sigma = 10 ** (value / 10), 1.0
        else:
            gamma, sigma = 1.0, math.sqrt(sc.budget / 10 ** (value / 10))
        for t in range(sc.Ns):
            s = spec.points[sym_idx[t]]
            if gamma == 0.0:
                # zero thresholds: x = 0 is optimal, nothing to solve
                x, iters, mu, infeas, nominal = np.zeros(2 * sc.Nt), 0, 0.0, 0.0, 1.0
                system = None
            else:
                system = build_ci_system(H, s, spec, gamma, sigma)
            if system is None:
                pass
            elif sc.solver is SolverKind.ZF:
                x0 = zf_precoder(H, s)
                gain = math.sqrt(sc.budget / np.real(np.vdot(x0, x0)))
                x = np.concatenate([x0.real, x0.imag]) * gain
                iters = 0
                # receivers rescale by the common ZF gain
                nominal = gain
                mu = duality.evaluate_balance(system, x)
                infeas = 0.0
            else:
                x, iters = _solve(system, sc, cfg)
                infeas = max_infeasibility(system, x)
                power = float(x @ x)
                if sc.mode is Mode.PM:
                    mu = duality.evaluate_balance(system, x)
                    nominal = math.sqrt(gamma) * sigma
                else:
                    sb = duality.pm_to_sb(x, power, sc.budget)
                    x, mu = sb.x, sb.mu
                    nominal = mu * sigma
            y = H @ real_to_complex(x) + sigma * noise[j, t]
            detected = detect(spec, y / nominal)
            out["power"][j] += float(x @ x)
            out["errors"][j] += bit_errors(spec, sym_idx[t], detected)
            out["mu"][j] += mu
            out["iters"][j] += iters
            out["feasible"][j] += infeas <= 1e-6 * (1 + (0.0 if system is None else float(np.max(system.b))))
            out["max_infeas"][j] = max(out["max_infeas"][j], infeas)
        out["millis"][j] = 1e3 * (time.perf_counter() - t0)
    return out


def _run(sc: Scenario, jobs: int = 1, keep_records: bool = False) -> RunResult:
    tasks = [(sc, i) for i in range(sc.Nc)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_realization, tasks, chunksize=max(1, sc.Nc // (4 * jobs))))
    else:
        records = [_realization(t) for t in tasks]
    slots = sc.Nc * sc.Ns
    bits = slots * sc.K * sc.constellation.bits_per_symbol
    points = []
    for j, value in enumerate(sc.sweep):
        tot = {k: 0.0 for k in ("power", "errors", "mu", "iters", "feasible", "millis")}
        worst = 0.0
        for rec in records:  # index order keeps the float sums reproducible
            for k in tot:
                tot[k] += rec[k][j]
            worst = max(worst, rec["max_infeas"][j])
        points.append(SweepPoint(float(value), float(tot["power"] / slots), float(tot["errors"] / bits),
                                 float(tot["mu"] / slots), float(tot["iters"] / slots), float(worst),
                                 float(tot["feasible"] / slots), float(tot["millis"])))
    return RunResult(sc, tuple(points), records if keep_records else None)


def run_pm_sweep(sc: Scenario, jobs: int = 1, keep_records: bool = False) -> RunResult:
    """Average transmit power per SINR threshold with unit noise."""
    if sc.mode is not Mode.PM:
        raise ScenarioError("run_pm_sweep needs a PM scenario")
    return _run(sc, jobs, keep_records)


def run_sb_sweep(sc: Scenario, jobs: int = 1, keep_records: bool = False) -> RunResult:
    """BER per SNR at fixed budget; SNR is ``budget / sigma^2``."""
    if sc.mode is not Mode.SB:
        raise ScenarioError("run_sb_sweep needs an SB scenario")
    return _run(sc, jobs, keep_records)


def first_system(sc: Scenario, slot: int = 0, realization: int = 0) -> CISystem:
    """The CI system of one slot at the first sweep point."""
    spec = sc.constellation
    rng = realization_rng(sc.seed, realization)
    H = gen_channel(sc.K, sc.Nt, rng)
    sym_idx = rng.integers(0, spec.order, size=(sc.Ns, sc.K))
    value = sc.sweep[0]
    if sc.mode is Mode.PM:
        gamma, sigma = 10 ** (value / 10), 1.0
    else:
        gamma, sigma = 1.0, math.sqrt(sc.budget / 10 ** (value / 10))
    return build_ci_system(H, spec.points[sym_idx[slot]], spec, gamma, sigma)


def convergence_trace(systems: Iterable[CISystem], cfg: pifslp.PJADMMConfig, iters: int) -> np.ndarray:
    """Per-iteration averages of objective, delta, infeasibility and KKT residual.

    Returns an ``(iters, 5)`` array whose first column is the iteration number.
    """
    cfg = replace(cfg, fixed_iters=iters, max_iters=iters)
    acc = np.zeros((iters, 4))
    n = 0
    for system in systems:
        _, rep = pifslp.solve_pm(system, cfg, trace=True)
        acc += np.array([row[1:] for row in rep.trace])
        n += 1
    return np.column_stack([np.arange(1, iters + 1), acc / max(n, 1)])


def scenario_systems(sc: Scenario) -> Iterable[CISystem]:
    for i in range(sc.Nc):
        for t in range(sc.Ns):
            yield first_system(sc, t, i)
