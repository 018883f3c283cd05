"""Constructive-interference symbol-level precoding: PJ-ADMM solver, PM/SB duality, QP oracle and Monte-Carlo harness."""

from .ci_model import BlockPartition, CISystem, build_ci_system, partition
from .constellation import Constellation, detect, make_constellation, parse_modulation
from .duality import bisection_sb, evaluate_balance, pm_to_sb, sb_to_pm
from .pifslp import PJADMMConfig, SolverDivergence, default_config, solve_pm
from .simharness import Mode, Scenario, SolverKind, run_pm_sweep, run_sb_sweep

__all__ = [
    "BlockPartition", "CISystem", "Constellation", "Mode", "PJADMMConfig", "Scenario",
    "SolverDivergence", "SolverKind", "bisection_sb", "build_ci_system", "default_config",
    "detect", "evaluate_balance", "make_constellation", "parse_modulation", "partition",
    "pm_to_sb", "run_pm_sweep", "run_sb_sweep", "sb_to_pm", "solve_pm",
]
