import math

import numpy as np
import pytest

from cislp import oracle
from cislp.duality import bisection_sb, equality_consistency, evaluate_balance, pm_to_sb, sb_to_pm

from conftest import SQ2, e1, random_system


def test_balance_examples():
    s = e1()
    x = np.array([1 / SQ2, 1 / SQ2])
    assert evaluate_balance(s, x) == pytest.approx(1.0)
    assert evaluate_balance(s, np.zeros(2)) == 0.0
    assert evaluate_balance(s, 2 * x) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        evaluate_balance(s.with_thresholds(0.0), x)


def test_pm_to_sb_examples():
    x_pm = np.array([1 / SQ2, 1 / SQ2])
    sb = pm_to_sb(x_pm, 1.0, 4.0)
    assert np.allclose(sb.x, 2 * x_pm) and sb.mu == pytest.approx(2.0)
    assert sb.power_used == pytest.approx(4.0)
    same = pm_to_sb(x_pm, 1.0, 1.0)
    assert np.allclose(same.x, x_pm) and same.mu == 1.0


def test_sb_to_pm_examples():
    x_pm, p_pm = sb_to_pm(np.array([SQ2, SQ2]), 2.0, 4.0)
    assert np.allclose(x_pm, 1 / SQ2) and p_pm == pytest.approx(1.0)
    x_pm, p_pm = sb_to_pm(np.array([0.3, 0.1]), 1.0, 2.0)
    assert np.array_equal(x_pm, [0.3, 0.1]) and p_pm == 2.0


def test_round_trip():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(8)
    p = float(x @ x)
    sb = pm_to_sb(x, p, 3.0)
    back, p_back = sb_to_pm(sb.x, sb.mu, 3.0)
    assert np.max(np.abs(back - x)) < 1e-12 and abs(p_back - p) < 1e-12


def test_scaling_errors():
    with pytest.raises(ValueError):
        pm_to_sb(np.ones(2), 0.0, 1.0)
    with pytest.raises(ValueError):
        pm_to_sb(np.ones(2), 1.0, 0.0)
    with pytest.raises(ValueError):
        sb_to_pm(np.ones(2), 0.0, 1.0)


def test_pm_to_sb_balance_matches_scale():
    s = random_system(1, mod="16QAM")
    x, p = oracle.solve_pm(s)
    sb = pm_to_sb(x, p, 1.0)
    assert evaluate_balance(s, sb.x) == pytest.approx(sb.mu, rel=1e-7)
    assert equality_consistency(s, sb.x, sb.mu) < 1e-7


def test_bisection_e1():
    sb = bisection_sb(e1(), 4.0, tol_mu=1e-6)
    assert sb.mu == pytest.approx(2.0, abs=1e-5)
    assert sb.power_used == pytest.approx(4.0)


def test_bisection_zero_thresholds():
    with pytest.raises(ValueError):
        bisection_sb(e1().with_thresholds(0.0), 1.0)


@pytest.mark.parametrize("mod", ["QPSK", "16QAM"])
def test_bisection_matches_closed_form(mod):
    s = random_system(2, mod=mod)
    _, p_pm = oracle.solve_pm(s)
    sb = bisection_sb(s, 1.0, tol_mu=1e-5)
    assert abs(sb.mu - math.sqrt(1.0 / p_pm)) <= 1e-3
    assert abs(pm_to_sb(*oracle.solve_pm(s), 1.0).mu - sb.mu) <= 1e-3


def test_budget_doubling_scales_mu_by_root_two():
    s = random_system(3)
    a = bisection_sb(s, 1.0, tol_mu=1e-6)
    b = bisection_sb(s, 2.0, tol_mu=1e-6)
    assert b.mu / a.mu == pytest.approx(SQ2, abs=1e-4)


def test_bisection_expands_small_hint():
    calls = []

    def lying_solver(system):
        x, p = oracle.solve_pm(system)
        calls.append(p)
        # report a 100x smaller unit power on the first probe so the hint lands too low
        return x, p / 100 if len(calls) == 1 else p

    sb = bisection_sb(e1(), 4.0, pm_solver=lying_solver, tol_mu=1e-6)
    assert sb.mu == pytest.approx(2.0, abs=1e-4)
