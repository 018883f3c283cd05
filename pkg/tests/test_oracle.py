import numpy as np
import pytest

from cislp.ci_model import CISystem
from cislp.oracle import NotCertified, dual_objective, kkt_check, solve_pm, solve_pm_dual

from conftest import SQ2, e1, random_system


def test_e1_certificate():
    x, lam, rep = solve_pm_dual(e1())
    assert np.allclose(x, 1 / SQ2, atol=1e-10)
    assert np.allclose(lam, 1.0, atol=1e-8)
    assert rep.residual < 1e-8


def test_zero_thresholds():
    x, lam, rep = solve_pm_dual(e1().with_thresholds(0.0))
    assert not x.any() and not lam.any() and rep.residual == 0.0


def test_random_2x4_certifies():
    _, _, rep = solve_pm_dual(random_system(0, 2, 4, "QPSK"))
    assert rep.residual < 1e-8


@pytest.mark.parametrize("mod", ["QPSK", "8PSK", "16QAM", "64QAM"])
def test_strong_duality(mod):
    s = random_system(1, 4, 8, mod)
    x, lam, rep = solve_pm_dual(s)
    assert rep.ok(1e-8)
    assert x @ x == pytest.approx(dual_objective(s, lam), rel=1e-7)
    assert np.all(lam[~s.eq_mask] >= 0)


def test_accelerated_same_certificate():
    s = random_system(2, 4, 8, "16QAM")
    xa, _, ra = solve_pm_dual(s, accelerated=True)
    xp, _, rp = solve_pm_dual(s)
    assert ra.residual < 1e-8 and rp.residual < 1e-8
    assert np.allclose(xa, xp, atol=1e-7)


def test_kkt_check_examples():
    s = e1()
    rep = kkt_check(s, np.zeros(2), np.zeros(2))
    assert rep.primal_infeas == pytest.approx(np.max(np.abs(s.b)))
    x, lam, _ = solve_pm_dual(s)
    rep = kkt_check(s, x + 1e-3, lam)
    assert rep.stationarity == pytest.approx(2e-3, rel=1e-4)
    assert kkt_check(s, x, -lam).dual_infeas < 0


def test_deterministic():
    s = random_system(3, 4, 8, "16QAM")
    a, b = solve_pm_dual(s), solve_pm_dual(s)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_solve_pm_wrapper():
    x, p = solve_pm(e1())
    assert p == pytest.approx(1.0, abs=1e-9)


def test_rejects_rank_deficient_equality_only():
    A = np.array([[1.0, 0.0], [2.0, 0.0]])
    s = CISystem(A=A, b=np.ones(2), eq_mask=np.ones(2, bool), gamma=np.ones(1), sigma=np.ones(1),
                 modulation="16QAM", K=1, Nt=1)
    with pytest.raises(ValueError):
        solve_pm_dual(s)


def test_rejects_unreachable_tolerance():
    with pytest.raises(ValueError):
        solve_pm_dual(e1(), tol=1e-14)


def test_not_certified_carries_iterate():
    s = random_system(4, 4, 8, "QPSK")
    with pytest.raises(NotCertified) as err:
        solve_pm_dual(s, max_iters=3, polish_every=1000)
    assert err.value.x.shape == (16,)
