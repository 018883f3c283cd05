import io
import math

import numpy as np
import pytest

from cislp.ci_model import (
    BlockPartition, Strategy, build_ci_system, complex_to_real_channel, dump_system, evaluate_constraints,
    is_feasible, is_system_file, load_system, max_infeasibility, parse_partition, partition,
    power_iteration_norm_sq, psk_cone_matrix, symbol_rotation,
)
from cislp.constellation import parse_modulation
from cislp.simharness import gen_channel

from conftest import SQ2, e1, random_system


def test_real_channel_examples():
    assert np.array_equal(complex_to_real_channel([1]), np.eye(2))
    assert np.array_equal(complex_to_real_channel([1j]), [[0, -1], [1, 0]])
    assert np.array_equal(complex_to_real_channel([1, 1j]), [[1, 0, 0, -1], [0, 1, 1, 0]])


def test_real_channel_matches_complex_product():
    rng = np.random.default_rng(0)
    h = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    z = h @ x
    assert np.allclose(complex_to_real_channel(h) @ np.concatenate([x.real, x.imag]), [z.real, z.imag])


def test_symbol_rotation_examples():
    assert np.allclose(symbol_rotation(1), np.eye(2))
    r = 1 / SQ2
    assert np.allclose(symbol_rotation((1 + 1j) / SQ2), [[r, r], [-r, r]])
    assert np.allclose(symbol_rotation(1j), [[0, 1], [-1, 0]])
    with pytest.raises(ValueError):
        symbol_rotation(0)


def test_psk_cone_matrix_examples():
    assert np.allclose(psk_cone_matrix(4), [[1, -1], [1, 1]])
    assert np.allclose(psk_cone_matrix(8), [[1, -(1 + SQ2)], [1, 1 + SQ2]])
    big = psk_cone_matrix(1024)
    assert abs(big[1, 1] / (1024 / math.pi) - 1) < 1e-3
    with pytest.raises(ValueError):
        psk_cone_matrix(1)


def test_e1_system():
    s = e1()
    assert np.allclose(s.A, SQ2 * np.eye(2), atol=1e-15)
    assert np.array_equal(s.b, [1.0, 1.0])
    assert not s.eq_mask.any()


def test_16qam_inner_point_system():
    spec = parse_modulation("16QAM")
    s = build_ci_system(np.array([[1.0 + 0j]]), np.array([(1 + 1j) / np.sqrt(10)]), spec, 1.0, 1.0)
    assert s.eq_mask.all()
    assert np.array_equal(s.b, [1.0, 1.0])
    # each row reads one coordinate of the noiseless receive, normalized by the symbol coordinate
    x = np.array([0.3, -0.2])
    assert np.allclose(s.A @ x, [0.3 * np.sqrt(10), -0.2 * np.sqrt(10)])


def test_gamma_scaling_doubles_b():
    a = random_system(1, gamma=1.0)
    b = random_system(1, gamma=4.0)
    assert np.array_equal(a.A, b.A)
    assert np.allclose(b.b, 2 * a.b)


@pytest.mark.parametrize("mod", ["QPSK", "8PSK", "16PSK"])
def test_psk_rows_match_complex_evaluation(mod):
    rng = np.random.default_rng(3)
    spec = parse_modulation(mod)
    H = gen_channel(3, 5, rng)
    s = spec.points[rng.integers(0, spec.order, 3)]
    system = build_ci_system(H, s, spec, 2.0, 1.0)
    cot = 1 / math.tan(math.pi / spec.order)
    for _ in range(5):
        x = rng.standard_normal(10)
        z = (H @ (x[:5] + 1j * x[5:])) / s
        ref = np.column_stack([z.real - z.imag * cot, z.real + z.imag * cot]).ravel()
        assert np.max(np.abs(system.A @ x - ref)) < 1e-10


def test_qpsk_antenna_blocks_have_scaled_identity_gram():
    for seed in range(5):
        system = random_system(seed, 4, 8, "QPSK")
        for Ai in partition(8, Strategy.ANTENNA).views(system.A):
            g = Ai.T @ Ai
            assert abs(g[0, 1]) < 1e-10 and abs(g[0, 0] - g[1, 1]) < 1e-10


@pytest.mark.parametrize("mod", ["QPSK", "8PSK"])
def test_joint_phase_invariance(mod):
    rng = np.random.default_rng(4)
    spec = parse_modulation(mod)
    H = gen_channel(3, 4, rng)
    idx = rng.integers(0, spec.order, 3)
    s = spec.points[idx]
    base = build_ci_system(H, s, spec, 1.0, 1.0)
    rot = np.exp(1j * 0.7)
    H2, s2 = H.copy(), s.copy()
    H2[1] *= rot
    s2[1] *= rot
    # the rotated symbol is no longer a constellation point, so bypass membership checks
    from cislp.ci_model import complex_to_real_channel as crc
    A1 = psk_cone_matrix(spec.order) @ symbol_rotation(s2[1]) @ crc(H2[1])
    assert np.allclose(A1, base.A[2:4], atol=1e-12)


def test_build_errors():
    spec = parse_modulation("QPSK")
    H = np.ones((2, 3), dtype=complex)
    with pytest.raises(ValueError):
        build_ci_system(H, spec.points[:3], spec, 1.0, 1.0)
    with pytest.raises(ValueError):
        build_ci_system(H, spec.points[:2], spec, 0.0, 1.0)
    with pytest.raises(ValueError):
        build_ci_system(H, spec.points[:2], spec, 1.0, -1.0)


def test_overloaded_system_warns():
    spec = parse_modulation("QPSK")
    H = gen_channel(5, 2, np.random.default_rng(0))
    with pytest.warns(UserWarning):
        build_ci_system(H, spec.points[np.zeros(5, int)], spec, 1.0, 1.0)


def test_bpsk_single_row_per_user():
    spec = parse_modulation("BPSK")
    H = gen_channel(3, 4, np.random.default_rng(0))
    s = build_ci_system(H, spec.points[[0, 1, 0]], spec, 1.0, 1.0)
    assert s.A.shape == (3, 8) and s.rows_per_user == 1


def test_evaluate_constraints_examples():
    s = e1()
    assert np.allclose(evaluate_constraints(s, [1 / SQ2, 1 / SQ2]), 0, atol=1e-15)
    assert np.array_equal(evaluate_constraints(s, [0, 0]), -s.b)
    x = np.array([0.3, 0.4])
    assert np.allclose(evaluate_constraints(s, 2 * x), 2 * s.A @ x - s.b)


def test_feasibility_reporting():
    s = e1()
    assert is_feasible(s, [1 / SQ2, 1 / SQ2])
    assert is_feasible(s, [5.0, 5.0])
    assert not is_feasible(s, [0.0, 0.0])
    assert max_infeasibility(s, [0.0, 0.0]) == pytest.approx(1.0)
    spec = parse_modulation("16QAM")
    q = build_ci_system(np.array([[1.0 + 0j]]), np.array([(1 + 1j) / np.sqrt(10)]), spec, 1.0, 1.0)
    exact = np.linalg.solve(q.A, q.b)
    assert is_feasible(q, exact)
    assert not is_feasible(q, 2 * exact)  # equality rows do not accept overshoot


def test_partition_examples():
    def cols(bp):
        return [list(map(int, blk)) for blk in bp.blocks]

    assert cols(partition(2, "antenna")) == [[0, 2], [1, 3]]
    assert cols(partition(2, "scalar")) == [[0], [1], [2], [3]]
    assert cols(partition(2, "contiguous", 1)) == [[0, 1, 2, 3]]
    with pytest.raises(ValueError):
        partition(3, "contiguous", 4)


@pytest.mark.parametrize("strategy,n", [("scalar", 1), ("antenna", 1), ("contiguous", 1), ("contiguous", 4)])
def test_partition_covers_columns(strategy, n):
    bp = partition(8, strategy, n)
    cols = sorted(c for blk in bp.blocks for c in blk)
    assert cols == list(range(16)) and sum(bp.widths) == 16
    E = np.hstack([bp.selector(i) for i in range(bp.N)])
    assert np.array_equal(np.sort(E.sum(axis=1)), np.ones(16))


def test_parse_partition():
    assert parse_partition("antenna", 4).N == 4
    assert parse_partition("scalar", 4).N == 8
    assert parse_partition("2", 4).widths == (4, 4)
    with pytest.raises(ValueError):
        parse_partition("3", 4)


def test_power_iteration_matches_svd():
    A = np.random.default_rng(2).standard_normal((8, 16))
    assert power_iteration_norm_sq(A) == pytest.approx(np.linalg.norm(A, 2) ** 2, rel=1e-6)


def test_fixture_round_trip():
    s = random_system(5, 4, 8, "16QAM")
    buf = io.StringIO()
    dump_system(s, buf)
    assert is_system_file(buf.getvalue())
    back = load_system(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.A, s.A) and np.array_equal(back.b, s.b)
    assert np.array_equal(back.eq_mask, s.eq_mask)
    assert (back.K, back.Nt, back.modulation) == (s.K, s.Nt, s.modulation)


def test_fixture_rejects_garbage():
    with pytest.raises(ValueError):
        load_system(io.StringIO("# cislp ci-system v1\nK 1\nNt 1\n"))
    assert not is_system_file("K = 4\n")
