"""Real-valued constructive-interference constraint systems.

A transmit vector ``x_c`` (complex, length ``N_t``) is stacked as
``x = [Re x_c; Im x_c]``.  User ``k`` contributes two consecutive rows
(one for BPSK) of ``A`` so that CI holds iff ``A x >= b`` on inequality rows
and ``A x == b`` on equality rows, with ``b`` equal to ``sqrt(gamma_k) *
sigma_k`` on every row of user ``k``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import TextIO

import numpy as np

from .constellation import Constellation, Dof, Kind, ci_dof, parse_modulation

FEAS_TOL = 1e-6
_HEADER = "# cislp ci-system v1"


def complex_to_real_channel(h) -> np.ndarray:
    """``2 x 2N_t`` real matrix acting on ``[Re x; Im x]`` like ``h^T x``."""
    h = np.atleast_1d(np.asarray(h, dtype=complex))
    return np.vstack([np.concatenate([h.real, -h.imag]), np.concatenate([h.imag, h.real])])


def symbol_rotation(s: complex) -> np.ndarray:
    """Real 2x2 matrix of multiplication by ``1/s``."""
    if s == 0:
        raise ValueError("zero symbol has no inverse rotation")
    inv = 1.0 / complex(s)
    return np.array([[inv.real, -inv.imag], [inv.imag, inv.real]])


def psk_cone_matrix(M: int) -> np.ndarray:
    """The two CI half-plane normals of an M-PSK sector (``M >= 4``)."""
    if M < 2:
        raise ValueError(f"PSK order must be >= 2, got {M}")
    if M == 2:
        raise ValueError("BPSK has a single CI half-plane; build_ci_system handles it directly")
    cot = 1.0 / math.tan(math.pi / M)
    return np.array([[1.0, -cot], [1.0, cot]])


def qam_axis_scaling(s: complex) -> np.ndarray:
    """Per-axis normalization ``diag(1/Re s, 1/Im s)`` for a QAM point.

    Dividing each received coordinate by the matching symbol coordinate keeps
    the sign convention of the CI inequalities while pinning inner
    coordinates to their nominal value under equality.
    """
    if s.real == 0 or s.imag == 0:
        raise ValueError("square-QAM points have nonzero coordinates")
    return np.diag([1.0 / s.real, 1.0 / s.imag])


@dataclass(frozen=True)
class CISystem:
    A: np.ndarray
    b: np.ndarray
    eq_mask: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    modulation: str
    K: int
    Nt: int
    rows_per_user: int = 2

    @property
    def ineq_mask(self) -> np.ndarray:
        return ~self.eq_mask

    def with_thresholds(self, scale: float) -> CISystem:
        """Same constraint geometry with every threshold multiplied by ``scale``."""
        return CISystem(self.A, self.b * scale, self.eq_mask, self.gamma * scale**2,
                        self.sigma, self.modulation, self.K, self.Nt, self.rows_per_user)

    @cached_property
    def spectral_norm_sq(self) -> float:
        """``||A||_2^2`` by power iteration."""
        return power_iteration_norm_sq(self.A)


def power_iteration_norm_sq(A: np.ndarray, rtol: float = 1e-8, max_iter: int = 20000) -> float:
    """Largest eigenvalue of ``A^T A`` by power iteration from a fixed start."""
    n = A.shape[1]
    v = np.ones(n) / math.sqrt(n)
    est = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= rtol * new:
            return new
        est = new
    return est


def build_ci_system(channel, symbols, spec: Constellation, gamma, sigma) -> CISystem:
    """Stack the CI constraints of one symbol slot.

    Parameters
    ----------
    channel : (K, N_t) complex array
        Row ``k`` is ``h_k^T``.
    symbols : (K,) complex array
        Constellation points, one per user.
    spec : Constellation
    gamma, sigma : scalar or (K,) array
        SINR thresholds (or SB weights) and noise standard deviations.
    """
    H = np.atleast_2d(np.asarray(channel, dtype=complex))
    s = np.atleast_1d(np.asarray(symbols, dtype=complex))
    K, Nt = H.shape
    if s.shape != (K,):
        raise ValueError(f"expected {K} symbols, got shape {s.shape}")
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,)).copy()
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (K,)).copy()
    if np.any(gamma <= 0) or np.any(sigma <= 0):
        raise ValueError("gamma and sigma must be positive")
    if not np.all(np.isfinite(H)):
        raise ValueError("channel has non-finite entries")
    if K > 2 * Nt:
        warnings.warn(f"K={K} exceeds 2*N_t={2 * Nt}; the CI system is overdetermined", stacklevel=2)

    bpsk = spec.kind is Kind.PSK and spec.order == 2
    rows = 1 if bpsk else 2
    A = np.empty((rows * K, 2 * Nt))
    eq = np.zeros(rows * K, dtype=bool)
    T = None if bpsk or spec.kind is Kind.QAM else psk_cone_matrix(spec.order)
    for k in range(K):
        Hk = complex_to_real_channel(H[k])
        if bpsk:
            A[k] = (symbol_rotation(s[k]) @ Hk)[0]
        elif T is not None:
            A[2 * k:2 * k + 2] = T @ symbol_rotation(s[k]) @ Hk
        else:
            A[2 * k:2 * k + 2] = qam_axis_scaling(s[k]) @ Hk
            re, im = ci_dof(spec, s[k])
            eq[2 * k] = re is Dof.EQUALITY
            eq[2 * k + 1] = im is Dof.EQUALITY
    b = np.repeat(np.sqrt(gamma) * sigma, rows)
    return CISystem(A, b, eq, gamma, sigma, spec.name, K, Nt, rows)


def evaluate_constraints(system: CISystem, x) -> np.ndarray:
    return system.A @ np.asarray(x, dtype=float) - system.b


def max_infeasibility(system: CISystem, x) -> float:
    r = evaluate_constraints(system, x)
    viol = np.where(system.eq_mask, np.abs(r), np.maximum(-r, 0.0))
    return float(np.max(viol)) if viol.size else 0.0


def is_feasible(system: CISystem, x, tol: float = FEAS_TOL) -> bool:
    return max_infeasibility(system, x) <= tol


class Strategy(str, enum.Enum):
    SCALAR = "scalar"
    ANTENNA = "antenna"
    CONTIGUOUS = "contiguous"


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint column index sets covering ``0 .. 2N_t - 1``."""

    blocks: tuple[np.ndarray, ...]

    @property
    def N(self) -> int:
        return len(self.blocks)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def selector(self, i: int) -> np.ndarray:
        """The ``E_i`` matrix: columns of the identity picked by block ``i``."""
        n = sum(self.widths)
        return np.eye(n)[:, self.blocks[i]]

    def views(self, A: np.ndarray) -> list[np.ndarray]:
        return [A[:, blk] for blk in self.blocks]


def partition(Nt: int, strategy: Strategy | str = Strategy.CONTIGUOUS, n_blocks: int = 1) -> BlockPartition:
    """Split the ``2N_t`` stacked transmit coordinates into blocks.

    ``scalar`` gives ``2N_t`` singletons, ``antenna`` pairs column ``i`` with
    ``i + N_t`` (real and imaginary part of antenna ``i``), and
    ``contiguous`` cuts ``n_blocks`` equal consecutive runs.
    """
    strategy = Strategy(strategy)
    n = 2 * Nt
    if strategy is Strategy.SCALAR:
        blocks = [np.array([i]) for i in range(n)]
    elif strategy is Strategy.ANTENNA:
        blocks = [np.array([i, i + Nt]) for i in range(Nt)]
    else:
        if n_blocks < 1 or n % n_blocks:
            raise ValueError(f"{n_blocks} blocks do not divide {n} columns")
        w = n // n_blocks
        blocks = [np.arange(i * w, (i + 1) * w) for i in range(n_blocks)]
    return BlockPartition(tuple(blocks))


def parse_partition(text: str, Nt: int) -> BlockPartition:
    """``scalar``, ``antenna`` or an integer block count."""
    text = text.strip().lower()
    if text in (Strategy.SCALAR.value, Strategy.ANTENNA.value):
        return partition(Nt, text)
    return partition(Nt, Strategy.CONTIGUOUS, int(text))


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dump_system(system: CISystem, fh: TextIO) -> None:
    """Write the fixture text format.

    Header lines ``K``, ``Nt``, ``modulation``, ``rows_per_user``, ``gamma``
    and ``sigma``, then an ``A`` line followed by one matrix row per line,
    then ``b`` and ``eq_mask`` lines.  Floats are written with ``repr`` so a
    round trip is exact.
    """
    fh.write(f"{_HEADER}\n")
    fh.write(f"K {system.K}\nNt {system.Nt}\nmodulation {system.modulation}\n")
    fh.write(f"rows_per_user {system.rows_per_user}\n")
    fh.write(f"gamma {_fmt(system.gamma)}\nsigma {_fmt(system.sigma)}\n")
    fh.write(f"A {system.A.shape[0]} {system.A.shape[1]}\n")
    for row in system.A:
        fh.write(_fmt(row) + "\n")
    fh.write(f"b {_fmt(system.b)}\n")
    fh.write("eq_mask " + " ".join("1" if e else "0" for e in system.eq_mask) + "\n")


def is_system_file(text: str) -> bool:
    return text.lstrip().startswith(_HEADER)


def load_system(fh: TextIO) -> CISystem:
    lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != _HEADER:
        raise ValueError("not a CI system fixture (missing header)")
    fields: dict[str, list[str]] = {}
    rows: list[list[float]] = []
    it = iter(lines[1:])
    for ln in it:
        key, _, rest = ln.partition(" ")
        if key == "A":
            m, n = map(int, rest.split())
            rows = [[float(v) for v in next(it).split()] for _ in range(m)]
            if any(len(r) != n for r in rows):
                raise ValueError("ragged A matrix in fixture")
        else:
            fields[key] = rest.split()
    try:
        K = int(fields["K"][0])
        Nt = int(fields["Nt"][0])
        A = np.array(rows, dtype=float).reshape(len(rows), 2 * Nt)
        system = CISystem(
            A=A,
            b=np.array(fields["b"], dtype=float),
            eq_mask=np.array([v == "1" for v in fields["eq_mask"]], dtype=bool),
            gamma=np.array(fields["gamma"], dtype=float),
            sigma=np.array(fields["sigma"], dtype=float),
            modulation=fields["modulation"][0],
            K=K,
            Nt=Nt,
            rows_per_user=int(fields.get("rows_per_user", ["2"])[0]),
        )
    except KeyError as exc:
        raise ValueError(f"fixture missing field {exc}") from None
    parse_modulation(system.modulation)
    if system.b.shape != (A.shape[0],) or system.eq_mask.shape != (A.shape[0],):
        raise ValueError("fixture dimensions are inconsistent")
    return system
