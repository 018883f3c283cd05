"""Normalized PSK and square-QAM constellations.

Points are indexed so that the Gray label of index ``m`` is fixed:

* M-PSK: point ``m`` sits at angle ``pi/M + 2*pi*m/M`` and carries the
  reflected-Gray label of ``m``.  QPSK is therefore ``{(+-1 +- 1j)/sqrt(2)}``.
* Square M-QAM with side ``L = sqrt(M)``: index ``m = i_re * L + i_im`` maps to
  the grid point ``(2*i_re - L + 1) + 1j*(2*i_im - L + 1)`` divided by
  ``sqrt(2*(M - 1)/3)``.  The label is ``gray(i_re)`` followed by
  ``gray(i_im)``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

AMP_TOL = 1e-12


class Kind(str, enum.Enum):
    PSK = "PSK"
    QAM = "QAM"


class Dof(str, enum.Enum):
    """Whether a stacked real coordinate may exceed its threshold."""

    INEQUALITY = "inequality"
    EQUALITY = "equality"


def gray(n: int) -> int:
    return n ^ (n >> 1)


def _bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


@dataclass(frozen=True)
class Constellation:
    kind: Kind
    order: int
    points: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    max_amp: float

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.order)))

    @property
    def name(self) -> str:
        if self.kind is Kind.PSK:
            return {2: "BPSK", 4: "QPSK"}.get(self.order, f"{self.order}PSK")
        return f"{self.order}QAM"

    def index_of(self, symbol: complex) -> int:
        """Index of ``symbol`` in the point set; raises if it is not a point."""
        dist = np.abs(self.points - symbol)
        idx = int(np.argmin(dist))
        if dist[idx] > 1e-9:
            raise ValueError(f"{symbol!r} is not a {self.name} constellation point")
        return idx

    def to_csv(self, fh: TextIO) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "re", "im", "bits"])
        for m, (p, lab) in enumerate(zip(self.points, self.labels)):
            writer.writerow([m, repr(float(p.real)), repr(float(p.imag)), "".join(map(str, lab))])


def make_constellation(kind: Kind | str, order: int) -> Constellation:
    kind = Kind(kind)
    if kind is Kind.PSK:
        if order < 2 or order & (order - 1):
            raise ValueError(f"PSK order must be a power of two >= 2, got {order}")
        width = int(round(math.log2(order)))
        m = np.arange(order)
        points = np.exp(1j * (np.pi / order + 2 * np.pi * m / order))
        labels = np.stack([_bits(gray(i), width) for i in range(order)])
    else:
        side = math.isqrt(order)
        if order < 4 or side * side != order or side & (side - 1):
            raise ValueError(f"square QAM order must be 4**k, got {order}")
        half = int(round(math.log2(side)))
        levels = 2 * np.arange(side) - side + 1
        i_re, i_im = np.divmod(np.arange(order), side)
        points = (levels[i_re] + 1j * levels[i_im]) / math.sqrt(2 * (order - 1) / 3)
        labels = np.stack(
            [np.concatenate([_bits(gray(a), half), _bits(gray(b), half)]) for a, b in zip(i_re, i_im)]
        )
    max_amp = float(np.max(np.abs(np.concatenate([points.real, points.imag]))))
    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(kind, order, points, labels, max_amp)


def parse_modulation(name: str) -> Constellation:
    """Build a constellation from names like ``QPSK``, ``8PSK``, ``16QAM``."""
    key = name.strip().upper().replace("-", "")
    if key == "BPSK":
        return make_constellation(Kind.PSK, 2)
    if key == "QPSK":
        return make_constellation(Kind.PSK, 4)
    for suffix, kind in (("PSK", Kind.PSK), ("QAM", Kind.QAM)):
        if key.endswith(suffix) and key[: -len(suffix)].isdigit():
            return make_constellation(kind, int(key[: -len(suffix)]))
    raise ValueError(f"unknown modulation {name!r}")


def ci_dof(spec: Constellation, symbol: complex) -> tuple[Dof, Dof]:
    """Which coordinates of ``symbol`` can be pushed outward.

    Every PSK coordinate is exploitable.  For QAM a coordinate is exploitable
    only on the outer ring, i.e. when its magnitude equals ``spec.max_amp``.
    """
    spec.index_of(symbol)
    if spec.kind is Kind.PSK:
        return Dof.INEQUALITY, Dof.INEQUALITY

    def one(v: float) -> Dof:
        return Dof.INEQUALITY if abs(abs(v) - spec.max_amp) <= AMP_TOL else Dof.EQUALITY

    return one(symbol.real), one(symbol.imag)


def detect(spec: Constellation, received) -> np.ndarray | int:
    """Minimum-distance detection; ties go to the lowest index."""
    r = np.asarray(received, dtype=complex)
    d = np.abs(r[..., None] - spec.points) ** 2
    idx = np.argmin(d, axis=-1)
    return int(idx) if idx.ndim == 0 else idx


def draw_symbols(spec: Constellation, shape, rng: np.random.Generator) -> np.ndarray:
    """Uniform i.i.d. symbol indices."""
    return rng.integers(0, spec.order, size=shape)


@dataclass(frozen=True)
class SymbolFrame:
    """``K x N_s`` block of transmitted symbols with their Gray bits."""

    indices: np.ndarray
    symbols: np.ndarray
    bits: np.ndarray

    @classmethod
    def draw(cls, spec: Constellation, K: int, n_slots: int, rng: np.random.Generator) -> SymbolFrame:
        idx = draw_symbols(spec, (K, n_slots), rng)
        return cls(idx, spec.points[idx], spec.labels[idx])


def bit_errors(spec: Constellation, sent: np.ndarray, detected: np.ndarray) -> int:
    """Total Hamming distance between the Gray labels of two index arrays."""
    return int(np.sum(spec.labels[np.asarray(sent)] != spec.labels[np.asarray(detected)]))
