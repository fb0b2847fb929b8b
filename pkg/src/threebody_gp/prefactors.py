"""Scalar prefactors ``Theta`` of the excitation number.

Each prefactor is a product of factors ``1 - (n + p)/N`` or their square
roots, evaluated at the excitation number ``n``.  Factors that would be
negative near ``n = N`` are clamped to 0 so that every function is total on
``0 <= n <= N``.

Two bound families are scanned exhaustively:

    N |Theta(n) - 1| / (n + 1) <= C
    N Theta_N(n) |Theta(n + p) - Theta(n)| <= C_p,   p = 1, 2, 3.
"""

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange


class ThetaKind(enum.Enum):
    THETA0 = "Θ0"
    THETA1 = "Θ1"
    THETA2_1 = "Θ2_1"
    THETA2_2OR3 = "Θ2_2or3"
    THETA3_1 = "Θ3_1"
    THETA3_2OR3 = "Θ3_2or3"
    THETA4_1 = "Θ4_1"
    THETA4_2OR3 = "Θ4_2or3"
    THETA5 = "Θ5"
    THETA_N = "ΘN"

    @classmethod
    def from_tag(cls, tag):
        """Accept the unicode tag (``"Θ2_1"``), an ASCII spelling
        (``"Theta2_1"``) or the enum name."""
        if isinstance(tag, cls):
            return tag
        text = str(tag).replace("Theta", "Θ")
        for kind in cls:
            if text in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown Theta kind {tag!r}")

    @property
    def ascii(self):
        return self.value.replace("Θ", "Theta")


# Each kind is a list of (shift p, power) pairs: prod (1 - (n + p)/N)^power.
_FACTORS = {
    ThetaKind.THETA0: ((0, 1.0), (1, 1.0), (2, 1.0)),
    ThetaKind.THETA1: ((0, 0.5), (1, 1.0), (2, 1.0)),
    ThetaKind.THETA2_1: ((0, 1.0), (1, 0.5), (2, 0.5)),
    ThetaKind.THETA2_2OR3: ((0, 1.0), (1, 1.0)),
    ThetaKind.THETA3_1: ((0, 0.5), (1, 0.5), (2, 0.5)),
    ThetaKind.THETA3_2OR3: ((0, 0.5), (-1, 1.0)),
    ThetaKind.THETA4_1: ((0, 0.5), (-1, 0.5)),
    ThetaKind.THETA4_2OR3: ((0, 1.0),),
    ThetaKind.THETA5: ((0, 0.5),),
    ThetaKind.THETA_N: ((0, 0.5), (1, 0.5), (2, 0.5)),
}

SHIFTS = (1, 2, 3)
BOUND_COLUMNS = ("kind", "N", "empirical_C", "empirical_C1", "empirical_C2", "empirical_C3")


@dataclass(frozen=True)
class ThetaEval:
    kind: ThetaKind
    n: int
    N: int
    value: float


def theta_values(kind, n, N):
    """Vectorised ``Theta`` over an integer array ``n`` (no range checks)."""
    kind = ThetaKind.from_tag(kind)
    n = np.asarray(n, dtype=float)
    out = np.ones_like(n)
    for shift, power in _FACTORS[kind]:
        factor = np.maximum(1.0 - (n + shift) / N, 0.0)
        out = out * (factor if power == 1.0 else np.sqrt(factor))
    return out


def theta(kind, n, N):
    """``Theta_kind(n)`` at particle number ``N``; raises ``OutOfRange`` unless
    ``0 <= n <= N`` and ``N >= 1``."""
    if int(N) != N or N < 1:
        raise OutOfRange(f"N must be a positive integer, got {N}")
    if int(n) != n or not 0 <= n <= N:
        raise OutOfRange(f"n = {n} outside [0, {N}]")
    return float(theta_values(kind, np.array([n]), N)[0])


def evaluate(kind, n, N):
    return ThetaEval(ThetaKind.from_tag(kind), int(n), int(N), theta(kind, n, N))


@dataclass
class ThetaBound:
    kind: ThetaKind
    N: int
    c: float
    c_shift: dict  # p -> empirical C_p

    def as_row(self):
        return [self.kind.value, self.N, self.c] + [self.c_shift[p] for p in SHIFTS]


def shift_constant(kind, N, p):
    """``sup_n N Theta_N(n) |Theta(n + p) - Theta(n)|`` over ``0 <= n <= N - p``."""
    if p == 0:
        return 0.0
    n = np.arange(0, N - p + 1)
    diff = np.abs(theta_values(kind, n + p, N) - theta_values(kind, n, N))
    return float(np.max(N * theta_values(ThetaKind.THETA_N, n, N) * diff))


def theta_bound_report(n_list, kinds=None):
    """Exhaustive scans over ``n in [0, N]`` for every ``N`` in ``n_list``."""
    kinds = list(ThetaKind) if kinds is None else [ThetaKind.from_tag(k) for k in kinds]
    report = []
    for kind in kinds:
        for N in n_list:
            if N < 4:
                raise ValueError(f"N = {N} must be >= 4")
            n = np.arange(0, N + 1)
            c = float(np.max(N * np.abs(theta_values(kind, n, N) - 1.0) / (n + 1)))
            report.append(ThetaBound(kind, int(N), c, {p: shift_constant(kind, N, p) for p in SHIFTS}))
    return report


def write_bound_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(BOUND_COLUMNS)
        for row in report:
            w.writerow([row.kind.ascii, row.N] + [repr(x) for x in row.as_row()[2:]])
