"""Fourier-coefficient relations between f on [-1, 1] and f, M on [-2, 2].

Conventions
-----------
``c[k-1], d[k-1]`` hold the cosine/sine coefficients of ``f`` on [-1, 1],

    c_k = int_{-1}^{1} cos(pi k x) f(x) dx,   d_k = int_{-1}^{1} sin(pi k x) f(x) dx,

so that ``f = 1/2 + sum c_k cos(pi k x) + sum d_k sin(pi k x)``.  The
half-period coefficients ``a_m, b_m`` (of f) and ``A_m, B_m`` (of M) are the
coefficients of the series on [-2, 2] in ``cos(pi m x / 2)``, ``sin(pi m x / 2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

C0 = 0.5


def sine_factor(m: int) -> int:
    """Exact value of sin(pi m / 2) for a positive integer m."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    r = m % 4
    return (0, 1, 0, -1)[r]


@dataclass(frozen=True)
class FourierTruncation:
    """Cosine/sine coefficients c_1..c_T, d_1..d_T of f on [-1, 1]."""

    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if c.shape != d.shape or c.ndim != 1:
            raise ValueError("c and d must be 1-d arrays of equal length")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def T(self) -> int:
        return len(self.c)

    @classmethod
    def zeros(cls, T: int) -> "FourierTruncation":
        return cls(np.zeros(T), np.zeros(T))

    def parseval_sum(self) -> float:
        return float(np.dot(self.c, self.c) + np.dot(self.d, self.d))


def cos_weights(m: int, T: int) -> np.ndarray:
    """Coefficients of c_1..c_T in the odd-m expression for a_m.

    Entry k-1 is ``(2 m sin(pi m/2) / pi) * (-1)^k / (m^2 - 4 k^2)``; the
    denominators are formed in integer arithmetic.
    """
    if m % 2 == 0:
        raise ValueError("cos_weights is defined for odd m only")
    k = np.arange(1, T + 1, dtype=np.int64)
    denom = (m * m - 4 * k * k).astype(float)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    return (2.0 * m * sine_factor(m) / math.pi) * sign / denom


def sin_weights(m: int, T: int) -> np.ndarray:
    """Coefficients of d_1..d_T in the odd-m expression for b_m."""
    if m % 2 == 0:
        raise ValueError("sin_weights is defined for odd m only")
    k = np.arange(1, T + 1, dtype=np.int64)
    denom = (m * m - 4 * k * k).astype(float)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    return (4.0 * sine_factor(m) / math.pi) * k * sign / denom


def a_constant(m: int) -> float:
    """The k = 0 term of a_m (from c_0 = 1/2); zero for even m."""
    if m % 2 == 0:
        return 0.0
    return (2.0 * m * sine_factor(m) / math.pi) * (1.0 / (2 * m * m))


def _ordered_dot(w: np.ndarray, x: np.ndarray) -> float:
    # ascending-k accumulation, so error bounds downstream are reproducible
    total = 0.0
    for term in (w * x).tolist():
        total += term
    return total


def a_coeff(m: int, ft: FourierTruncation, eps_m: float = 0.0) -> float:
    """Half-period cosine coefficient a_m of f.

    Even m gives ``c_{m/2} / 2``; odd m gives the truncated series plus the
    tail remainder ``eps_m`` (ignored for even m).
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if m % 2 == 0:
        k = m // 2
        if k > ft.T:
            raise IndexError(f"a_{m} needs c_{k} but T = {ft.T}")
        return 0.5 * float(ft.c[k - 1])
    series = a_constant(m) + _ordered_dot(cos_weights(m, ft.T), ft.c)
    return eps_m + series


def b_coeff(m: int, ft: FourierTruncation, delta_m: float = 0.0) -> float:
    """Half-period sine coefficient b_m of f (see :func:`a_coeff`)."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if m % 2 == 0:
        k = m // 2
        if k > ft.T:
            raise IndexError(f"b_{m} needs d_{k} but T = {ft.T}")
        return 0.5 * float(ft.d[k - 1])
    return delta_m + _ordered_dot(sin_weights(m, ft.T), ft.d)


def A_coeff(m: int, a_m: float, b_m: float) -> float:
    """Cosine coefficient of M: (4 sin(m pi/2) / (m pi)) a_m - 2 (a_m^2 + b_m^2)."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    s = sine_factor(m)
    quad = -2.0 * (a_m * a_m + b_m * b_m)
    if s == 0:
        return quad
    return (4.0 * s / (m * math.pi)) * a_m + quad


def B_factor(m: int, paper_compat: bool = False) -> float:
    """Multiplier of b_m in B_m.

    The default uses 4/(m pi); ``paper_compat`` switches to the 8/(m pi)
    appearing in the published sine-bracket constraints.
    """
    s = sine_factor(m)
    num = 8.0 if paper_compat else 4.0
    return -num * s / (m * math.pi) if s else 0.0


def B_coeff(m: int, b_m: float, paper_compat: bool = False) -> float:
    """Sine coefficient of M; exactly zero for even m."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    f = B_factor(m, paper_compat)
    if f == 0.0:
        return 0.0
    return f * b_m


def _check_tail_args(m: int, T: int) -> None:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if m < 1 or m % 2 == 0:
        raise ValueError(f"tail bounds need odd m >= 1, got {m}")
    if m >= 2 * T:
        raise ValueError(f"tail bounds need m < 2T, got m={m}, T={T}")


def _round_out(val: float) -> float:
    # about ten roundings go into each formula; 16 u of relative slack covers them
    return math.nextafter(val * (1.0 + 16 * 2.0**-53), math.inf)


def tail_bound_cos(m: int, T: int) -> float:
    """Upper bound on |eps_m| for truncation after c_T (odd m < 2T)."""
    _check_tail_args(m, T)
    val = (1.0 / (4.0 - (m / T) ** 2)) * (2.0 * m / (math.pi * math.sqrt(6.0 * T**3)))
    return _round_out(val)


def tail_bound_sin(m: int, T: int) -> float:
    """Upper bound on |delta_m| for truncation after d_T (odd m < 2T)."""
    _check_tail_args(m, T)
    val = (1.0 / (4.0 - (m / T) ** 2)) * (4.0 / (math.pi * math.sqrt(2.0 * T)))
    return _round_out(val)


def second_moment_rhs(EM: float) -> float:
    """int x^2 M(x) dx expressed through the mean E(M)."""
    if not -2.0 <= EM <= 2.0:
        raise ValueError(f"E(M) must lie in [-2, 2], got {EM}")
    return 2.0 / 3.0 + 0.5 * EM * EM
