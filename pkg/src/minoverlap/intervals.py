"""Envelopes of cos/sin on the subintervals [(j-1)L, jL] and the brackets they
induce on Fourier coefficients, mean and second moment of M.

Arrays are 0-based: row ``j-1`` is subinterval j, column ``m-1`` is frequency m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class Discretization:
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")

    @property
    def L(self) -> float:
        return 2.0 / self.N

    @property
    def L_exact(self) -> Fraction:
        return Fraction(2, self.N)


@dataclass(frozen=True)
class EnvelopeArrays:
    alpha_minus: np.ndarray
    alpha_plus: np.ndarray
    beta_minus: np.ndarray
    beta_plus: np.ndarray

    @property
    def N(self) -> int:
        return self.alpha_minus.shape[0]

    @property
    def mmax(self) -> int:
        return self.alpha_minus.shape[1]


@dataclass(frozen=True)
class AverageVector:
    """Averages of M on [(j-1)L, jL] (``w``) and [-jL, -(j-1)L] (``v``)."""

    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if w.shape != v.shape or w.ndim != 1:
            raise ValueError("w and v must be 1-d arrays of equal length")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)

    @property
    def N(self) -> int:
        return len(self.w)

    @classmethod
    def constant(cls, N: int, value: float) -> "AverageVector":
        return cls(np.full(N, value), np.full(N, value))


def midpoints(disc: Discretization) -> np.ndarray:
    j = np.arange(1, disc.N + 1, dtype=float)
    return disc.L * (j - 0.5)


def build_envelopes(disc: Discretization, R: int) -> EnvelopeArrays:
    """Midpoint value of cos/sin(pi m x / 2) plus/minus pi m L / 4, m = 1..2R.

    Valid because |d/dx cos(pi m x/2)| <= pi m / 2 and each subinterval has
    half-width L / 2.
    """
    if R < 0:
        raise ValueError(f"R must be >= 0, got {R}")
    L = disc.L
    x = midpoints(disc)[:, None]
    m = np.arange(1, 2 * R + 1, dtype=float)[None, :]
    phase = math.pi * m * x / 2.0
    slack = math.pi * m * L / 4.0
    cos_mid = np.cos(phase)
    sin_mid = np.sin(phase)
    return EnvelopeArrays(
        alpha_minus=cos_mid - slack,
        alpha_plus=cos_mid + slack,
        beta_minus=sin_mid - slack,
        beta_plus=sin_mid + slack,
    )


def _check(avg: AverageVector, env: EnvelopeArrays | None, m: int | None = None) -> None:
    if env is None:
        return
    if avg.N != env.N:
        raise ValueError(f"dimension mismatch: averages have N={avg.N}, envelopes N={env.N}")
    if m is not None and not 1 <= m <= env.mmax:
        raise ValueError(f"m={m} outside 1..{env.mmax}")


def _ascending_sum(terms: np.ndarray) -> float:
    total = 0.0
    for t in terms.tolist():
        total += t
    return total


def cos_bracket(avg: AverageVector, env: EnvelopeArrays, m: int, L: float) -> tuple[float, float]:
    """Interval containing A_m = (1/2) int cos(pi m x/2) M(x) dx."""
    _check(avg, env, m)
    s = avg.w + avg.v
    lo = 0.5 * L * _ascending_sum(env.alpha_minus[:, m - 1] * s)
    hi = 0.5 * L * _ascending_sum(env.alpha_plus[:, m - 1] * s)
    return lo, hi


def sin_bracket(avg: AverageVector, env: EnvelopeArrays, m: int, L: float) -> tuple[float, float]:
    """Interval containing B_m = (1/2) int sin(pi m x/2) M(x) dx."""
    _check(avg, env, m)
    bm, bp = env.beta_minus[:, m - 1], env.beta_plus[:, m - 1]
    lo = 0.5 * L * _ascending_sum(bm * avg.w - bp * avg.v)
    hi = 0.5 * L * _ascending_sum(bp * avg.w - bm * avg.v)
    return lo, hi


def mean_bracket(avg: AverageVector, L: float) -> tuple[float, float]:
    """Interval containing E(M) = int x M(x) dx."""
    j = np.arange(1, avg.N + 1, dtype=float)
    lo = L * L * _ascending_sum((j - 1) * avg.w - j * avg.v)
    hi = L * L * _ascending_sum(j * avg.w - (j - 1) * avg.v)
    return lo, hi


def moment_bracket(avg: AverageVector, L: float) -> tuple[float, float]:
    """Interval containing int x^2 M(x) dx."""
    j = np.arange(1, avg.N + 1, dtype=float)
    s = avg.w + avg.v
    lo = L**3 * _ascending_sum((j - 1) ** 2 * s)
    hi = L**3 * _ascending_sum(j**2 * s)
    return lo, hi
