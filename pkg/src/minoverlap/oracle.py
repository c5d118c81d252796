"""Exact reference computations for piecewise-constant f.

The correlation ``M(x) = int f(t) (1 - f(x + t)) dt`` of a step function is
piecewise linear with breakpoints at differences of the step breakpoints, so
it can be assembled exactly in rational arithmetic from the second
derivative (a sum of point masses).  All moments are then exact; trig
integrals are closed-form expressions evaluated in floating point.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .fourier import FourierTruncation, a_coeff, b_coeff
from .intervals import AverageVector


class HypothesisError(ValueError):
    """The function does not satisfy the hypotheses for the given input box."""


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(str(x))


@dataclass(frozen=True)
class PiecewiseFn:
    """Function equal to ``a0 + a1 * x`` on each piece [bp[i], bp[i+1]]."""

    breakpoints: tuple[Fraction, ...]
    coeffs: tuple[tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        bp = tuple(_frac(b) for b in self.breakpoints)
        co = tuple((_frac(a), _frac(b)) for a, b in self.coeffs)
        if len(bp) < 2 or len(co) != len(bp) - 1:
            raise ValueError("need len(coeffs) == len(breakpoints) - 1 >= 1")
        if any(b1 >= b2 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coeffs", co)

    @classmethod
    def step(cls, breakpoints: Sequence, values: Sequence) -> "PiecewiseFn":
        return cls(tuple(breakpoints), tuple((_frac(v), Fraction(0)) for v in values))

    @classmethod
    def from_knots(cls, xs: Sequence[Fraction], ys: Sequence[Fraction]) -> "PiecewiseFn":
        """Continuous piecewise-linear interpolant of (xs, ys)."""
        coeffs = []
        for x0, x1, y0, y1 in zip(xs, xs[1:], ys, ys[1:]):
            slope = (y1 - y0) / (x1 - x0)
            coeffs.append((y0 - slope * x0, slope))
        return cls(tuple(xs), tuple(coeffs))

    @property
    def domain(self) -> tuple[Fraction, Fraction]:
        return self.breakpoints[0], self.breakpoints[-1]

    @property
    def is_step(self) -> bool:
        return all(a1 == 0 for _, a1 in self.coeffs)

    @property
    def values(self) -> tuple[Fraction, ...]:
        """Piece values (step functions only)."""
        if not self.is_step:
            raise ValueError("values is only defined for step functions")
        return tuple(a0 for a0, _ in self.coeffs)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        bp = np.array([float(b) for b in self.breakpoints])
        a0 = np.array([float(a) for a, _ in self.coeffs])
        a1 = np.array([float(b) for _, b in self.coeffs])
        idx = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, len(a0) - 1)
        out = a0[idx] + a1[idx] * x
        return np.where((x < bp[0]) | (x > bp[-1]), 0.0, out)

    def knot_values(self) -> list[Fraction]:
        """Values at the breakpoints (left limits at interior breakpoints)."""
        out = [self.coeffs[0][0] + self.coeffs[0][1] * self.breakpoints[0]]
        for (a0, a1), x in zip(self.coeffs, self.breakpoints[1:]):
            out.append(a0 + a1 * x)
        return out

    def moment(self, p: int) -> Fraction:
        """Exact int x^p g(x) dx over the domain."""
        total = Fraction(0)
        for (a0, a1), l, r in zip(self.coeffs, self.breakpoints, self.breakpoints[1:]):
            total += a0 * (r ** (p + 1) - l ** (p + 1)) / (p + 1)
            total += a1 * (r ** (p + 2) - l ** (p + 2)) / (p + 2)
        return total

    def trig_integral(self, omega, kind: str) -> np.ndarray:
        """``int cos(omega x) g(x) dx`` (kind='cos') or the sine analogue.

        ``omega`` may be an array of nonzero frequencies.
        """
        w = np.atleast_1d(np.asarray(omega, dtype=float))[:, None]
        l = np.array([float(b) for b in self.breakpoints[:-1]])[None, :]
        r = np.array([float(b) for b in self.breakpoints[1:]])[None, :]
        a0 = np.array([float(a) for a, _ in self.coeffs])[None, :]
        a1 = np.array([float(b) for _, b in self.coeffs])[None, :]
        if kind == "cos":
            prim0 = lambda x: np.sin(w * x) / w
            prim1 = lambda x: x * np.sin(w * x) / w + np.cos(w * x) / w**2
        elif kind == "sin":
            prim0 = lambda x: -np.cos(w * x) / w
            prim1 = lambda x: -x * np.cos(w * x) / w + np.sin(w * x) / w**2
        else:
            raise ValueError(f"kind must be 'cos' or 'sin', got {kind!r}")
        terms = a0 * (prim0(r) - prim0(l))
        if np.any(a1):
            terms = terms + a1 * (prim1(r) - prim1(l))
        return terms.sum(axis=1)

    def primitive(self, x) -> np.ndarray:
        """``int_{lo}^{x} g``, vectorised, floating point."""
        x = np.asarray(x, dtype=float)
        bp = np.array([float(b) for b in self.breakpoints])
        a0 = np.array([float(a) for a, _ in self.coeffs])
        a1 = np.array([float(b) for _, b in self.coeffs])
        l, r = bp[:-1], bp[1:]
        piece_int = a0 * (r - l) + 0.5 * a1 * (r * r - l * l)
        cum = np.concatenate([[0.0], np.cumsum(piece_int)])
        xc = np.clip(x, bp[0], bp[-1])
        idx = np.clip(np.searchsorted(bp, xc, side="right") - 1, 0, len(a0) - 1)
        ll = l[idx]
        return cum[idx] + a0[idx] * (xc - ll) + 0.5 * a1[idx] * (xc * xc - ll * ll)


def validate_f(f: PiecewiseFn) -> None:
    """Raise ValueError unless f is a step function [-1,1] -> [0,1] with mass 1."""
    if f.domain != (Fraction(-1), Fraction(1)):
        raise ValueError(f"f must live on [-1, 1], got {f.domain}")
    if not f.is_step:
        raise ValueError("f must be piecewise constant")
    if any(v < 0 or v > 1 for v in f.values):
        raise ValueError("f must take values in [0, 1]")
    mass = f.moment(0)
    if mass != 1:
        raise ValueError(f"f must have integral 1, got {mass}")


def convolve(f: PiecewiseFn) -> PiecewiseFn:
    """M(x) = int f(t) g(x + t) dt on [-2, 2] with g = 1 - f on [-1, 1]."""
    validate_f(f)
    bp = f.breakpoints
    fv = f.values
    gv = [1 - v for v in fv]
    kinks: dict[Fraction, Fraction] = defaultdict(Fraction)
    for i, fi in enumerate(fv):
        if fi == 0:
            continue
        a1, a2 = bp[i], bp[i + 1]
        for j, gj in enumerate(gv):
            if gj == 0:
                continue
            c1, c2 = bp[j], bp[j + 1]
            wgt = fi * gj
            kinks[c1 - a2] += wgt
            kinks[c1 - a1] -= wgt
            kinks[c2 - a2] -= wgt
            kinks[c2 - a1] += wgt
    xs = [Fraction(-2)]
    ys = [Fraction(0)]
    slope = Fraction(0)
    for x in sorted(kinks):
        if x > xs[-1]:
            ys.append(ys[-1] + slope * (x - xs[-1]))
            xs.append(x)
        slope += kinks[x]
    if xs[-1] < 2:
        ys.append(ys[-1] + slope * (2 - xs[-1]))
        xs.append(Fraction(2))
    # drop collinear interior knots
    keep_x, keep_y = [xs[0]], [ys[0]]
    for k in range(1, len(xs) - 1):
        s_left = (ys[k] - keep_y[-1]) / (xs[k] - keep_x[-1])
        s_right = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
        if s_left != s_right:
            keep_x.append(xs[k])
            keep_y.append(ys[k])
    keep_x.append(xs[-1])
    keep_y.append(ys[-1])
    return PiecewiseFn.from_knots(keep_x, keep_y)


def sup_norm(M: PiecewiseFn) -> Fraction:
    return max(abs(y) for y in M.knot_values())


def mean(M: PiecewiseFn) -> Fraction:
    return M.moment(1)


def second_moment(M: PiecewiseFn) -> Fraction:
    return M.moment(2)


def fourier_f(f: PiecewiseFn, k) -> tuple[np.ndarray, np.ndarray]:
    """(c_k, d_k) = (int cos(pi k x) f, int sin(pi k x) f); vectorised in k."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return f.trig_integral(math.pi * k, "cos"), f.trig_integral(math.pi * k, "sin")


def half_period_coeffs(g: PiecewiseFn, m) -> tuple[np.ndarray, np.ndarray]:
    """(1/2) int cos(pi m x/2) g and (1/2) int sin(pi m x/2) g."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    w = math.pi * m / 2.0
    return 0.5 * g.trig_integral(w, "cos"), 0.5 * g.trig_integral(w, "sin")


def averages(M: PiecewiseFn, N: int) -> AverageVector:
    """Interval averages w_j on [(j-1)L, jL] and v_j on [-jL, -(j-1)L]."""
    L = 2.0 / N
    grid = L * np.arange(N + 1, dtype=float)
    Fp = M.primitive(grid)
    Fn = M.primitive(-grid)
    w = np.diff(Fp) / L
    v = -np.diff(Fn) / L
    return AverageVector(w, v)


def truncation(f: PiecewiseFn, T: int) -> FourierTruncation:
    c, d = fourier_f(f, np.arange(1, T + 1))
    return FourierTruncation(c, d)


def remainders(f: PiecewiseFn, T: int, R: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact tail remainders eps_m, delta_m for odd m = 1, 3, ..., 2R-1.

    Computed as (closed-form a_m, b_m) minus the truncated series in c_1..c_T.
    """
    ft = truncation(f, T)
    odd = np.arange(1, 2 * R, 2)
    a_ex, b_ex = half_period_coeffs(f, odd)
    eps = np.array([a_ex[i] - a_coeff(int(m), ft, 0.0) for i, m in enumerate(odd)])
    delta = np.array([b_ex[i] - b_coeff(int(m), ft, 0.0) for i, m in enumerate(odd)])
    return eps, delta


def tail_sums(f: PiecewiseFn, T: int, K_ext: int, m: int) -> tuple[float, float]:
    """Tails of the a_m, b_m series (odd m) summed over T < k <= K_ext."""
    if m % 2 == 0:
        raise ValueError("tail sums are defined for odd m")
    from .fourier import sine_factor

    k = np.arange(T + 1, K_ext + 1, dtype=np.int64)
    c, d = fourier_f(f, k)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    denom = (m * m - 4 * k * k).astype(float)
    s = sine_factor(m)
    eps = (2.0 * m * s / math.pi) * float(np.sum(sign * c / denom))
    delta = (4.0 * s / math.pi) * float(np.sum(k * sign * d / denom))
    return eps, delta


@dataclass(frozen=True)
class FeasibleAssignment:
    Omega: float
    avg: AverageVector
    ft: FourierTruncation
    eps: np.ndarray
    delta: np.ndarray


def check_hypotheses(f: PiecewiseFn, inp) -> dict:
    """Mean of M and first coefficients of f checked against the input box."""
    M = convolve(f)
    EM = float(mean(M))
    c1, d1 = (float(x[0]) for x in fourier_f(f, [1]))
    problems = []
    if inp.h1 < 0:
        problems.append(f"(i) needs h1 >= 0, got h1={inp.h1}")
    if not inp.h1 <= EM <= inp.h2:
        problems.append(f"(i) E(M)={EM:.12g} outside [h1, h2]=[{inp.h1}, {inp.h2}]")
    if inp.p1 < 0:
        problems.append(f"(ii) needs p1 >= 0, got p1={inp.p1}")
    if not inp.p1 <= c1 <= inp.p2:
        problems.append(f"(ii) c_1={c1:.12g} outside [p1, p2]=[{inp.p1}, {inp.p2}]")
    if not inp.q1 <= d1 <= inp.q2:
        problems.append(f"(iii) d_1={d1:.12g} outside [q1, q2]=[{inp.q1}, {inp.q2}]")
    if problems:
        raise HypothesisError("; ".join(problems))
    return {"M": M, "EM": EM, "c1": c1, "d1": d1}


def assignment(f: PiecewiseFn, inp) -> FeasibleAssignment:
    """Variable values induced by f for the full program with input ``inp``."""
    info = check_hypotheses(f, inp)
    M = info["M"]
    eps, delta = remainders(f, inp.T, inp.R)
    return FeasibleAssignment(
        Omega=float(sup_norm(M)),
        avg=averages(M, inp.N),
        ft=truncation(f, inp.T),
        eps=eps,
        delta=delta,
    )


def load_fixture(path) -> PiecewiseFn:
    """Read a step function from JSON: ``{"breakpoints": [...], "values": [...]}``.

    Numbers may be given as strings of rationals such as ``"-3/5"``.
    """
    data = json.loads(Path(path).read_text())
    return PiecewiseFn.step(
        [_frac(b) for b in data["breakpoints"]], [_frac(v) for v in data["values"]]
    )


def dump_fixture(f: PiecewiseFn, path, name: str = "") -> None:
    data = {
        "name": name,
        "breakpoints": [str(b) for b in f.breakpoints],
        "values": [str(v) for v in f.values],
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def cosine_staircase(amplitude: Fraction = Fraction(3, 10), pieces: int = 20,
                     digits: int = 3) -> PiecewiseFn:
    """Even step function sampling 1/2 + amplitude*cos(pi x) at piece midpoints.

    Values are rounded to ``digits`` decimals antisymmetrically about x = 1/2
    so that the mass stays exactly 1.
    """
    if pieces % 4:
        raise ValueError("pieces must be a multiple of 4")
    h = Fraction(2, pieces)
    bp = [Fraction(-1) + i * h for i in range(pieces + 1)]
    q = Fraction(1, 10**digits)
    half = pieces // 2
    right = []
    for i in range(half // 2):
        mid = h * i + h / 2
        off = round(float(amplitude) * math.cos(math.pi * float(mid)) / float(q)) * q
        right.append(off)
    # cos(pi (1 - x)) = -cos(pi x): reuse the offsets with opposite sign
    right = right + [-o for o in reversed(right)]
    vals_right = [Fraction(1, 2) + o for o in right]
    vals = list(reversed(vals_right)) + vals_right
    return PiecewiseFn.step(bp, vals)
