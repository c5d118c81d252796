"""Conic programs: the even-M linear program and the full second-order cone
program, stored in the standard form

    minimize   objective @ x
    subject to F_i x + g_i in K_i,

where ``K_i`` is either the half-line (single row, value >= 0) or a
second-order cone (first row bounds the Euclidean norm of the remaining
rows).  Rows of all constraints are stacked into one sparse matrix.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np
import scipy.sparse as sp

from .fourier import B_factor, a_constant, cos_weights, sin_weights, sine_factor, tail_bound_cos, tail_bound_sin
from .intervals import Discretization, build_envelopes

FORMAT_TAG = "minoverlap-conic/1"


@dataclass(frozen=True)
class ProgramInput:
    N: int
    T: int
    R: int
    h1: float = 0.0
    h2: float = 2.0
    p1: float = 0.0
    p2: float = 1.0
    q1: float = -1.0
    q2: float = 1.0

    def __post_init__(self):
        for name in ("N", "T"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.R < 0:
            raise ValueError("R must be >= 0")
        if self.R >= 1 and not self.T > self.R:
            raise ValueError(f"need T > R, got T={self.T}, R={self.R}")
        for lo, hi in (("h1", "h2"), ("p1", "p2"), ("q1", "q2")):
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"need {lo} <= {hi}, got {getattr(self, lo)} > {getattr(self, hi)}")

    @property
    def L(self) -> float:
        return 2.0 / self.N

    def with_box(self, **kw) -> "ProgramInput":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("N", "T", "R", "h1", "h2", "p1", "p2", "q1", "q2")}

    @classmethod
    def from_dict(cls, d: dict) -> "ProgramInput":
        if "h" in d:
            d = dict(d)
            d["h1"], d["h2"] = d.pop("h")
            d["p1"], d["p2"] = d.pop("p")
            d["q1"], d["q2"] = d.pop("q")
        return cls(**{k: d[k] for k in ("N", "T", "R", "h1", "h2", "p1", "p2", "q1", "q2")})


VALID_RANGES = dict(h1=0.0, h2=2.0, p1=0.0, p2=1.0, q1=-1.0, q2=1.0)


@dataclass(frozen=True)
class VariableLayout:
    """Named contiguous variable blocks; ``omega`` is always index 0."""

    blocks: tuple[tuple[str, int], ...]

    @property
    def offsets(self) -> dict[str, tuple[int, int]]:
        out, pos = {}, 0
        for name, n in self.blocks:
            out[name] = (pos, n)
            pos += n
        return out

    @property
    def size(self) -> int:
        return sum(n for _, n in self.blocks)

    def index(self, name: str, i: int = 1) -> int:
        """Global index of the i-th (1-based) entry of block ``name``."""
        start, n = self.offsets[name]
        if not 1 <= i <= n:
            raise IndexError(f"{name}[{i}] outside 1..{n}")
        return start + i - 1

    def slice(self, name: str) -> slice:
        start, n = self.offsets[name]
        return slice(start, start + n)

    def pack(self, **values) -> np.ndarray:
        x = np.zeros(self.size)
        for name, val in values.items():
            x[self.slice(name)] = val
        return x

    @classmethod
    def full(cls, N: int, T: int, R: int) -> "VariableLayout":
        return cls((("omega", 1), ("w", N), ("v", N), ("c", T), ("d", T), ("eps", R), ("delta", R)))

    @classmethod
    def lp(cls, N: int) -> "VariableLayout":
        return cls((("omega", 1), ("w", N)))


@dataclass(frozen=True)
class ConeBlock:
    """``count`` consecutive constraints of one family, ``size`` rows each."""

    family: str
    kind: str
    count: int
    size: int
    start: int

    @property
    def nrows(self) -> int:
        return self.count * self.size

    @property
    def stop(self) -> int:
        return self.start + self.nrows


@dataclass(frozen=True)
class ConeConstraint:
    family: str
    index: int
    kind: str
    rows: slice


@dataclass
class ConicProgram:
    layout: VariableLayout
    objective: np.ndarray
    F: sp.csr_matrix
    g: np.ndarray
    blocks: tuple[ConeBlock, ...]
    pivots: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return self.layout.size

    @property
    def num_rows(self) -> int:
        return self.F.shape[0]

    @property
    def constraints(self) -> Iterator[ConeConstraint]:
        for b in self.blocks:
            for i in range(b.count):
                s = b.start + i * b.size
                yield ConeConstraint(b.family, i + 1, b.kind, slice(s, s + b.size))

    @property
    def num_constraints(self) -> int:
        return sum(b.count for b in self.blocks)

    def block(self, family: str) -> ConeBlock:
        for b in self.blocks:
            if b.family == family:
                return b
        raise KeyError(family)

    def row_of(self, family: str, i: int = 1) -> int:
        b = self.block(family)
        if not 1 <= i <= b.count:
            raise IndexError(f"{family}[{i}] outside 1..{b.count}")
        return b.start + (i - 1) * b.size

    @property
    def input(self) -> ProgramInput | None:
        d = self.meta.get("input")
        return ProgramInput.from_dict(d) if d else None

    def with_input(self, inp: ProgramInput) -> "ConicProgram":
        """Same constraint matrix, offsets recomputed for a new parameter box."""
        if self.meta.get("kind") != "full":
            raise ValueError("only the full program is parameterised by a box")
        cur = self.input
        if (inp.N, inp.T, inp.R) != (cur.N, cur.T, cur.R):
            raise ValueError("N, T, R must match the built program")
        g = _full_offsets(self, inp)
        meta = dict(self.meta, input=inp.to_dict())
        return replace(self, g=g, meta=meta)

    def row_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_vars,):
            raise ValueError(f"expected {self.num_vars} variables, got shape {x.shape}")
        return self.F @ x + self.g


def quadratic_residuals(prog: ConicProgram, x) -> np.ndarray:
    """Slack of every constraint at x (nonnegative means satisfied).

    Linear rows give their affine value; cones give bound - norm.
    """
    r = prog.row_values(x)
    out = []
    for b in prog.blocks:
        block = r[b.start:b.stop].reshape(b.count, b.size)
        if b.kind == "linear":
            out.append(block[:, 0])
        else:
            out.append(block[:, 0] - np.linalg.norm(block[:, 1:], axis=1))
    return np.concatenate(out) if out else np.zeros(0)


def residual_labels(prog: ConicProgram) -> list[tuple[str, int]]:
    return [(c.family, c.index) for c in prog.constraints]


class _Builder:
    """Accumulates constraint rows in COO form."""

    def __init__(self, n: int):
        self.n = n
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.g: list[np.ndarray] = []
        self.blocks: list[ConeBlock] = []
        self.nrows = 0

    def add(self, family: str, kind: str, count: int, size: int, entries, offsets) -> None:
        """``entries`` is (local_row, col, val) arrays with local_row < count*size."""
        lr, cc, vv = (np.asarray(a) for a in entries)
        self.rows.append(lr.astype(np.int64) + self.nrows)
        self.cols.append(cc.astype(np.int64))
        self.vals.append(vv.astype(float))
        g = np.asarray(offsets, dtype=float)
        if g.shape != (count * size,):
            raise ValueError(f"{family}: offsets have shape {g.shape}, expected {(count * size,)}")
        self.g.append(g)
        self.blocks.append(ConeBlock(family, kind, count, size, self.nrows))
        self.nrows += count * size

    def finish(self) -> tuple[sp.csr_matrix, np.ndarray, tuple[ConeBlock, ...]]:
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, np.int64)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, np.int64)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        keep = vals != 0.0
        F = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(self.nrows, self.n)).tocsr()
        F.sum_duplicates()
        F.sort_indices()
        return F, np.concatenate(self.g), tuple(self.blocks)


def _dense_row(local_row: int, cols: np.ndarray, vals: np.ndarray):
    return np.full(len(cols), local_row), cols, vals


def _stack(parts):
    if not parts:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def _find_pivots(F: sp.csr_matrix, blocks, preferred: dict[int, int] | None = None) -> np.ndarray:
    n = F.shape[1]
    piv = np.full(n, -1, dtype=np.int64)
    if preferred:
        for j, r in preferred.items():
            piv[j] = r
    linear_rows = []
    for b in blocks:
        if b.kind == "linear":
            linear_rows.append(np.arange(b.start, b.stop))
    nnz = np.diff(F.indptr)
    for r in (np.concatenate(linear_rows) if linear_rows else []):
        if nnz[r] == 1:
            j = F.indices[F.indptr[r]]
            if piv[j] < 0:
                piv[j] = r
    return piv


def build_lp(N: int, R: int) -> ConicProgram:
    """Linear program for even M: variables Omega, w_1..w_N.

    Rows: Omega <= 1, w_j <= Omega, w_j >= 0, sum w = N/4 (two rows),
    sum alpha^-_{j,2m} w_j <= 0 for m = 1..R, L^3 sum (j-1)^2 w_j <= 1/3.
    """
    if N < 1 or R < 0:
        raise ValueError("need N >= 1 and R >= 0")
    layout = VariableLayout.lp(N)
    disc = Discretization(N)
    L = disc.L
    env = build_envelopes(disc, R)
    om = 0
    wj = np.arange(1, N + 1)
    j = np.arange(1, N + 1, dtype=float)
    b = _Builder(layout.size)

    b.add("obnd", "linear", 1, 1, ([0], [om], [-1.0]), [1.0])
    b.add("wbnd_1", "linear", N, 1,
          (np.concatenate([np.arange(N), np.arange(N)]), np.concatenate([np.zeros(N, int), wj]),
           np.concatenate([np.ones(N), -np.ones(N)])), np.zeros(N))
    b.add("wbnd_2", "linear", N, 1, (np.arange(N), wj, np.ones(N)), np.zeros(N))
    b.add("sum", "linear", 2, 1,
          _stack([_dense_row(0, wj, np.ones(N)), _dense_row(1, wj, -np.ones(N))]),
          [-N / 4.0, N / 4.0])
    parts = [_dense_row(m - 1, wj, -env.alpha_minus[:, 2 * m - 1]) for m in range(1, R + 1)]
    b.add("cos", "linear", R, 1, _stack(parts), np.zeros(R))
    b.add("mom", "linear", 1, 1, _dense_row(0, wj, -(L**3) * (j - 1) ** 2), [1.0 / 3.0])

    F, g, blocks = b.finish()
    obj = np.zeros(layout.size)
    obj[om] = 1.0
    piv = _find_pivots(F, blocks, preferred={0: 0})
    piv[wj] = blocks[2].start + np.arange(N)
    return ConicProgram(layout, obj, F, g, blocks, piv, meta={"kind": "lp", "N": N, "R": R})


def _full_offsets(prog: ConicProgram, inp: ProgramInput) -> np.ndarray:
    """Offsets g for the full program; the only place the box enters."""
    g = prog.g.copy()
    N = inp.N
    g[prog.row_of("mean")] = -inp.h1 * N / 2.0
    g[prog.row_of("mome")] = (2.0 / 3.0 + inp.h2**2 / 2.0) * N / 2.0
    g[prog.row_of("c1bnd", 1)] = -inp.p1
    g[prog.row_of("c1bnd", 2)] = inp.p2
    g[prog.row_of("d1bnd", 1)] = -inp.q1
    g[prog.row_of("d1bnd", 2)] = inp.q2
    if inp.R >= 1:
        g[prog.row_of("cosup")] = (N / 2.0) * (inp.p2**2 + max(inp.q1**2, inp.q2**2))
    return g


def a_form(layout: VariableLayout, m: int) -> tuple[np.ndarray, np.ndarray, float]:
    """(cols, coefficients, constant) with a_m = coeffs @ x[cols] + constant."""
    _, T = layout.offsets["c"]
    if m % 2 == 0:
        return np.array([layout.index("c", m // 2)]), np.array([0.5]), 0.0
    cols = np.concatenate([[layout.index("eps", (m + 1) // 2)], np.arange(T) + layout.offsets["c"][0]])
    vals = np.concatenate([[1.0], cos_weights(m, T)])
    return cols, vals, a_constant(m)


def b_form(layout: VariableLayout, m: int) -> tuple[np.ndarray, np.ndarray, float]:
    _, T = layout.offsets["d"]
    if m % 2 == 0:
        return np.array([layout.index("d", m // 2)]), np.array([0.5]), 0.0
    cols = np.concatenate([[layout.index("delta", (m + 1) // 2)], np.arange(T) + layout.offsets["d"][0]])
    vals = np.concatenate([[1.0], sin_weights(m, T)])
    return cols, vals, 0.0


def build_full(inp: ProgramInput, paper_compat: bool = False) -> ConicProgram:
    """Second-order cone form of the full program for the box in ``inp``.

    The quadratic cosine constraint
    ``F_m <= s a_m - 2 (a_m^2 + b_m^2)``, ``s = 4 sin(m pi/2)/(m pi)``,
    is rewritten as ``(a_m - s/4)^2 + b_m^2 <= t_m`` with ``t_m = s^2/16 - F_m/2``
    and then as ``||(a_m - s/4, b_m, (t_m - 1)/2)|| <= (t_m + 1)/2``.

    Mass, mean and moment rows are scaled by N/2 and the A_2 row by N.
    """
    N, T, R = inp.N, inp.T, inp.R
    layout = VariableLayout.full(N, T, R)
    disc = Discretization(N)
    L = disc.L
    env = build_envelopes(disc, max(R, 1))
    om = 0
    wc = np.arange(1, N + 1)
    vc = wc + N
    wv = np.concatenate([wc, vc])
    j = np.arange(1, N + 1, dtype=float)
    cc = layout.offsets["c"][0] + np.arange(T)
    dc = layout.offsets["d"][0] + np.arange(T)
    b = _Builder(layout.size)
    ar = np.arange

    # 0 <= w_j, v_j <= Omega <= 1
    b.add("obnd", "linear", 1, 1, ([0], [om], [-1.0]), [1.0])
    for fam, cols in (("wbnd", wc), ("vbnd", vc)):
        b.add(f"{fam}_1", "linear", N, 1,
              (np.concatenate([ar(N), ar(N)]), np.concatenate([np.zeros(N, int), cols]),
               np.concatenate([np.ones(N), -np.ones(N)])), np.zeros(N))
        b.add(f"{fam}_2", "linear", N, 1, (ar(N), cols, np.ones(N)), np.zeros(N))

    ones2 = np.ones(2 * N)
    b.add("sum", "linear", 2, 1,
          _stack([_dense_row(0, wv, ones2), _dense_row(1, wv, -ones2)]), [-N / 2.0, N / 2.0])
    b.add("mean", "linear", 1, 1,
          _dense_row(0, wv, L * np.concatenate([j, -(j - 1)])), [0.0])
    b.add("mome", "linear", 1, 1,
          _dense_row(0, wv, -(L**2) * np.concatenate([(j - 1) ** 2, (j - 1) ** 2])), [0.0])

    if R >= 1:
        parts, offs = [], []
        for m in range(1, 2 * R + 1):
            s = 4.0 * sine_factor(m) / (m * math.pi)
            fcos = 0.5 * L * np.concatenate([env.alpha_minus[:, m - 1]] * 2)
            # t = s^2/16 - F/2 ; rows: (t+1)/2, a - s/4, b, (t-1)/2
            base = 4 * (m - 1)
            parts.append(_dense_row(base + 0, wv, -0.25 * fcos))
            parts.append(_dense_row(base + 3, wv, -0.25 * fcos))
            acols, avals, aconst = a_form(layout, m)
            parts.append(_dense_row(base + 1, acols, avals))
            bcols, bvals, _ = b_form(layout, m)
            parts.append(_dense_row(base + 2, bcols, bvals))
            t0 = s * s / 16.0
            offs.extend([(t0 + 1.0) / 2.0, aconst - s / 4.0, 0.0, (t0 - 1.0) / 2.0])
        b.add("coscone", "soc", 2 * R, 4, _stack(parts), offs)

        lower, upper = [], []
        for m in range(1, 2 * R + 1):
            bm, bp = env.beta_minus[:, m - 1], env.beta_plus[:, m - 1]
            fs_lb = 0.5 * L * np.concatenate([bm, -bp])
            fs_ub = 0.5 * L * np.concatenate([bp, -bm])
            fac = B_factor(m, paper_compat)
            bcols, bvals, _ = b_form(layout, m)
            # B_m - Fsin_LB >= 0 and Fsin_UB - B_m >= 0
            lower.append(_dense_row(m - 1, wv, -fs_lb))
            upper.append(_dense_row(m - 1, wv, fs_ub))
            if fac != 0.0:
                lower.append(_dense_row(m - 1, bcols, fac * bvals))
                upper.append(_dense_row(m - 1, bcols, -fac * bvals))
        b.add("sin_lower", "linear", 2 * R, 1, _stack(lower), np.zeros(2 * R))
        b.add("sin_upper", "linear", 2 * R, 1, _stack(upper), np.zeros(2 * R))

        odd = [2 * i - 1 for i in range(1, R + 1)]
        ep_b = np.array([tail_bound_cos(m, T) for m in odd])
        de_b = np.array([tail_bound_sin(m, T) for m in odd])
        for fam, blk, bound in (("ep", "eps", ep_b), ("del", "delta", de_b)):
            cols = layout.offsets[blk][0] + ar(R)
            b.add(f"{fam}_1", "linear", R, 1, (ar(R), cols, np.ones(R)), bound)
            b.add(f"{fam}_2", "linear", R, 1, (ar(R), cols, -np.ones(R)), bound)

    two_pi = 2.0 / math.pi
    for fam, cols in (("ckbnd", cc), ("dkbnd", dc)):
        b.add(f"{fam}_1", "linear", T, 1, (ar(T), cols, np.ones(T)), np.full(T, two_pi))
        b.add(f"{fam}_2", "linear", T, 1, (ar(T), cols, -np.ones(T)), np.full(T, two_pi))

    b.add("par", "soc", 1, 2 * T + 1,
          (np.arange(1, 2 * T + 1), np.concatenate([cc, dc]), np.ones(2 * T)),
          np.concatenate([[1.0 / math.sqrt(2.0)], np.zeros(2 * T)]))

    c1, d1 = layout.index("c", 1), layout.index("d", 1)
    b.add("c1bnd", "linear", 2, 1, ([0, 1], [c1, c1], [1.0, -1.0]), [0.0, 0.0])
    b.add("d1bnd", "linear", 2, 1, ([0, 1], [d1, d1], [1.0, -1.0]), [0.0, 0.0])

    if R >= 1:
        b.add("cosup", "linear", 1, 1,
              _dense_row(0, wv, np.concatenate([env.alpha_plus[:, 1]] * 2)), [0.0])

    F, g, blocks = b.finish()
    obj = np.zeros(layout.size)
    obj[om] = 1.0
    prog = ConicProgram(layout, obj, F, g, blocks, np.zeros(0, np.int64),
                        meta={"kind": "full", "paper_compat": bool(paper_compat),
                              "input": inp.to_dict()})
    pref = {0: prog.row_of("obnd")}
    for fam, blk in (("wbnd_2", "w"), ("vbnd_2", "v"), ("ckbnd_2", "c"), ("dkbnd_2", "d"),
                     ("ep_2", "eps"), ("del_2", "delta")):
        start, n = layout.offsets[blk]
        if n == 0:
            continue
        r0 = prog.block(fam).start
        for i in range(n):
            pref[start + i] = r0 + i
    prog.pivots = _find_pivots(F, blocks, pref)
    prog.g = _full_offsets(prog, inp)
    return prog


def assignment_vector(prog: ConicProgram, fa) -> np.ndarray:
    """Primal point for a :class:`~minoverlap.oracle.FeasibleAssignment`."""
    return prog.layout.pack(omega=fa.Omega, w=fa.avg.w, v=fa.avg.v, c=fa.ft.c, d=fa.ft.d,
                            eps=fa.eps, delta=fa.delta)


def fullcos_quadratic_slack(prog: ConicProgram, x, m: int) -> float:
    """Slack of the quadratic cosine constraint for frequency m, evaluated
    directly from the coefficient formulas rather than from the cone rows."""
    from .fourier import A_coeff, FourierTruncation, a_coeff, b_coeff
    from .intervals import AverageVector, cos_bracket

    inp = prog.input
    lay = prog.layout
    ft = FourierTruncation(x[lay.slice("c")], x[lay.slice("d")])
    eps, delta = x[lay.slice("eps")], x[lay.slice("delta")]
    i = (m + 1) // 2
    a = a_coeff(m, ft, eps[i - 1] if m % 2 else 0.0)
    bb = b_coeff(m, ft, delta[i - 1] if m % 2 else 0.0)
    env = build_envelopes(Discretization(inp.N), inp.R)
    lo, _ = cos_bracket(AverageVector(x[lay.slice("w")], x[lay.slice("v")]), env, m, inp.L)
    return A_coeff(m, a, bb) - lo


# -- exchange format --------------------------------------------------------

def _hex(a) -> list[str]:
    return [float(v).hex() for v in np.asarray(a, dtype=float).ravel()]


def _unhex(a) -> np.ndarray:
    return np.array([float.fromhex(s) for s in a], dtype=float)


def program_to_dict(prog: ConicProgram) -> dict:
    F = prog.F.tocsr()
    nz = np.flatnonzero(prog.objective)
    return {
        "format": FORMAT_TAG,
        "num_vars": prog.num_vars,
        "layout": [[name, n] for name, n in prog.layout.blocks],
        "objective": {"index": nz.tolist(), "value": _hex(prog.objective[nz])},
        "blocks": [[b.family, b.kind, b.count, b.size, b.start] for b in prog.blocks],
        "rows": {
            "shape": list(F.shape),
            "indptr": F.indptr.tolist(),
            "indices": F.indices.tolist(),
            "data": _hex(F.data),
        },
        "offsets": _hex(prog.g),
        "pivots": prog.pivots.tolist(),
        "meta": prog.meta,
    }


def program_from_dict(d: dict) -> ConicProgram:
    if d.get("format") != FORMAT_TAG:
        raise ValueError(f"unknown program format {d.get('format')!r}")
    layout = VariableLayout(tuple((name, int(n)) for name, n in d["layout"]))
    obj = np.zeros(int(d["num_vars"]))
    obj[np.array(d["objective"]["index"], dtype=np.int64)] = _unhex(d["objective"]["value"])
    r = d["rows"]
    F = sp.csr_matrix((_unhex(r["data"]), np.array(r["indices"], dtype=np.int64),
                       np.array(r["indptr"], dtype=np.int64)), shape=tuple(r["shape"]))
    blocks = tuple(ConeBlock(f, k, int(c), int(s), int(st)) for f, k, c, s, st in d["blocks"])
    return ConicProgram(layout, obj, F, _unhex(d["offsets"]), blocks,
                        np.array(d["pivots"], dtype=np.int64), meta=d["meta"])


def save_program(prog: ConicProgram, path) -> None:
    Path(path).write_text(json.dumps(program_to_dict(prog)) + "\n")


def load_program(path) -> ConicProgram:
    return program_from_dict(json.loads(Path(path).read_text()))
