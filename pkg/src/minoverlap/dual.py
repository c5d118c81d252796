"""Conic dual of a :class:`ConicProgram` and elimination of its equalities.

For ``min phi @ x  s.t.  F_i x + g_i in K_i`` the dual is

    maximize  -sum_i g_i @ u_i   s.t.  sum_i F_i^T u_i = phi,  u_i in K_i,

with one multiplier block ``u_i`` per constraint (a scalar ``y`` for linear
rows, ``(y, z)`` for cones).  Every primal variable ``j`` owns a pivot row
whose only nonzero sits in column ``j``; solving equation ``j`` for that
row's multiplier removes all equalities and leaves the other multipliers
free.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .programs import ConicProgram, ProgramInput


class PivotError(ValueError):
    pass


@dataclass
class DualProgram:
    source: ConicProgram
    pivot_map: np.ndarray | None = None
    free_rows: np.ndarray | None = None
    _G: sp.csc_matrix | None = field(default=None, repr=False)
    _pcoef: np.ndarray | None = field(default=None, repr=False)

    @property
    def eliminated(self) -> bool:
        return self.pivot_map is not None

    @property
    def num_free(self) -> int:
        if self.eliminated:
            return len(self.free_rows)
        return self.source.num_rows

    @property
    def num_derived(self) -> int:
        return len(self.pivot_map) if self.eliminated else 0

    def derived(self, free: np.ndarray) -> np.ndarray:
        """Eliminated multipliers, entry j belonging to primal variable j.

        ``(phi_j - sum_{r != p(j)} F[r, j] u_r) / F[p(j), j]``, accumulated
        over rows in ascending order.
        """
        self._require_elim()
        free = np.asarray(free, dtype=float)
        if free.shape != (self.num_free,):
            raise ValueError(f"expected {self.num_free} free multipliers, got shape {free.shape}")
        G = self._G
        out = np.empty(G.shape[1])
        phi = self.source.objective
        for j in range(G.shape[1]):
            a, b = G.indptr[j], G.indptr[j + 1]
            s = phi[j]
            for v in (G.data[a:b] * free[G.indices[a:b]]).tolist():
                s -= v
            out[j] = s / self._pcoef[j]
        return out

    def derived_fast(self, free: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`derived` (summation order not fixed)."""
        self._require_elim()
        return (self.source.objective - self._G.T @ free) / self._pcoef

    def expand(self, free: np.ndarray, fast: bool = False) -> np.ndarray:
        """Full multiplier vector, one entry per primal row."""
        self._require_elim()
        u = np.empty(self.source.num_rows)
        u[self.free_rows] = free
        u[self.pivot_map] = self.derived_fast(free) if fast else self.derived(free)
        return u

    def restrict(self, u: np.ndarray) -> np.ndarray:
        self._require_elim()
        return np.asarray(u, dtype=float)[self.free_rows]

    def derived_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """Term count and column pattern sizes for each derived expression."""
        self._require_elim()
        return np.diff(self._G.indptr) + 1, self._pcoef

    def _require_elim(self):
        if not self.eliminated:
            raise ValueError("dual has not been eliminated")


@dataclass
class DualPoint:
    """Free multipliers of an eliminated dual."""

    free: np.ndarray

    def __post_init__(self):
        self.free = np.asarray(self.free, dtype=float)

    def by_family(self, dual: DualProgram) -> dict[str, list[float]]:
        """Full multipliers grouped by constraint family (derived included)."""
        u = dual.expand(self.free)
        return {b.family: u[b.start:b.stop].tolist() for b in dual.source.blocks}

    def multiplier(self, dual: DualProgram, family: str, i: int = 1) -> float:
        """Value of the (first-row) multiplier of constraint ``family[i]``."""
        r = dual.source.row_of(family, i)
        pos = np.searchsorted(dual.free_rows, r)
        if pos < len(dual.free_rows) and dual.free_rows[pos] == r:
            return float(self.free[pos])
        j = int(np.flatnonzero(dual.pivot_map == r)[0])
        return float(dual.derived(self.free)[j])


def dualize(primal: ConicProgram) -> DualProgram:
    return DualProgram(source=primal)


def eliminate(dual: DualProgram) -> DualProgram:
    prog = dual.source
    piv = np.asarray(prog.pivots, dtype=np.int64)
    n = prog.num_vars
    if piv.shape != (n,) or (piv < 0).any():
        missing = np.flatnonzero(piv < 0) if piv.shape == (n,) else np.arange(n)
        raise PivotError(f"no pivot row for variables {missing[:10].tolist()}")
    if len(np.unique(piv)) != n:
        raise PivotError("pivot rows must be distinct")
    F = prog.F.tocsr()
    nnz = np.diff(F.indptr)
    if (nnz[piv] != 1).any() or (F.indices[F.indptr[piv]] != np.arange(n)).any():
        raise PivotError("each pivot row must have a single nonzero in its own column")
    is_linear = np.zeros(prog.num_rows, dtype=bool)
    for b in prog.blocks:
        if b.kind == "linear":
            is_linear[b.start:b.stop] = True
    if not is_linear[piv].all():
        raise PivotError("pivot rows must be linear inequalities")
    pcoef = F.data[F.indptr[piv]]
    mask = np.ones(prog.num_rows, dtype=bool)
    mask[piv] = False
    free_rows = np.flatnonzero(mask)
    G = F[free_rows].tocsc()
    G.sort_indices()
    return DualProgram(source=prog, pivot_map=piv, free_rows=free_rows, _G=G, _pcoef=pcoef)


def build_dual(primal: ConicProgram) -> DualProgram:
    return eliminate(dualize(primal))


@dataclass
class DualEvaluation:
    objective: float
    margins: np.ndarray
    labels: list
    derived: np.ndarray


def _program_for(dual: DualProgram, inp: ProgramInput | None) -> ConicProgram:
    if inp is None:
        return dual.source
    cur = dual.source.input
    if cur is not None and inp == cur:
        return dual.source
    return dual.source.with_input(inp)


def dual_objective(g: np.ndarray, u: np.ndarray) -> float:
    total = 0.0
    for v in (g * u).tolist():
        total -= v
    return total


def constraint_margins(dual: DualProgram, u: np.ndarray) -> tuple[np.ndarray, list]:
    """Margins of the multiplier constraints, in a fixed order.

    Derived multipliers first (``ye >= 0``, one per primal variable), then
    one entry per primal constraint: ``y`` for free linear rows and
    ``y^2 - |z|^2`` for cones.  Pivot rows appear only in the first group.
    """
    prog = dual.source
    margins, labels = [], []
    if dual.eliminated:
        margins.append(u[dual.pivot_map])
        rowlab = _row_labels(prog)
        labels.extend(("derived",) + rowlab[r] for r in dual.pivot_map)
        pivset = np.zeros(prog.num_rows, dtype=bool)
        pivset[dual.pivot_map] = True
    else:
        pivset = np.zeros(prog.num_rows, dtype=bool)
    for c in prog.constraints:
        if c.kind == "linear":
            r = c.rows.start
            if pivset[r]:
                continue
            margins.append(np.array([u[r]]))
        else:
            blk = u[c.rows]
            s = blk[0] * blk[0]
            for v in (blk[1:] * blk[1:]).tolist():
                s -= v
            if blk[0] < 0:
                # y < 0 is outside the cone whatever z is
                s = -abs(s) - abs(blk[0])
            margins.append(np.array([s]))
        labels.append((c.kind, c.family, c.index))
    return np.concatenate(margins) if margins else np.zeros(0), labels


def _row_labels(prog: ConicProgram) -> list[tuple[str, int]]:
    out = [None] * prog.num_rows
    for c in prog.constraints:
        for r in range(c.rows.start, c.rows.stop):
            out[r] = (c.family, c.index)
    return out


def eval(dual: DualProgram, pt: DualPoint, inp: ProgramInput | None = None) -> DualEvaluation:
    """Objective and margins of a dual point; the box only enters the objective."""
    free = np.asarray(pt.free if isinstance(pt, DualPoint) else pt, dtype=float)
    prog = _program_for(dual, inp)
    if dual.eliminated:
        u = dual.expand(free)
        der = u[dual.pivot_map]
    else:
        if free.shape != (prog.num_rows,):
            raise ValueError(f"expected {prog.num_rows} multipliers, got shape {free.shape}")
        u, der = free, np.zeros(0)
    margins, labels = constraint_margins(dual, u)
    return DualEvaluation(dual_objective(prog.g, u), margins, labels, der)


def equality_residual(dual: DualProgram, u: np.ndarray) -> np.ndarray:
    """``F^T u - phi`` for a full multiplier vector."""
    return dual.source.F.T @ np.asarray(u, dtype=float) - dual.source.objective


def named_multipliers(dual: DualProgram, pt: DualPoint) -> dict[str, float]:
    """Multipliers of the rows whose offsets carry the box parameters."""
    prog = dual.source
    if prog.meta.get("kind") != "full":
        raise ValueError("named multipliers exist only for the full program")
    u = dual.expand(pt.free)
    out = {
        "mean": u[prog.row_of("mean")],
        "mome": u[prog.row_of("mome")],
        "c1bnd_1": u[prog.row_of("c1bnd", 1)],
        "c1bnd_2": u[prog.row_of("c1bnd", 2)],
        "d1bnd_1": u[prog.row_of("d1bnd", 1)],
        "d1bnd_2": u[prog.row_of("d1bnd", 2)],
    }
    out["cosup"] = u[prog.row_of("cosup")] if prog.input.R >= 1 else 0.0
    return {k: float(v) for k, v in out.items()}
