"""Operator-splitting solver for ConicPrograms and interior polishing of
dual points.

The solver runs ADMM on the homogeneous self-dual embedding of

    minimize c @ x  s.t.  A x + s = b,  s in K,

with ``A = -F``, ``b = g``, ``c = objective``, so that its dual variable is
exactly the multiplier vector of :mod:`minoverlap.dual`.  One sparse LU
factorisation of the quasi-definite matrix ``[[I, A^T], [A, -I]]`` is
reused in every iteration; all operations run in a fixed order, so results
are reproducible bit for bit.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

from .certify import verify
from .dual import DualPoint, DualProgram, build_dual
from .programs import ConicProgram

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 100_000
    tol: float = 1e-9
    alpha: float = 1.6
    scale_iters: int = 25
    check_every: int = 25
    time_limit: float | None = None
    verbose: bool = False

    def to_dict(self) -> dict:
        return {"max_iters": self.max_iters, "tol": self.tol, "alpha": self.alpha,
                "scale_iters": self.scale_iters, "check_every": self.check_every}


@dataclass
class Solution:
    status: str
    x: np.ndarray
    multipliers: np.ndarray
    slack: np.ndarray
    primal_objective: float
    dual_objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    seconds: float
    options: dict = field(default_factory=dict)
    dual_point: DualPoint | None = None

    @property
    def gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective)

    def meta(self) -> dict:
        return {"status": self.status, "iterations": self.iterations,
                "primal_objective": self.primal_objective, "dual_objective": self.dual_objective,
                "gap": self.gap, "primal_residual": self.primal_residual,
                "dual_residual": self.dual_residual, "options": self.options}


class SolverError(RuntimeError):
    pass


class PolishError(RuntimeError):
    pass


# -- cones --------------------------------------------------------------------

class _Cones:
    def __init__(self, prog: ConicProgram):
        lin = []
        self.soc: list[tuple[int, int, int]] = []
        for b in prog.blocks:
            if b.kind == "linear":
                lin.append(np.arange(b.start, b.stop))
            else:
                self.soc.append((b.start, b.count, b.size))
        self.linear = np.concatenate(lin) if lin else np.zeros(0, np.int64)
        self.m = prog.num_rows

    def project(self, y: np.ndarray) -> np.ndarray:
        out = y.copy()
        out[self.linear] = np.maximum(y[self.linear], 0.0)
        for start, count, size in self.soc:
            blk = out[start:start + count * size].reshape(count, size)
            _project_soc_rows(blk)
        return out

    def block_groups(self) -> list[np.ndarray]:
        """Row groups that must share one scaling factor."""
        groups = []
        for start, count, size in self.soc:
            for i in range(count):
                groups.append(np.arange(start + i * size, start + (i + 1) * size))
        return groups


def _project_soc_rows(blk: np.ndarray) -> None:
    t = blk[:, 0].copy()
    nz = np.linalg.norm(blk[:, 1:], axis=1)
    inside = nz <= t
    zero = nz <= -t
    mid = ~(inside | zero)
    blk[zero] = 0.0
    if mid.any():
        a = 0.5 * (nz[mid] + t[mid])
        blk[mid, 1:] *= (a / nz[mid])[:, None]
        blk[mid, 0] = a


def project_soc(v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=float)[None, :]
    _project_soc_rows(out)
    return out[0]


# -- scaling ------------------------------------------------------------------

def _equilibrate(A: sp.csr_matrix, cones: _Cones, iters: int) -> tuple[np.ndarray, np.ndarray]:
    m, n = A.shape
    D = np.ones(m)
    E = np.ones(n)
    groups = cones.block_groups()
    absA = abs(A).tocsr()
    for _ in range(iters):
        S = sp.diags(D) @ absA @ sp.diags(E)
        rn = np.sqrt(np.asarray(S.max(axis=1).todense()).ravel())
        cn = np.sqrt(np.asarray(S.max(axis=0).todense()).ravel())
        for g in groups:
            rn[g] = rn[g].max()
        rn[rn == 0] = 1.0
        cn[cn == 0] = 1.0
        D /= rn
        E /= cn
    return D, E


# -- main loop ----------------------------------------------------------------

def solve(prog: ConicProgram, opts: SolverOptions | None = None, dual: DualProgram | None = None) -> Solution:
    """ADMM on the self-dual embedding; returns primal and dual candidates."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    cones = _Cones(prog)
    A0 = (-prog.F).tocsr()
    b0 = prog.g.astype(float)
    c0 = prog.objective.astype(float)
    m, n = A0.shape

    D, E = _equilibrate(A0, cones, opts.scale_iters)
    A = (sp.diags(D) @ A0 @ sp.diags(E)).tocsr()
    b = D * b0
    c = E * c0
    sb = 1.0 / max(np.linalg.norm(b), 1e-12)
    sc = 1.0 / max(np.linalg.norm(c), 1e-12)
    b = b * sb
    c = c * sc
    AT = A.T.tocsr()

    K = sp.bmat([[sp.identity(n), AT], [A, -sp.identity(m)]], format="csc")
    lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})

    def solve_M(w1x, w1y):
        # [[I, A^T], [-A, I]] [x; y] = [w1x; w1y]
        sol = lu.solve(np.concatenate([w1x, -w1y]))
        return sol[:n], sol[n:]

    hx, hy = c, b
    Mhx, Mhy = solve_M(hx, hy)
    denom = 1.0 + hx @ Mhx + hy @ Mhy

    x = np.zeros(n)
    y = np.zeros(m)
    tau = 1.0
    r = np.zeros(n)
    s = np.zeros(m)
    kappa = 1.0
    alpha = opts.alpha

    nb0 = np.linalg.norm(b0)
    nc0 = np.linalg.norm(c0)
    status = "max-iter"
    best = None
    it = 0
    pres = dres = math.inf
    for it in range(1, opts.max_iters + 1):
        wx, wy, wt = x + r, y + s, tau + kappa
        px, py = solve_M(wx, wy)
        tt = (wt + hx @ px + hy @ py) / denom
        ux = px - tt * Mhx
        uy = py - tt * Mhy
        # over-relaxation
        ux = alpha * ux + (1 - alpha) * x
        uy = alpha * uy + (1 - alpha) * y
        ut = alpha * tt + (1 - alpha) * tau

        x_new = ux - r
        y_new = cones.project(uy - s)
        tau_new = max(ut - kappa, 0.0)
        r = r - ux + x_new
        s = s - uy + y_new
        kappa = kappa - ut + tau_new
        x, y, tau = x_new, y_new, tau_new

        if it % opts.check_every and it != opts.max_iters:
            continue
        if tau > 1e-12:
            xs = E * x / (tau * sb)
            ys = D * y / (tau * sc)
            ss = s / (D * tau * sb)
            pr = A0 @ xs + ss - b0
            dr = A0.T @ ys + c0
            pobj = float(c0 @ xs)
            dobj = float(-(b0 @ ys))
            pres = np.linalg.norm(pr) / (1 + nb0)
            dres = np.linalg.norm(dr) / (1 + nc0)
            gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
            best = (xs, ys, ss, pobj, dobj, pres, dres)
            if opts.verbose and it % (opts.check_every * 40) == 0:
                log.info("it %d pobj %.12g dobj %.12g pres %.2e dres %.2e gap %.2e",
                         it, pobj, dobj, pres, dres, gap)
            if pres <= opts.tol and dres <= opts.tol and gap <= opts.tol:
                status = "optimal"
                break
        else:
            # certificates of infeasibility
            yy = D * y
            bty = float(b0 @ yy)
            if bty < 0 and np.linalg.norm(A0.T @ yy) <= opts.tol * abs(bty):
                status = "infeasible-detected"
                break
            xx = E * x
            ctx = float(c0 @ xx)
            if ctx < 0 and np.linalg.norm(A0 @ xx + s / D) <= opts.tol * abs(ctx):
                status = "infeasible-detected"
                break
        if opts.time_limit is not None and time.perf_counter() - t0 > opts.time_limit:
            break

    if best is None:
        xs, ys, ss = np.zeros(n), np.zeros(m), np.zeros(m)
        pobj = dobj = math.nan
        if status != "infeasible-detected":
            status = "max-iter"
    else:
        xs, ys, ss, pobj, dobj, pres, dres = best
        if status == "infeasible-detected":
            pass
    sol = Solution(status, xs, ys, ss, pobj, dobj, it, float(pres), float(dres),
                   time.perf_counter() - t0, opts.to_dict())
    if dual is None and status != "infeasible-detected":
        try:
            dual = build_dual(prog)
        except ValueError:
            dual = None
    if dual is not None and dual.eliminated:
        sol.dual_point = DualPoint(dual.restrict(ys))
    return sol


# -- polishing ----------------------------------------------------------------

@dataclass
class PolishResult:
    point: DualPoint
    theta: float
    objective_before: float
    objective_after: float
    binding: tuple | None
    method: str


_HIGHS_TIGHT = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass
class _LinData:
    Ad: sp.csr_matrix      # derived = bd - Ad @ y
    bd: np.ndarray
    lin_idx: np.ndarray    # free linear multipliers
    heads: np.ndarray      # cone bound entries
    tails: np.ndarray      # cone norm entries
    cones: list            # (head, tail index array) per cone


def _lin_data(dual: DualProgram) -> _LinData:
    prog = dual.source
    nf = dual.num_free
    row_free = np.full(prog.num_rows, -1, dtype=np.int64)
    row_free[dual.free_rows] = np.arange(nf)
    Ad = (sp.diags(1.0 / dual._pcoef) @ dual._G.T).tocsr()
    bd = prog.objective / dual._pcoef
    pivset = np.zeros(prog.num_rows, dtype=bool)
    pivset[dual.pivot_map] = True
    lin_idx, heads, tails, cones = [], [], [], []
    for c in prog.constraints:
        if c.kind == "linear":
            if not pivset[c.rows.start]:
                lin_idx.append(row_free[c.rows.start])
        else:
            t = row_free[c.rows.start + 1:c.rows.stop]
            heads.append(row_free[c.rows.start])
            tails.extend(t.tolist())
            cones.append((row_free[c.rows.start], t))
    as_int = lambda a: np.array(a, dtype=np.int64)
    return _LinData(Ad, bd, as_int(lin_idx), as_int(heads), as_int(tails), cones)


def anchor_lp(dual: DualProgram, tails: np.ndarray | None = None, scale: float = 1.0,
              margin_fracs=(1e-12, 1e-10, 1e-9, 1e-7, 1e-5),
              lp_scale: float = 1e3, accept=None, row_floor: np.ndarray | None = None
              ) -> tuple[np.ndarray, float]:
    """Best strictly feasible point with the cone tails held fixed.

    The cone norm entries are frozen at ``tails`` (zero by default), which
    leaves a linear program in the free linear multipliers and cone bounds:
    maximise the dual objective subject to every margin (derived ``ye``,
    free ``y``, cone ``y - |z|``) being at least ``mu``.  The smallest
    ``mu = frac * scale`` whose solution is verifiably interior (and passes
    ``accept`` when given) is used; ``row_floor`` adds a per-row extra margin
    (derived rows first, then free linear rows, then cone bounds).
    Returns (point, mu / 2).
    """
    prog = dual.source
    nf = dual.num_free
    ld = _lin_data(dual)
    tail_vals = np.zeros(len(ld.tails)) if tails is None else np.asarray(tails, dtype=float)
    znorm = np.zeros(nf)
    fixed = np.zeros(nf)
    fixed[ld.tails] = tail_vals
    for h, t in ld.cones:
        znorm[h] = np.linalg.norm(fixed[t])
    # unknowns: free multipliers except tails, plus the margin s
    var = np.ones(nf, dtype=bool)
    var[ld.tails] = False
    vidx = np.flatnonzero(var)
    nv = len(vidx)
    Ad_v = ld.Ad[:, vidx]
    bd_fixed = ld.bd - ld.Ad[:, ld.tails] @ tail_vals if len(ld.tails) else ld.bd
    pos = np.full(nf, -1, dtype=np.int64)
    pos[vidx] = np.arange(nv)
    nd = Ad_v.shape[0]
    heads_all = np.concatenate([ld.lin_idx, ld.heads])
    k = len(heads_all)
    rows = [sp.hstack([Ad_v, sp.csr_matrix(np.ones((nd, 1)))])]
    rhs = [bd_fixed]
    if k:
        sel = sp.csr_matrix((-np.ones(k), (np.arange(k), pos[heads_all])), shape=(k, nv))
        rows.append(sp.hstack([sel, sp.csr_matrix(np.ones((k, 1)))]))
        rhs.append(-znorm[heads_all])
    A_ub = sp.vstack(rows).tocsc()
    b_ub = np.concatenate(rhs)
    ub = 10.0 * scale + 2.0 * float(znorm.max(initial=0.0))
    bounds = np.zeros((nv + 1, 2))
    bounds[:, 1] = ub
    bounds[nv] = (None, scale)
    cost = np.zeros(nv + 1)
    cost[nv] = -1.0
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0 or -res.fun <= 0:
        raise PolishError(f"no strictly feasible anchor with these cone tails ({res.message})")
    s_star = -res.fun

    def assemble(xv):
        y = fixed.copy()
        y[vidx] = xv
        return y

    best = (assemble(res.x[:nv]), 0.5 * s_star)
    g_free = prog.g[dual.free_rows]
    gp = prog.g[dual.pivot_map]
    # objective = -g_free @ y - gp @ (bd - Ad y) ; minimise (g_free - Ad^T gp) @ y
    lin_obj = (g_free - ld.Ad.T @ gp)[vidx]
    # with mu fixed, solve in y' = S y so that the absolute feasibility
    # tolerance of the LP solver is S times finer in the original units
    S = lp_scale / scale
    A_mu = A_ub[:, :nv].tocsc()
    extra = np.zeros(len(b_ub)) if row_floor is None else np.asarray(row_floor, dtype=float)
    for frac in margin_fracs:
        mu = min(0.5 * s_star, frac * scale)
        res2 = linprog(lin_obj, A_ub=A_mu, b_ub=S * (b_ub - mu - extra), bounds=S * bounds[:nv],
                       method="highs", options=_HIGHS_TIGHT)
        if res2.status == 0:
            y = assemble(res2.x / S)
            if _row_margins(dual, y).min() >= 0.5 * mu and (accept is None or accept(y)):
                return y, 0.5 * mu
    return best


def interior_anchor(dual: DualProgram, scale: float = 1.0, accept=None) -> tuple[np.ndarray, float]:
    """Strictly feasible point with all cone tails zero."""
    return anchor_lp(dual, None, scale, accept=accept)


def _row_margins(dual: DualProgram, free: np.ndarray) -> np.ndarray:
    """Margins in linear/concave form: derived values, free linear y,
    cone y - |z| (same order as :func:`minoverlap.dual.constraint_margins`)."""
    prog = dual.source
    u = dual.expand(free, fast=True)
    out = [u[dual.pivot_map]]
    pivset = np.zeros(prog.num_rows, dtype=bool)
    pivset[dual.pivot_map] = True
    for c in prog.constraints:
        if c.kind == "linear":
            if not pivset[c.rows.start]:
                out.append(u[c.rows.start:c.rows.start + 1])
        else:
            blk = u[c.rows]
            out.append(np.array([blk[0] - np.linalg.norm(blk[1:])]))
    return np.concatenate(out)


def _targets(rep, kappa: float, floor: float) -> np.ndarray:
    return np.maximum(kappa * rep.error_bound, max(floor, np.finfo(float).tiny))


def _meets(rep, kappa, floor) -> bool:
    return rep.ok and bool((rep.margin >= _targets(rep, kappa, floor)).all())


def _lp_row_floor(dual, rep, y, ld: _LinData, factor: float, floor: float) -> np.ndarray:
    """Margin floors for the repair LP rows, estimated from error bounds at y."""
    nd = dual.num_derived
    kinds = np.array([lab[0] for lab in rep.labels[nd:]])
    eb = rep.error_bound
    lin_part = np.maximum(factor * eb[nd:][kinds == "linear"], floor)
    cone_b = eb[nd:][kinds == "soc"]
    heads = np.maximum(y[ld.heads], 1e-6)
    # a target t on y^2 - |z|^2 needs about t / y on y - |z|
    cone_part = np.maximum(factor * cone_b, floor) / heads if len(heads) else np.zeros(0)
    return np.concatenate([np.maximum(factor * eb[:nd], floor), lin_part, cone_part])


def _project_point(dual: DualProgram, free: np.ndarray, shrink: float) -> np.ndarray:
    ld = _lin_data(dual)
    y = free.copy()
    y[ld.lin_idx] = np.maximum(y[ld.lin_idx], 0.0)
    for h, t in ld.cones:
        blk = project_soc(np.concatenate([[y[h]], y[t]]))
        y[h] = blk[0]
        y[t] = blk[1:] * (1.0 - shrink)
    return y


def polish(dual: DualProgram, pt: DualPoint, target_margin: float | None = None, kappa: float = 2.0,
           shrink: float = 1e-9, max_rounds: int = 60) -> PolishResult:
    """Move a nearly feasible dual point strictly inside the dual cone.

    Every constraint must end with margin at least
    ``max(kappa * error_bound, target_margin)``.  A point that already
    qualifies is returned unchanged.  Otherwise the cone blocks are
    projected and their norm parts shrunk by ``1 - shrink``; with those
    held fixed the linear multipliers and cone bounds are re-optimised
    (a linear program).  If that fails the point is pulled toward a
    strictly feasible anchor by the smallest sufficient ``theta``.
    """
    free = np.asarray(pt.free, dtype=float)
    if free.shape != (dual.num_free,):
        raise ValueError("dual point has the wrong dimension")
    ld = _lin_data(dual)
    scale = max(1.0, float(np.abs(free).max(initial=0.0)))
    if len(ld.lin_idx) and free[ld.lin_idx].min(initial=0.0) < -1e-6 * scale:
        raise PolishError("point has clearly negative multipliers; it is not approximately feasible")
    floor = target_margin if target_margin is not None else 0.0
    rep0 = verify(dual, DualPoint(free))
    obj_before = rep0.objective_raw
    if _meets(rep0, kappa, floor):
        return PolishResult(DualPoint(free), 0.0, obj_before, obj_before, None, "unchanged")

    y = _project_point(dual, free, shrink)

    def accept(cand):
        return _meets(verify(dual, DualPoint(cand)), kappa, floor)

    row_floor = _lp_row_floor(dual, verify(dual, DualPoint(y)), y, ld, 4.0 * kappa, floor)

    candidates = []
    try:
        yr, _ = anchor_lp(dual, y[ld.tails], scale, accept=accept, row_floor=row_floor)
        rep = verify(dual, DualPoint(yr))
        if _meets(rep, kappa, floor):
            candidates.append((rep.certified_objective, "lp-repair", yr, rep))
        else:
            y = yr
    except PolishError:
        pass
    a = None
    if len(ld.tails) or not candidates:
        # the tail-free anchor wins when the solver's cone parts are poor
        a, _ = anchor_lp(dual, None, scale, accept=accept, row_floor=row_floor)
        rep = verify(dual, DualPoint(a))
        if _meets(rep, kappa, floor):
            candidates.append((rep.certified_objective, "anchor", a, rep))
    if candidates:
        _, method, best, rep = max(candidates, key=lambda c: c[0])
        return PolishResult(DualPoint(best), 0.0, obj_before, rep.objective_raw, None, method)

    ma = _row_margins(dual, a)
    m0 = _row_margins(dual, y)
    theta = 0.0
    binding = None
    for _ in range(max_rounds):
        cur = (1 - theta) * y + theta * a
        rep = verify(dual, DualPoint(cur))
        if _meets(rep, kappa, floor):
            return PolishResult(DualPoint(cur), theta, obj_before, rep.objective_raw, binding, "shrink")
        if theta >= 1.0:
            break
        # targets on y^2 - |z|^2 become targets on y - |z| after dividing by y
        lt = _targets(rep, kappa, floor)
        mc = _row_margins(dual, cur)
        k = dual.num_derived + len(ld.lin_idx)
        if len(ld.heads):
            u = cur[ld.heads]
            lt[k:] = lt[k:] / np.maximum(u, np.finfo(float).tiny)
        with np.errstate(divide="ignore", invalid="ignore"):
            need = np.where(mc < lt, (lt - m0) / (ma - m0), 0.0)
        need = np.where(np.isfinite(need), need, 1.0)
        i = int(np.argmax(need))
        binding = rep.labels[i]
        theta = float(min(1.0, max(need[i] * (1 + 1e-6), 2.0 * theta + 1e-15)))
    raise PolishError("could not reach the target margins; loosen the target or re-solve")


def solve_and_polish(prog: ConicProgram, opts: SolverOptions | None = None, kappa: float = 2.0):
    """Solve, polish and verify.  Returns (dual, solution, polish result, report)."""
    dual = build_dual(prog)
    sol = solve(prog, opts, dual=dual)
    if sol.status == "infeasible-detected":
        raise SolverError("solver detected infeasibility")
    if sol.dual_point is None:
        raise SolverError(f"solver returned no dual point (status {sol.status})")
    pol = polish(dual, sol.dual_point, kappa=kappa)
    rep = verify(dual, pol.point)
    return dual, sol, pol, rep
