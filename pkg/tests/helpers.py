"""Independent reference computations used across the tests."""
import cvxpy as cp
import numpy as np
from scipy.integrate import quad
from scipy.optimize import linprog


def solve_reference(prog, extra=None):
    """Primal optimum of a ConicProgram with CLARABEL through cvxpy."""
    x = cp.Variable(prog.num_vars)
    cons = []
    for b in prog.blocks:
        rows = prog.F[b.start:b.stop]
        expr = rows @ x + prog.g[b.start:b.stop]
        if b.kind == "linear":
            cons.append(expr >= 0)
        else:
            E = cp.reshape(expr, (b.count, b.size), order="C")
            cons.append(cp.SOC(E[:, 0], E[:, 1:], axis=1))
    if extra is not None:
        cons += extra(x)
    pr = cp.Problem(cp.Minimize(prog.objective @ x), cons)
    pr.solve(solver="CLARABEL")
    return pr.value, x.value


def lp_reference(prog):
    """Primal optimum of an all-linear ConicProgram with HiGHS."""
    res = linprog(prog.objective, A_ub=-prog.F, b_ub=prog.g, bounds=(None, None), method="highs")
    assert res.status == 0
    return res.fun


def half_coeff(fun, m, kind, lo, hi, breaks=()):
    """(1/2) int cos|sin(pi m x / 2) fun(x) dx by adaptive quadrature."""
    trig = np.cos if kind == "cos" else np.sin
    pts = sorted({float(b) for b in breaks if lo < b < hi})
    val, _ = quad(lambda x: trig(np.pi * m * x / 2) * fun(x), lo, hi, points=pts or None,
                  limit=400, epsabs=1e-13, epsrel=1e-13)
    return 0.5 * val


def step_eval(f):
    """Float evaluator of a step function."""
    bp = np.array([float(b) for b in f.breakpoints])
    vals = np.array([float(v) for v in f.values])

    def fun(x):
        if x < bp[0] or x > bp[-1]:
            return 0.0
        i = min(np.searchsorted(bp, x, side="right") - 1, len(vals) - 1)
        return vals[i]
    return fun


def conv_eval(f):
    """M(x) = int f(t) (1 - f(x + t)) dt by quadrature, independent of the oracle."""
    fe = step_eval(f)
    bp = [float(b) for b in f.breakpoints]

    def M(x):
        lo, hi = max(-1.0, -1.0 - x), min(1.0, 1.0 - x)
        if lo >= hi:
            return 0.0
        pts = sorted({b for b in bp if lo < b < hi} | {b - x for b in bp if lo < b - x < hi})
        val, _ = quad(lambda t: fe(t) * (1.0 - fe(x + t)), lo, hi, points=pts or None, limit=400,
                      epsabs=1e-14, epsrel=1e-14)
        return val
    return M
