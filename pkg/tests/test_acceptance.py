"""Acceptance criteria, one test (or group) per criterion.

Each check records a PASS/FAIL line that is printed in the terminal summary.
"""
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from minoverlap import cli, oracle
from minoverlap.certify import (ReuseData, covers, ellipse, load_certificate, reuse_objective, verify)
from minoverlap.dual import DualPoint
from minoverlap.fourier import A_coeff, B_coeff, a_coeff, b_coeff, tail_bound_cos, tail_bound_sin
from minoverlap.programs import ProgramInput, assignment_vector, build_full, build_lp, quadratic_residuals
from minoverlap.solver import SolverOptions

from conftest import ACCEPTANCE, DATA, FIXTURES, GOLDEN, load
from helpers import half_coeff, step_eval

UPPER = 0.3809268534330870
LP_80000 = 0.375169005340707
VALINTER = ProgramInput(N=2000, T=500, R=10, h1=0.0, h2=2.0, p1=0.0, p2=1.0, q1=-1.0, q2=1.0)
BOXES = {
    "constant_half": dict(h1=0.0, h2=0.1, p1=0.0, p2=0.1, q1=-0.05, q2=0.05),
    "shifted_step": dict(h1=0.1, h2=0.3, p1=0.55, p2=0.65, q1=-0.25, q2=-0.15),
    "cosine_staircase": dict(h1=0.0, h2=0.1, p1=0.25, p2=0.35, q1=-0.05, q2=0.05),
}

# certified bounds produced in this module: (what, value, claim about the constant?)
BOUNDS = []


def record(cid, ok, detail):
    line = f"[{cid}] {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


# -- 1 ------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="the moment row excludes the value 1/4 (see decisions ledger)")
def test_c01_trivial_floor_as_written():
    vals = {N: cli.certify_program(build_lp(N, 0), SolverOptions(max_iters=2000)).objective for N in (4, 100, 2000)}
    ok = all(abs(v - 0.25) <= 1e-8 for v in vals.values())
    record("C1", ok, "build_lp(N, 0) = 0.25 +- 1e-8: " + ", ".join(f"N={N}: {v:.10f}" for N, v in vals.items()))


def test_c01_companion_floor_and_lp_optimum():
    from helpers import lp_reference
    rows = []
    for N in (4, 100, 2000):
        prog = build_lp(N, 0)
        c = cli.certify_program(prog, SolverOptions(max_iters=2000))
        ref = lp_reference(prog)
        BOUNDS.append((f"lp N={N} R=0", c.objective, True))
        rows.append((N, c.report.ok, c.objective, abs(c.objective - ref)))
    ok = all(p and v >= 0.25 and err <= 1e-8 for _, p, v, err in rows) and abs(rows[0][2] - 19 / 66) <= 1e-8
    record("C1*", ok, "certified >= 0.25 and equals LP optimum to 1e-8 (N=4: 19/66): "
           + ", ".join(f"N={N}: {v:.10f}" for N, _, v, _ in rows))


# -- 3 ------------------------------------------------------------------------

def test_c03_lp_desk_golden(tmp_path):
    out = tmp_path / "lp.json"
    code = cli.main(["lp", "--N", "2000", "--R", "20", "--out", str(out)])
    c = load_certificate(out)
    same = out.read_bytes() == (GOLDEN / "lp_N2000_R20.json").read_bytes()
    BOUNDS.append(("lp N=2000 R=20", c.objective, True))
    record("C3", code == 0 and c.report.ok and same and c.objective < LP_80000,
           f"LP N=2000 R=20 PASS, {c.objective!r} < {LP_80000}, bit-identical to golden: {same}")


# -- 4 ------------------------------------------------------------------------

@pytest.mark.long
def test_c04_lp_full_scale(tmp_path):
    out = tmp_path / "lp.json"
    code = cli.main(["lp", "--N", "80000", "--R", "20", "--out", str(out), "--long"])
    c = load_certificate(out)
    BOUNDS.append(("lp N=80000 R=20", c.objective, True))
    record("C4", code == 0 and c.objective >= 0.375 and abs(c.objective - LP_80000) <= 2e-4,
           f"LP N=80000 R=20 certified {c.objective!r}")


# -- 5 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def valinter_cert():
    return cli.certify_program(build_full(VALINTER), SolverOptions(max_iters=2000))


def test_c05_full_program_sanity(valinter_cert):
    c = valinter_cert
    BOUNDS.append(("full valinter", c.objective, True))
    record("C5", c.report.ok and 0.24 <= c.objective <= 0.26,
           f"valinter N=2000 T=500 R=10 certified {c.objective!r} in [0.24, 0.26]")


# -- 6 ------------------------------------------------------------------------

@pytest.mark.parametrize("name", FIXTURES)
def test_c06_oracle_feasibility(name):
    inp = ProgramInput(N=200, T=60, R=6, **BOXES[name])
    f = load(name)
    fa = oracle.assignment(f, inp)
    prog = build_full(inp)
    slack = float(quadratic_residuals(prog, assignment_vector(prog, fa)).min())
    c = cli.certify_program(prog, SolverOptions(max_iters=3000))
    sup = float(oracle.sup_norm(oracle.convolve(f)))
    BOUNDS.append((f"full {name} box", c.objective, False))
    record("C6", slack >= -1e-9 and c.report.ok and c.objective <= sup + 1e-9,
           f"{name}: min slack {slack:.2e}, certified {c.objective:.6f} <= sup M {sup:.6f}")


# -- 7 ------------------------------------------------------------------------

@pytest.mark.parametrize("name", FIXTURES)
def test_c07_fourier_identities(name):
    f = load(name)
    M = oracle.convolve(f)
    T, R = 40, 10
    ft = oracle.truncation(f, T)
    eps, delta = oracle.remainders(f, T, R)
    fe = step_eval(f)
    fb = [float(b) for b in f.breakpoints]
    Mb = [float(b) for b in M.breakpoints]
    Mf = lambda x: float(M(x))
    worst = 0.0
    exact_zero, nonpos = True, True
    for m in range(1, 21):
        e = eps[(m - 1) // 2] if m % 2 else 0.0
        dl = delta[(m - 1) // 2] if m % 2 else 0.0
        am, bm = a_coeff(m, ft, e), b_coeff(m, ft, dl)
        Am, Bm = A_coeff(m, am, bm), B_coeff(m, bm)
        worst = max(worst,
                    abs(am - half_coeff(fe, m, "cos", -1, 1, fb)),
                    abs(bm - half_coeff(fe, m, "sin", -1, 1, fb)),
                    abs(Am - half_coeff(Mf, m, "cos", -2, 2, Mb)),
                    abs(Bm - half_coeff(Mf, m, "sin", -2, 2, Mb)))
        if m % 2 == 0:
            exact_zero &= Bm == 0.0
            nonpos &= Am <= 0.0
    record("C7", worst <= 1e-8 and exact_zero and nonpos,
           f"{name}: max |formula - quadrature| = {worst:.2e} for m <= 20, B_2m == 0, A_2m <= 0")


# -- 8 ------------------------------------------------------------------------

def test_c08_tail_domination():
    rng = np.random.default_rng(2024)
    K = 10**6
    worst = 0.0
    for trial in range(1000):
        T = int(rng.choice([1, 5, 20, 100, 500]))
        k = np.arange(T + 1, K + 1, dtype=np.int64)
        sign = np.where(k % 2 == 0, 1.0, -1.0)
        # tail coefficients with random decay; the head takes the rest of the mass budget
        c, d = rng.standard_normal((2, K - T)) / k ** rng.uniform(0, 1.5)
        scale = math.sqrt(0.5 * rng.uniform()) / math.sqrt(float(c @ c + d @ d))
        c, d = c * scale, d * scale
        m = int(rng.choice(np.arange(1, 2 * T, 2)))
        denom = (m * m - 4 * k * k).astype(float)
        tc = abs(float(np.dot((2.0 * m / math.pi) * sign / denom, c)))
        ts = abs(float(np.dot((4.0 / math.pi) * k * sign / denom, d)))
        worst = max(worst, tc / tail_bound_cos(m, T), ts / tail_bound_sin(m, T))
    record("C8", worst <= 1.0, f"1000 random sequences, max tail / bound = {worst:.3f}")


# -- 9 ------------------------------------------------------------------------

def test_c09_moment_identity():
    errs = []
    for name in FIXTURES:
        M = oracle.convolve(load(name))
        EM = oracle.mean(M)
        errs.append(abs(float(oracle.second_moment(M) - (Fraction(2, 3) + EM * EM / 2))))
    record("C9", max(errs) <= 1e-12, f"second moment identity, max error {max(errs):.1e} over {len(errs)} fixtures")


# -- 10 -----------------------------------------------------------------------

def test_c10_reuse_worked_example():
    d = ReuseData(objective=0.37905, N=25000, h1=0.015, h2=0.015, p1=0.385, p2=0.385,
                  y_mean=0.0000014902, y_mome=0.00010235, y_cosup=0.000038011, y_c1bnd=(0.35962, 0.0),
                  q1=-0.02, q2=0.02)
    at = reuse_objective(d, 0.015, 0.015, 0.385, 0.385)
    reg = ellipse(d, 0.379005)
    ok = at == 0.37905 and reg.kind == "ellipse" and bool(reg.contains(0.015, 0.385))
    record("C10", ok, f"reuse at anchor = {at!r}, region at 0.379005 is {reg.kind} containing the anchor")


# -- 11 -----------------------------------------------------------------------

def objective_critical(dual):
    """Indices into the margin vector whose multiplier carries a nonzero objective weight."""
    prog = dual.source
    g = prog.g
    idx = [j for j, r in enumerate(dual.pivot_map) if g[r] != 0]
    pivset = set(dual.pivot_map.tolist())
    k = dual.num_derived
    for c in prog.constraints:
        if c.kind == "linear" and c.rows.start in pivset:
            continue
        if np.any(g[c.rows] != 0):
            idx.append(k)
        k += 1
    return idx


def perturbed(dual, free, k, amount):
    """Move the multiplier behind margin ``k`` by ``amount`` toward infeasibility."""
    free = free.copy()
    nd = dual.num_derived
    if k < nd:
        # shift a free multiplier that enters the derived expression
        G = dual._G
        a = G.indptr[k]
        r, coef = G.indices[a], G.data[a]
        free[r] += amount * dual._pcoef[k] / coef
        return free
    prog = dual.source
    pos = {int(r): i for i, r in enumerate(dual.free_rows)}
    pivset = set(dual.pivot_map.tolist())
    cons = [c for c in prog.constraints if not (c.kind == "linear" and c.rows.start in pivset)]
    c = cons[k - nd]
    i = pos[c.rows.start]
    if c.kind == "linear":
        free[i] -= amount
    else:
        # shrink the cone bound so that y^2 - |z|^2 drops by ``amount``
        y = free[i]
        free[i] = math.sqrt(max(y * y - amount, 0.0))
    return free


@pytest.fixture(scope="module")
def golden_lp():
    return load_certificate(GOLDEN / "lp_N2000_R20.json")


def test_c11_perturbation_flips_binding_rows(golden_lp, valinter_cert):
    flipped, binding, total = 0, 0, 0
    for cert in (golden_lp, valinter_cert):
        dual = cert.dual()
        rep = cert.report
        for k in objective_critical(dual):
            total += 1
            m, b = rep.margin[k], rep.error_bound[k]
            if not (rep.passed[k] and m <= 11.0 * b):
                continue
            binding += 1
            new = verify(dual, DualPoint(perturbed(dual, cert.point.free, k, 10.0 * b)))
            flipped += int(not new.passed[k])
    record("C11", binding > 0 and flipped == binding,
           f"{flipped}/{binding} binding objective-critical rows flip to FAIL under a 10x error-bound "
           f"perturbation ({total} objective-critical rows checked)")


def test_c11_sign_flip_fails_every_critical_row(golden_lp):
    """Pushing any objective-critical multiplier 10 error bounds past its boundary fails."""
    dual = golden_lp.dual()
    rep = golden_lp.report
    bad = 0
    crit = objective_critical(dual)
    for k in crit:
        shift = rep.margin[k] + 10.0 * max(rep.error_bound[k], 1e-300)
        new = verify(dual, DualPoint(perturbed(dual, golden_lp.point.free, k, shift)))
        bad += int(new.passed[k])
    record("C11*", bad == 0, f"{len(crit)} objective-critical rows pushed past the boundary all FAIL")


# -- 12 -----------------------------------------------------------------------

def test_c12_desk_coverage(tmp_path):
    code = cli.main(["sweep", str(DATA / "plans" / "table3_desk.json"), "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "sweep_report.json").read_text())
    cov = rep["coverage"]
    objs = [j["objective"] for j in rep["jobs"]]
    for j in rep["jobs"]:
        BOUNDS.append((f"anchor {j['label']}", j["objective"], False))
    ok = (code == 0 and rep["num_pass"] == 7 and cov["covered"]
          and cov["threshold"] == min(objs) - 5e-5 and cov["witness"] is None)
    # the same regions re-checked directly
    certs = [load_certificate(tmp_path / f"{j['label']}.json") for j in rep["jobs"]]
    box = (tuple(cov["box"]["h"]), tuple(cov["box"]["p"]))
    again = covers([ellipse(c, cov["threshold"]) for c in certs], box)
    record("C12", ok and again.covered,
           f"7 desk certificates cover h{cov['box']['h']} x p{cov['box']['p']} at threshold "
           f"{cov['threshold']:.6f} ({cov['grid_cells']} guarded grid cells)")


@pytest.mark.long
def test_c12_full_scale_sweep(tmp_path):
    code = cli.main(["sweep", str(DATA / "plans" / "table3_paper.json"), "--out", str(tmp_path), "--long"])
    rep = json.loads((tmp_path / "sweep_report.json").read_text())
    BOUNDS.append(("full-scale sweep min", rep["min_bound"], True))
    record("C12-long", code in (0, cli.EXIT_PARTIAL) and rep["min_bound"] >= 0.379005 - 1e-4,
           f"full-scale sweep min certified bound {rep['min_bound']!r}")


# -- 2 (runs last, over every bound produced above) ---------------------------

def test_c02_envelope_on_all_bounds():
    assert BOUNDS, "no bounds were produced"
    bad = []
    for what, v, claim in BOUNDS:
        if v < 0.25 - 1e-8 or (claim and v > UPPER):
            bad.append(f"{what}={v!r}")
    record("C2", not bad, f"{len(BOUNDS)} certified bounds within [0.25, {UPPER}]"
           + (f"; outside: {', '.join(bad)}" if bad else ""))
