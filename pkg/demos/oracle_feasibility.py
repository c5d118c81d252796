"""A concrete f gives a feasible point of the full program.

The oracle computes M = f * (1 - f) exactly for step functions, its interval
averages and the Fourier data of f.  Every constraint of the program then
holds at that point, so the program optimum cannot exceed sup M.
"""
from pathlib import Path

import minoverlap
from minoverlap import oracle
from minoverlap.cli import certify_program
from minoverlap.programs import ProgramInput, assignment_vector, build_full, quadratic_residuals
from minoverlap.solver import SolverOptions

DATA = Path(minoverlap.__file__).parent / "data"
f = oracle.load_fixture(DATA / "shifted_step.json")
inp = ProgramInput(N=200, T=60, R=6, h1=0.1, h2=0.3, p1=0.55, p2=0.65, q1=-0.25, q2=-0.15)

info = oracle.check_hypotheses(f, inp)
print(f"E(M) = {info['EM']:.4f}, c_1 = {info['c1']:.4f}, d_1 = {info['d1']:.4f}")

prog = build_full(inp)
x = assignment_vector(prog, oracle.assignment(f, inp))
print(f"smallest constraint slack at the oracle point: {quadratic_residuals(prog, x).min():.2e}")

cert = certify_program(prog, SolverOptions(max_iters=3000))
print(f"certified lower bound {cert.objective:.6f} <= sup M = {float(oracle.sup_norm(info['M'])):.6f}")

try:
    oracle.assignment(oracle.load_fixture(DATA / "right_half.json"), inp)
except oracle.HypothesisError as exc:
    print("indicator of [0, 1] rejected:", exc)
