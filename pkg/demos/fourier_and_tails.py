"""Half-period coefficients of f and of M, and the tail bounds.

The coefficients of M follow from those of f: A_m and B_m are quadratic in
a_m, b_m, which in turn are series in the coefficients c_k, d_k of f.
Truncating at T leaves remainders that the tail bounds dominate.
"""
from pathlib import Path

import minoverlap
from minoverlap import oracle
from minoverlap.fourier import A_coeff, B_coeff, a_coeff, b_coeff, tail_bound_cos, tail_bound_sin

DATA = Path(minoverlap.__file__).parent / "data"

f = oracle.load_fixture(DATA / "shifted_step.json")   # indicator of [-3/5, 2/5]
M = oracle.convolve(f)
T, R = 40, 5

ft = oracle.truncation(f, T)
eps, delta = oracle.remainders(f, T, R)
A_exact, B_exact = oracle.half_period_coeffs(M, range(1, 2 * R + 1))

print(" m      A_m (formula)      A_m (exact)     B_m (formula)      B_m (exact)")
for m in range(1, 2 * R + 1):
    e = eps[(m - 1) // 2] if m % 2 else 0.0
    d = delta[(m - 1) // 2] if m % 2 else 0.0
    am, bm = a_coeff(m, ft, e), b_coeff(m, ft, d)
    print(f"{m:2d} {A_coeff(m, am, bm):+.12f} {A_exact[m - 1]:+.12f} {B_coeff(m, bm):+.12f} {B_exact[m - 1]:+.12f}")

print("\nremainders against their bounds (odd m)")
for i, m in enumerate(range(1, 2 * R, 2)):
    print(f"m={m}: |eps|={abs(eps[i]):.2e} <= {tail_bound_cos(m, T):.2e}   "
          f"|delta|={abs(delta[i]):.2e} <= {tail_bound_sin(m, T):.2e}")
