"""Brackets on A_m, B_m, E(M) and the second moment from interval averages.

Only the averages of M on a grid of width L = 2/N are known to the program.
The envelope arrays bound cos/sin(pi m x/2) on each subinterval, which turns
the averages into intervals guaranteed to contain the exact quantities.
"""
from pathlib import Path

import minoverlap
from minoverlap import oracle
from minoverlap.intervals import (Discretization, build_envelopes, cos_bracket, mean_bracket,
                                  moment_bracket, sin_bracket)

DATA = Path(minoverlap.__file__).parent / "data"
M = oracle.convolve(oracle.load_fixture(DATA / "cosine_staircase.json"))
A1, B1 = (float(x[0]) for x in oracle.half_period_coeffs(M, [1]))

print("exact: A_1 = %.8f, B_1 = %.8f, E(M) = %.8f, int x^2 M = %.8f"
      % (A1, B1, float(oracle.mean(M)), float(oracle.second_moment(M))))
for N in (50, 200, 1000):
    disc = Discretization(N)
    env = build_envelopes(disc, R=3)
    avg = oracle.averages(M, N)
    lo, hi = cos_bracket(avg, env, 1, disc.L)
    slo, shi = sin_bracket(avg, env, 1, disc.L)
    mlo, mhi = mean_bracket(avg, disc.L)
    qlo, qhi = moment_bracket(avg, disc.L)
    print(f"N={N:5d}: A_1 in [{lo:.6f}, {hi:.6f}]  B_1 in [{slo:+.6f}, {shi:+.6f}]  "
          f"E in [{mlo:+.6f}, {mhi:+.6f}]  x^2 in [{qlo:.6f}, {qhi:.6f}]")
