"""One dual point bounds a whole (h, p) region, and a few regions cover a box.

The box parameters enter only the dual objective, so a certificate computed
at an anchor (h, p) gives a quadratic lower bound nearby.  Where that bound
stays above a threshold is an ellipse; covers() checks that the ellipses
jointly contain a rectangle.
"""
from minoverlap.certify import ReuseData, covers, ellipse, reuse_objective
from minoverlap.cli import certify_program
from minoverlap.programs import ProgramInput, build_full
from minoverlap.solver import SolverOptions

# published multipliers of one anchor
pub = ReuseData(objective=0.37905, N=25000, h1=0.015, h2=0.015, p1=0.385, p2=0.385,
                y_mean=0.0000014902, y_mome=0.00010235, y_cosup=0.000038011, y_c1bnd=(0.35962, 0.0),
                q1=-0.02, q2=0.02)
for p in (0.385, 0.387, 0.39):
    print(f"bound at h=0.015, p={p}: {reuse_objective(pub, 0.015, 0.015, p, p):.6f}")
reg = ellipse(pub, 0.379005)
print(f"region above 0.379005 is an {reg.kind} containing the anchor: {bool(reg.contains(0.015, 0.385))}")

# self-computed anchors at small scale
anchors = [(0.01, 0.37), (0.01, 0.385), (0.03, 0.375), (0.03, 0.39)]
certs = []
for h, p in anchors:
    inp = ProgramInput(N=300, T=80, R=6, h1=h, h2=h, p1=p, p2=p, q1=-0.02, q2=0.02)
    certs.append(certify_program(build_full(inp), SolverOptions(max_iters=3000)))
    print(f"anchor h={h}, p={p}: certified {certs[-1].objective:.6f}")
# a higher threshold shrinks the ellipses: the inner box stays covered, the outer one does not
for offset in (5e-4, 2e-3):
    thr = min(c.objective for c in certs) - offset
    regions = [ellipse(c, thr) for c in certs]
    for box in [((0.005, 0.035), (0.37, 0.39)), ((0.0, 0.04), (0.365, 0.395))]:
        res = covers(regions, box)
        print(f"threshold {thr:.6f}: h{box[0]} x p{box[1]} covered = {res.covered}, witness = {res.witness}")
