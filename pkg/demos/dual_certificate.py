"""Dualising the full program, eliminating equalities and writing a certificate.

Pivot rows (one per primal variable) turn the dual equalities into explicit
formulas for the eliminated multipliers, so the certificate only stores the
free multipliers.  Loading the file re-verifies it from scratch.
"""
import json
import tempfile
from pathlib import Path

from minoverlap.certify import load_certificate, save_certificate, verify
from minoverlap.cli import certify_program
from minoverlap.dual import DualPoint, build_dual
from minoverlap.programs import ProgramInput, build_full
from minoverlap.solver import SolverOptions

inp = ProgramInput(N=300, T=80, R=6, h1=0.0, h2=0.06, p1=0.35, p2=0.45, q1=-0.02, q2=0.02)
prog = build_full(inp)
dual = build_dual(prog)
print(f"primal: {prog.num_vars} variables, {prog.num_rows} rows; "
      f"dual: {dual.num_free} free and {dual.num_derived} derived multipliers")

cert = certify_program(prog, SolverOptions(max_iters=4000))
print(f"certified {cert.objective:.8f}, polish: {cert.solver_meta['polish']['method']}")
named = cert.named()
print("multipliers used by the reuse formula:",
      {k: f"{named[k]:.3e}" for k in ("mean", "mome", "cosup", "c1bnd_1", "c1bnd_2")})

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "cert.json"
    save_certificate(cert, path)
    back = load_certificate(path)
    print(f"reloaded: pass={back.report.ok}, objective identical: {back.objective == cert.objective}")
    bad = json.loads(path.read_text())
    bad["point"]["mome"] = [(-1.0).hex() if v is not None else None for v in bad["point"]["mome"]]
    path.write_text(json.dumps(bad))
    print("tampered file fails re-verification:", not load_certificate(path).report.ok)

rep = verify(dual, DualPoint(-cert.point.free))
print(f"a negated point fails {len(rep.failures)} of {len(rep.margin)} checks")
