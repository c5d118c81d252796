"""Command-line driver: build, solve, polish, verify and cover.

Exit codes: 0 success, 2 input error, 3 solver failure, 4 verification
failure, 5 partial result (failed sweep job or uncovered region).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .certify import (Certificate, EnvelopeError, ReuseData, check_envelope, covers, ellipse,
                      load_certificate, make_certificate, save_certificate)
from .programs import ProgramInput, build_full, build_lp, quadratic_residuals, residual_labels
from .solver import PolishError, SolverError, SolverOptions, solve_and_polish

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4
EXIT_PARTIAL = 5

log = logging.getLogger("minoverlap")


class InputError(ValueError):
    pass


# -- shared pipeline ----------------------------------------------------------

def _solver_options(args) -> SolverOptions:
    return SolverOptions(max_iters=args.max_iters, tol=args.tol)


def certify_program(prog, opts: SolverOptions, kappa: float = 2.0) -> Certificate:
    dual, sol, pol, rep = solve_and_polish(prog, opts, kappa=kappa)
    meta = sol.meta()
    meta["polish"] = {"method": pol.method, "theta": pol.theta,
                      "objective_before": pol.objective_before, "objective_after": pol.objective_after}
    meta["version"] = __version__
    return make_certificate(prog, dual, pol.point, meta)


def read_input(path) -> ProgramInput:
    try:
        data = json.loads(Path(path).read_text())
        return ProgramInput.from_dict(data.get("input", data))
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read program input from {path}: {exc}") from exc


def _write_json(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _sidecar(out: Path, **info) -> None:
    """Timings and timestamps go to a sidecar log so main outputs stay byte-identical."""
    log_path = Path(str(out) + ".log")
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with log_path.open("a") as fh:
        fh.write(json.dumps({"time": time.strftime("%Y-%m-%dT%H:%M:%S"), **info}, sort_keys=True) + "\n")


# -- lp / bound / verify ------------------------------------------------------

def cmd_lp(args) -> int:
    if args.N < 1 or args.R < 0:
        raise InputError("need N >= 1 and R >= 0")
    if args.N > 20000 and not args.long:
        raise InputError("N > 20000 is full scale; pass --long to run it")
    t0 = time.perf_counter()
    cert = certify_program(build_lp(args.N, args.R), _solver_options(args))
    out = Path(args.out)
    save_certificate(cert, out)
    _sidecar(out, command="lp", seconds=time.perf_counter() - t0)
    status = "PASS" if cert.report.ok else "FAIL"
    print(f"lp N={args.N} R={args.R}: {status} certified bound {cert.objective!r}")
    if not cert.report.ok:
        return EXIT_VERIFY
    check_envelope(cert.objective, "LP bound")
    return EXIT_OK


def cmd_bound(args) -> int:
    inp = read_input(args.input)
    if inp.N > 20000 and not args.long:
        raise InputError("N > 20000 is full scale; pass --long to run it")
    t0 = time.perf_counter()
    cert = certify_program(build_full(inp, paper_compat=args.paper_compat), _solver_options(args))
    out = Path(args.out)
    save_certificate(cert, out)
    _sidecar(out, command="bound", seconds=time.perf_counter() - t0)
    status = "PASS" if cert.report.ok else "FAIL"
    print(f"bound {inp.to_dict()}: {status} certified bound {cert.objective!r}")
    if not cert.report.ok:
        return EXIT_VERIFY
    check_envelope_floor(cert.objective)
    return EXIT_OK


def check_envelope_floor(value: float) -> None:
    # a sub-box may exclude the extremal function, so only the floor applies
    from .certify import ENVELOPE_SLACK, LOWER_ENVELOPE
    if value < LOWER_ENVELOPE - ENVELOPE_SLACK:
        log.warning("bound %r lies below the trivial floor 1/4 for this box", value)


def cmd_verify(args) -> int:
    cert = load_certificate(args.certificate, reverify=True)
    rep = cert.report
    lab, m, b = rep.worst()
    status = "PASS" if rep.ok else "FAIL"
    print(f"{status}: certified bound {cert.objective!r}; {int((~rep.passed).sum())} failing rows; "
          f"tightest {lab} margin {m:.3e} bound {b:.3e}")
    if args.out:
        _write_json(args.out, {"pass": rep.ok, "certified_objective": cert.objective,
                               "failures": [list(x) for x in rep.failures[:100]]})
    return EXIT_OK if rep.ok else EXIT_VERIFY


# -- sweep ----------------------------------------------------------------------

@dataclass
class Job:
    label: str
    input: ProgramInput
    threshold: float | None = None


def load_plan(path) -> dict:
    try:
        plan = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read plan {path}: {exc}") from exc
    jobs = plan.get("jobs") or []
    if not jobs:
        raise InputError("plan has no jobs")
    defaults = plan.get("defaults", {})
    parsed = []
    for i, j in enumerate(jobs):
        d = dict(defaults)
        d.update(j.get("input", {}))
        try:
            inp = ProgramInput.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"job {i}: {exc}") from exc
        parsed.append(Job(j.get("label", f"job{i:03d}"), inp, j.get("threshold")))
    labels = [j.label for j in parsed]
    if len(set(labels)) != len(labels):
        raise InputError("job labels must be unique")
    plan["_jobs"] = parsed
    return plan


def _run_job(job: Job, opts: SolverOptions, paper_compat: bool, out_dir: str) -> dict:
    t0 = time.perf_counter()
    res = {"label": job.label, "input": job.input.to_dict()}
    try:
        cert = certify_program(build_full(job.input, paper_compat=paper_compat), opts)
    except (SolverError, PolishError) as exc:
        res.update(status="solver-failure", error=str(exc))
        return res
    save_certificate(cert, Path(out_dir) / f"{job.label}.json")
    res.update(status="PASS" if cert.report.ok else "FAIL", objective=cert.objective,
               seconds=time.perf_counter() - t0)
    if job.threshold is not None:
        res["meets_threshold"] = bool(cert.objective >= job.threshold)
    return res


def residual_cells(boxes: list[dict], target: dict) -> list[dict]:
    """Elementary cells of ``target`` (h, p, q ranges) not inside any job box."""
    axes = ("h", "p", "q")
    cuts = []
    for ax in axes:
        lo, hi = target[ax]
        pts = {lo, hi}
        for b in boxes:
            for v in b[ax]:
                if lo < v < hi:
                    pts.add(v)
        cuts.append(sorted(pts))
    out = []
    for i in range(len(cuts[0]) - 1):
        for j in range(len(cuts[1]) - 1):
            for k in range(len(cuts[2]) - 1):
                mid = [(cuts[a][n] + cuts[a][n + 1]) / 2 for a, n in zip(range(3), (i, j, k))]
                if not any(all(b[ax][0] <= m <= b[ax][1] for ax, m in zip(axes, mid)) for b in boxes):
                    out.append({"h": [cuts[0][i], cuts[0][i + 1]], "p": [cuts[1][j], cuts[1][j + 1]],
                                "q": [cuts[2][k], cuts[2][k + 1]]})
    return out


def _bounding(cells: list[dict]) -> dict | None:
    if not cells:
        return None
    return {ax: [min(c[ax][0] for c in cells), max(c[ax][1] for c in cells)] for ax in ("h", "p", "q")}


def cmd_sweep(args) -> int:
    plan = load_plan(args.plan)
    if plan.get("scale") == "paper" and not args.long:
        raise InputError("this plan is full scale; pass --long to run it")
    jobs: list[Job] = plan["_jobs"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sopts = dict(plan.get("solver", {}))
    if args.max_iters is not None:
        sopts["max_iters"] = args.max_iters
    opts = SolverOptions(**sopts)
    t0 = time.perf_counter()
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            futs = [ex.submit(_run_job, j, opts, args.paper_compat, str(out)) for j in jobs]
            results = [f.result() for f in futs]
    else:
        results = [_run_job(j, opts, args.paper_compat, str(out)) for j in jobs]
    results.sort(key=lambda r: r["label"])
    timings = {r["label"]: r.pop("seconds", None) for r in results}
    ok = [r for r in results if r["status"] == "PASS"]
    report = {"plan": plan.get("name", Path(args.plan).stem), "flags": {"paper_compat": args.paper_compat},
              "jobs": results, "num_pass": len(ok), "num_jobs": len(results)}
    if ok:
        report["min_bound"] = min(r["objective"] for r in ok)
    complete = len(ok) == len(results)
    target = plan.get("target_box")
    if target:
        boxes = [{"h": [r["input"]["h1"], r["input"]["h2"]], "p": [r["input"]["p1"], r["input"]["p2"]],
                  "q": [r["input"]["q1"], r["input"]["q2"]]} for r in ok]
        cells = residual_cells(boxes, target)
        report["residual_box"] = _bounding(cells)
        report["residual_cells"] = len(cells)
        report["justification"] = plan.get("justification")
    cov = plan.get("coverage")
    covered = True
    if cov:
        creport = _coverage_from_jobs(cov, ok, out)
        report["coverage"] = creport
        covered = creport["covered"]
    if complete and ok:
        report["conclusion"] = {"bound": report["min_bound"], "excluding": report.get("residual_box")}
        if not target or report.get("residual_box") is None:
            try:
                check_envelope(report["min_bound"], "sweep bound")
            except EnvelopeError as exc:
                report["envelope_violation"] = str(exc)
    _write_json(out / "sweep_report.json", report)
    _sidecar(out / "sweep_report.json", command="sweep", seconds=time.perf_counter() - t0, jobs=timings)
    print(f"sweep {report['plan']}: {len(ok)}/{len(results)} jobs pass"
          + (f", min bound {report['min_bound']!r}" if ok else "")
          + (f", coverage {'covered' if covered else 'NOT covered'}" if cov else ""))
    if "envelope_violation" in report:
        return EXIT_VERIFY
    return EXIT_OK if complete and covered else EXIT_PARTIAL


def _coverage_from_jobs(cov: dict, ok: list[dict], out: Path) -> dict:
    certs = [load_certificate(out / f"{r['label']}.json") for r in ok]
    certs = [c for c in certs if c.report.ok]
    if not certs:
        return {"covered": False, "reason": "no verified certificates"}
    thr = cov.get("threshold")
    if thr is None or thr == "auto":
        thr = min(c.objective for c in certs) - float(cov.get("offset", 5e-5))
    box = ((cov["box"]["h"][0], cov["box"]["h"][1]), (cov["box"]["p"][0], cov["box"]["p"][1]))
    regions = [ellipse(c, thr) for c in certs]
    res = covers(regions, box)
    write_regions(out, regions, box, res)
    return {"covered": res.covered, "threshold": thr, "box": cov["box"], "witness": res.witness,
            "grid_cells": res.cells, "grid_spacing": res.delta, "justification": cov.get("justification")}


# -- ellipses -------------------------------------------------------------------

def write_regions(out: Path, regions, box, res) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with (out / "regions.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "kind", "const", "lin_h", "lin_p", "quad_h", "quad_p", "threshold",
                    "anchor_h", "anchor_p", "anchor_objective"])
        for i, r in enumerate(regions):
            w.writerow([i, r.kind, repr(r.const), repr(r.lin_h), repr(r.lin_p), repr(r.quad_h),
                        repr(r.quad_p), repr(r.threshold), *map(repr, r.anchor)])
        if res.witness is not None:
            w.writerow(["witness", "uncovered", "", "", "", "", "", "", repr(res.witness[0]), repr(res.witness[1]), ""])
    (out / "regions.svg").write_text(regions_svg(regions, box, res.witness))


_COLOURS = ["#2ca02c", "#1f77b4", "#d62728", "#9467bd", "#98df8a", "#ff7f0e", "#17becf", "#8c564b"]


def regions_svg(regions, box, witness=None, size=480) -> str:
    (h0, h1), (p0, p1) = box
    ph = 0.25 * max(h1 - h0, 1e-9)
    pp = 0.25 * max(p1 - p0, 1e-9)
    xlo, xhi, ylo, yhi = h0 - ph, h1 + ph, p0 - pp, p1 + pp

    def X(h):
        return 40 + (h - xlo) / (xhi - xlo) * (size - 60)

    def Y(p):
        return size - 40 - (p - ylo) / (yhi - ylo) * (size - 60)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">', '<rect width="100%" height="100%" fill="white"/>']
    for i, r in enumerate(regions):
        col = _COLOURS[i % len(_COLOURS)]
        if r.kind == "ellipse":
            (ch, cp), (ah, ap) = r.center, r.semi_axes
            t = np.linspace(0, 2 * math.pi, 181)
            pts = " ".join(f"{X(ch + ah * math.cos(a)):.2f},{Y(cp + ap * math.sin(a)):.2f}" for a in t)
            parts.append(f'<polygon points="{pts}" fill="{col}" fill-opacity="0.25" stroke="{col}"/>')
        parts.append(f'<circle cx="{X(r.anchor[0]):.2f}" cy="{Y(r.anchor[1]):.2f}" r="3" fill="{col}"/>')
    parts.append(f'<rect x="{X(h0):.2f}" y="{Y(p1):.2f}" width="{X(h1) - X(h0):.2f}" '
                 f'height="{Y(p0) - Y(p1):.2f}" fill="none" stroke="black" stroke-width="1.5"/>')
    if witness is not None:
        parts.append(f'<circle cx="{X(witness[0]):.2f}" cy="{Y(witness[1]):.2f}" r="4" fill="black"/>')
    parts.append(f'<text x="{size / 2:.0f}" y="{size - 10}" text-anchor="middle" font-size="12">h</text>')
    parts.append(f'<text x="12" y="{size / 2:.0f}" font-size="12">p</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_ellipses(args) -> int:
    cdir = Path(args.cert_dir)
    files = sorted(p for p in cdir.glob("*.json") if p.name != "sweep_report.json")
    certs = []
    for f in files:
        try:
            c = load_certificate(f)
        except (ValueError, KeyError):
            continue
        if c.kind == "full" and c.report.ok:
            certs.append(c)
    if not certs:
        raise InputError(f"no verified full-program certificates in {cdir}")
    h0, h1, p0, p1 = args.box
    box = ((h0, h1), (p0, p1))
    regions = [ellipse(c, args.threshold) for c in certs]
    res_cov = covers(regions, box)
    out = Path(args.out)
    write_regions(out, regions, box, res_cov)
    _write_json(out / "coverage.json", {
        "covered": res_cov.covered, "threshold": args.threshold, "box": {"h": [h0, h1], "p": [p0, p1]},
        "witness": res_cov.witness, "grid_cells": res_cov.cells, "grid_spacing": res_cov.delta,
        "regions": [r.to_dict() for r in regions]})
    print(f"ellipses: {len(regions)} regions, box {box}: "
          + ("covered" if res_cov.covered else f"NOT covered, witness {res_cov.witness}"))
    return EXIT_OK if res_cov.covered else EXIT_PARTIAL


# -- oracle -----------------------------------------------------------------------

def cmd_oracle(args) -> int:
    from . import oracle
    f = oracle.load_fixture(args.fixture)
    h, p, q = args.h, args.p, args.q
    inp = ProgramInput(N=args.N, T=args.T, R=args.R, h1=h[0], h2=h[1], p1=p[0], p2=p[1], q1=q[0], q2=q[1])
    try:
        fa = oracle.assignment(f, inp)
    except oracle.HypothesisError as exc:
        raise InputError(str(exc)) from exc
    from .programs import assignment_vector
    prog = build_full(inp, paper_compat=args.paper_compat)
    x = assignment_vector(prog, fa)
    r = quadratic_residuals(prog, x)
    labs = residual_labels(prog)
    i = int(np.argmin(r))
    report = {"fixture": Path(args.fixture).name, "input": inp.to_dict(),
              "flags": {"paper_compat": args.paper_compat},
              "sup_norm": fa.Omega, "min_slack": float(r[i]), "argmin": list(labs[i]),
              "feasible": bool(r[i] >= -1e-9)}
    code = EXIT_OK if report["feasible"] else EXIT_VERIFY
    if args.solve:
        cert = certify_program(prog, _solver_options(args))
        report["certified_bound"] = cert.objective
        report["bound_below_sup_norm"] = bool(cert.objective <= fa.Omega + 1e-9)
        if not report["bound_below_sup_norm"]:
            code = EXIT_VERIFY
    _write_json(args.out, report)
    print(f"oracle {report['fixture']}: min slack {report['min_slack']:.3e} at {tuple(report['argmin'])}"
          + ("" if "certified_bound" not in report else f", certified bound {report['certified_bound']!r} vs sup {fa.Omega!r}"))
    return code


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="minoverlap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def solver_flags(p, default_iters=100_000):
        p.add_argument("--max-iters", type=int, default=default_iters)
        p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("lp", help="certify the even-M linear program")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--R", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--long", action="store_true", help="allow full-scale sizes (N > 20000, full-scale plans)")
    solver_flags(p)
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("bound", help="certify the full program for one input box")
    p.add_argument("input", help="JSON file with N, T, R and the h, p, q ranges")
    p.add_argument("--out", required=True)
    p.add_argument("--paper-compat", action="store_true", help="use 8/(m pi) in the sine brackets")
    p.add_argument("--long", action="store_true")
    solver_flags(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="run a plan of boxes and assemble the bound")
    p.add_argument("plan")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--paper-compat", action="store_true")
    p.add_argument("--long", action="store_true")
    p.add_argument("--max-iters", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ellipses", help="reuse regions of certificates and a covering check")
    p.add_argument("cert_dir")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--box", type=float, nargs=4, metavar=("H0", "H1", "P0", "P1"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ellipses)

    p = sub.add_parser("oracle", help="check a fixture function against the program")
    p.add_argument("fixture")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--R", type=int, required=True)
    p.add_argument("--h", type=float, nargs=2, default=[0.0, 2.0])
    p.add_argument("--p", type=float, nargs=2, default=[0.0, 1.0])
    p.add_argument("--q", type=float, nargs=2, default=[-1.0, 1.0])
    p.add_argument("--solve", action="store_true", help="also certify a bound and compare with sup M")
    p.add_argument("--paper-compat", action="store_true")
    p.add_argument("--out", required=True)
    solver_flags(p, 5000)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify", help="re-verify a certificate file")
    p.add_argument("certificate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, PolishError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except EnvelopeError as exc:
        print(f"envelope check failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
