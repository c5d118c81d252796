"""Rigorous checking of dual points, certificate reuse across (h, p) boxes,
ellipse regions and covering of a parameter rectangle.

A dual point is accepted when every multiplier constraint holds with a
margin larger than the worst-case rounding error of the floating-point
expression that computes it:

    |fl(sum_{i<=n} t_i) - sum t_i| <= (n-1) u (1+u) / (1 - (n-1) u) * sum |t_i|,

with unit roundoff ``u = 2**-53``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dual import DualPoint, DualProgram, build_dual, constraint_margins, dual_objective
from .programs import ConicProgram, ProgramInput, build_full, build_lp

UNIT_ROUNDOFF = 2.0**-53
LOWER_ENVELOPE = 0.25
UPPER_ENVELOPE = 0.3809268534330870
ENVELOPE_SLACK = 1e-8


def _gamma(n: np.ndarray) -> np.ndarray:
    u = UNIT_ROUNDOFF
    k = np.asarray(n, dtype=float) - 1.0
    if np.any(k * u >= 1.0):
        raise ValueError("term count too large for the error model")
    g = k * u * (1.0 + u) / (1.0 - k * u)
    return np.nextafter(g, np.inf)


def fl_error_bound(n, abs_sum):
    """Worst-case error of a floating-point sum of ``n`` terms with the given
    sum of absolute values; rounded upward.  Accepts scalars or arrays."""
    n_arr = np.asarray(n)
    if np.any(n_arr < 1):
        raise ValueError("n must be >= 1")
    val = np.nextafter(_gamma(n_arr) * np.asarray(abs_sum, dtype=float), np.inf)
    val = np.where(n_arr == 1, 0.0, val)
    return float(val) if np.ndim(val) == 0 else val


@dataclass
class VerificationReport:
    margin: np.ndarray
    error_bound: np.ndarray
    n_terms: np.ndarray
    abs_sum: np.ndarray
    labels: list
    objective_raw: float
    objective_error: float
    unit_roundoff: float = UNIT_ROUNDOFF

    @property
    def passed(self) -> np.ndarray:
        return self.margin > self.error_bound

    @property
    def ok(self) -> bool:
        return bool(self.passed.all())

    @property
    def certified_objective(self) -> float:
        """Lower bound on the exact dual objective of the point."""
        return math.nextafter(self.objective_raw - self.objective_error, -math.inf)

    @property
    def failures(self) -> list:
        return [self.labels[i] for i in np.flatnonzero(~self.passed)]

    def worst(self) -> tuple:
        """Label and (margin, bound) of the row with the smallest margin/bound ratio."""
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self.error_bound > 0, self.margin / self.error_bound, np.inf)
            ratio = np.where(self.margin <= self.error_bound, -np.inf, ratio)
        i = int(np.argmin(ratio))
        return self.labels[i], float(self.margin[i]), float(self.error_bound[i])

    def summary(self) -> dict:
        lab, m, b = self.worst()
        return {
            "pass": self.ok,
            "num_constraints": int(len(self.margin)),
            "num_failed": int((~self.passed).sum()),
            "objective_raw": self.objective_raw,
            "objective_error": self.objective_error,
            "certified_objective": self.certified_objective,
            "tightest": {"label": list(lab), "margin": m, "error_bound": b},
            "unit_roundoff": self.unit_roundoff,
        }


def _derived_terms(dual: DualProgram, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Term counts and absolute sums of the derived-multiplier expressions."""
    G = dual._G
    free = u[dual.free_rows]
    absprod = sp_abs_colsum(G, free)
    n = np.diff(G.indptr) + 1
    phi = np.abs(dual.source.objective)
    return n, (phi + absprod) / np.abs(dual._pcoef)


def sp_abs_colsum(G, x: np.ndarray) -> np.ndarray:
    return abs(G).T @ np.abs(x)


def verify(dual: DualProgram, pt: DualPoint, inp: ProgramInput | None = None) -> VerificationReport:
    """Per-constraint margins and error bounds for a dual point.

    Derived multipliers are checked as ``ye >= 0``; free linear multipliers
    as ``y >= 0`` (exact, no summation); cones in the squared form
    ``y^2 - sum z^2 > 0`` together with ``y > 0``.
    """
    prog = dual.source if inp is None else _with_input(dual.source, inp)
    free = np.asarray(pt.free, dtype=float)
    u = dual.expand(free)
    margins, labels = constraint_margins(dual, u)
    nd = dual.num_derived
    n_terms = np.ones(len(margins), dtype=np.int64)
    abs_sum = np.abs(margins).astype(float)
    n_der, abs_der = _derived_terms(dual, u)
    n_terms[:nd] = n_der
    abs_sum[:nd] = abs_der
    pivset = np.zeros(prog.num_rows, dtype=bool)
    pivset[dual.pivot_map] = True
    k = nd
    for c in prog.constraints:
        if c.kind == "linear":
            k += 0 if pivset[c.rows.start] else 1
            continue
        blk = u[c.rows]
        n_terms[k] = c.rows.stop - c.rows.start
        abs_sum[k] = float(np.dot(blk, blk))
        k += 1
    bound = np.atleast_1d(np.asarray(fl_error_bound(n_terms, abs_sum), dtype=float))
    # division by a non-unit pivot coefficient adds one more rounding
    pc = np.abs(dual._pcoef)
    extra = np.where(pc == 1.0, 0.0, UNIT_ROUNDOFF * np.abs(margins[:nd]))
    bound[:nd] = np.nextafter(bound[:nd] + extra, np.inf)

    # objective: summation error plus the effect of derived-multiplier error
    obj = dual_objective(prog.g, u)
    terms = np.abs(prog.g * u)
    obj_err = fl_error_bound(len(terms), float(terms.sum())) if len(terms) else 0.0
    gp = np.abs(prog.g[dual.pivot_map])
    obj_err = math.nextafter(float(obj_err) + float(np.dot(gp, bound[:nd])), math.inf)
    obj_err = math.nextafter(obj_err * (1.0 + 1e-12), math.inf)
    return VerificationReport(margins, bound, n_terms, abs_sum, labels, obj, obj_err)


def _with_input(prog: ConicProgram, inp: ProgramInput) -> ConicProgram:
    cur = prog.input
    if cur is not None and cur == inp:
        return prog
    return prog.with_input(inp)


# -- certificates -------------------------------------------------------------

CERT_FORMAT = "minoverlap-certificate/1"


@dataclass
class Certificate:
    kind: str
    input: ProgramInput | None
    flags: dict
    point: DualPoint
    objective: float
    report: VerificationReport | None
    solver_meta: dict = field(default_factory=dict)
    lp_shape: tuple[int, int] | None = None
    _dual: DualProgram | None = field(default=None, repr=False)

    def dual(self) -> DualProgram:
        if self._dual is None:
            self._dual = build_dual(rebuild_program(self))
        return self._dual

    @property
    def N(self) -> int:
        return self.input.N if self.input is not None else self.lp_shape[0]

    def named(self) -> dict[str, float]:
        from .dual import named_multipliers
        return named_multipliers(self.dual(), self.point)


def rebuild_program(cert: Certificate) -> ConicProgram:
    if cert.kind == "lp":
        N, R = cert.lp_shape
        return build_lp(N, R)
    return build_full(cert.input, paper_compat=bool(cert.flags.get("paper_compat", False)))


def make_certificate(prog: ConicProgram, dual: DualProgram, pt: DualPoint,
                     solver_meta: dict | None = None) -> Certificate:
    rep = verify(dual, pt)
    kind = prog.meta.get("kind")
    return Certificate(
        kind=kind,
        input=prog.input,
        flags={"paper_compat": bool(prog.meta.get("paper_compat", False))},
        point=pt,
        objective=rep.certified_objective,
        report=rep,
        solver_meta=dict(solver_meta or {}),
        lp_shape=(prog.meta["N"], prog.meta["R"]) if kind == "lp" else None,
        _dual=dual,
    )


def _hexs(a) -> list[str]:
    return [float(v).hex() for v in np.asarray(a, dtype=float).ravel()]


def certificate_to_dict(cert: Certificate) -> dict:
    dual = cert.dual()
    prog = dual.source
    row_free = np.full(prog.num_rows, -1, dtype=np.int64)
    row_free[dual.free_rows] = np.arange(dual.num_free)
    point = {}
    for b in prog.blocks:
        idx = row_free[b.start:b.stop]
        if (idx >= 0).any():
            vals = np.where(idx >= 0, cert.point.free[np.maximum(idx, 0)], np.nan)
            point[b.family] = [None if np.isnan(v) else float(v).hex() for v in vals]
    inp = cert.input.to_dict() if cert.input is not None else {"N": cert.lp_shape[0], "R": cert.lp_shape[1]}
    return {
        "format": CERT_FORMAT,
        "kind": cert.kind,
        "input": inp,
        "flags": dict(sorted(cert.flags.items())),
        "point": point,
        "objective": float(cert.objective).hex(),
        "objective_decimal": repr(float(cert.objective)),
        "report": _jsonable(cert.report.summary()) if cert.report is not None else None,
        "solver_meta": _jsonable(cert.solver_meta),
    }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in sorted(x.items())}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def certificate_from_dict(d: dict, reverify: bool = True) -> Certificate:
    if d.get("format") != CERT_FORMAT:
        raise ValueError(f"unknown certificate format {d.get('format')!r}")
    kind = d["kind"]
    if kind == "lp":
        inp, shape = None, (int(d["input"]["N"]), int(d["input"]["R"]))
    else:
        inp, shape = ProgramInput.from_dict(d["input"]), None
    cert = Certificate(kind, inp, dict(d["flags"]), DualPoint(np.zeros(0)), float.fromhex(d["objective"]),
                       None, dict(d.get("solver_meta") or {}), shape)
    dual = cert.dual()
    prog = dual.source
    u = np.full(prog.num_rows, np.nan)
    for b in prog.blocks:
        vals = d["point"].get(b.family)
        if vals is None:
            continue
        if len(vals) != b.nrows:
            raise ValueError(f"family {b.family}: expected {b.nrows} values, got {len(vals)}")
        u[b.start:b.stop] = [np.nan if v is None else float.fromhex(v) for v in vals]
    free = u[dual.free_rows]
    if np.isnan(free).any():
        raise ValueError("certificate is missing free multipliers")
    cert.point = DualPoint(free)
    if reverify:
        cert.report = verify(dual, cert.point)
        cert.objective = cert.report.certified_objective
    return cert


def save_certificate(cert: Certificate, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(certificate_to_dict(cert), indent=1) + "\n")


def load_certificate(path, reverify: bool = True) -> Certificate:
    return certificate_from_dict(json.loads(Path(path).read_text()), reverify=reverify)


class EnvelopeError(AssertionError):
    pass


def check_envelope(value: float, what: str = "bound") -> float:
    """Every claimed lower bound on the minimum-overlap constant must sit
    inside the known range; anything else signals a construction bug."""
    if not LOWER_ENVELOPE - ENVELOPE_SLACK <= value <= UPPER_ENVELOPE:
        raise EnvelopeError(f"{what} {value!r} outside [{LOWER_ENVELOPE}, {UPPER_ENVELOPE}]")
    return value


# -- reuse and ellipses -------------------------------------------------------

@dataclass(frozen=True)
class ReuseData:
    """The pieces of a verified certificate that the reuse formula needs."""

    objective: float
    N: int
    h1: float
    h2: float
    p1: float
    p2: float
    y_mean: float
    y_mome: float
    y_cosup: float
    y_c1bnd: tuple[float, float]
    q1: float = -1.0
    q2: float = 1.0

    @classmethod
    def from_certificate(cls, cert: Certificate) -> "ReuseData":
        if cert.kind != "full":
            raise ValueError("reuse needs a certificate of the full program")
        y = cert.named()
        i = cert.input
        return cls(cert.objective, i.N, i.h1, i.h2, i.p1, i.p2, y["mean"], y["mome"], y["cosup"],
                   (y["c1bnd_1"], y["c1bnd_2"]), i.q1, i.q2)


def reuse_objective(cert, h1p: float, h2p: float, p1p: float, p2p: float,
                    q1p: float | None = None, q2p: float | None = None) -> float:
    """Lower bound for the box (h1p, h2p, p1p, p2p) from a certificate at (h1, h2, p1, p2).

    Uses obj + (N/4)(2(h1'-h1) y_mean + (h2^2-h2'^2) y_mome + 2(p2^2-p2'^2) y_cosup)
    + (p1'-p1) y_c1bnd[1] + (p2-p2') y_c1bnd[2].
    """
    d = cert if isinstance(cert, ReuseData) else ReuseData.from_certificate(cert)
    if (q1p is not None and q1p != d.q1) or (q2p is not None and q2p != d.q2):
        raise ValueError("reuse keeps the q-range fixed")
    if (h1p, h2p, p1p, p2p) == (d.h1, d.h2, d.p1, d.p2):
        return d.objective
    quad = 2.0 * (h1p - d.h1) * d.y_mean + (d.h2**2 - h2p**2) * d.y_mome \
        + 2.0 * (d.p2**2 - p2p**2) * d.y_cosup
    return d.objective + (d.N / 4.0) * quad + (p1p - d.p1) * d.y_c1bnd[0] + (d.p2 - p2p) * d.y_c1bnd[1]


@dataclass(frozen=True)
class EllipseRegion:
    """{(h, p): const + lin_h h + lin_p p - quad_h h^2 - quad_p p^2 >= 0}."""

    const: float
    lin_h: float
    lin_p: float
    quad_h: float
    quad_p: float
    threshold: float
    anchor: tuple[float, float, float]

    def value(self, h, p):
        h = np.asarray(h, dtype=float)
        p = np.asarray(p, dtype=float)
        return self.const + self.lin_h * h + self.lin_p * p - self.quad_h * h * h - self.quad_p * p * p

    def contains(self, h, p):
        return self.value(h, p) >= 0.0

    @property
    def kind(self) -> str:
        """'ellipse', 'empty', 'plane', 'half-plane', 'strip' or 'unbounded'."""
        qh, qp = self.quad_h, self.quad_p
        if qh > 0 and qp > 0:
            top = self.const + self.lin_h**2 / (4 * qh) + self.lin_p**2 / (4 * qp)
            return "ellipse" if top >= 0 else "empty"
        if qh == 0 and qp == 0:
            if self.lin_h == 0 and self.lin_p == 0:
                return "plane" if self.const >= 0 else "empty"
            return "half-plane"
        # one quadratic term vanishes
        lin_free = self.lin_p if qp == 0 else self.lin_h
        if lin_free != 0:
            return "unbounded"
        q, lin = (qh, self.lin_h) if qp == 0 else (qp, self.lin_p)
        return "strip" if self.const + lin**2 / (4 * q) >= 0 else "empty"

    @property
    def center(self) -> tuple[float, float] | None:
        if self.quad_h > 0 and self.quad_p > 0:
            return self.lin_h / (2 * self.quad_h), self.lin_p / (2 * self.quad_p)
        return None

    @property
    def semi_axes(self) -> tuple[float, float] | None:
        if self.kind != "ellipse":
            return None
        top = self.const + self.lin_h**2 / (4 * self.quad_h) + self.lin_p**2 / (4 * self.quad_p)
        return math.sqrt(top / self.quad_h), math.sqrt(top / self.quad_p)

    def gradient_bound(self, box) -> float:
        """Upper bound on |grad| of the quadratic over the rectangle, in the max-norm sense
        used by the covering check (|dg/dh| + |dg/dp|)."""
        (h0, h1), (p0, p1) = box
        gh = max(abs(self.lin_h - 2 * self.quad_h * h) for h in (h0, h1))
        gp = max(abs(self.lin_p - 2 * self.quad_p * p) for p in (p0, p1))
        return gh + gp

    def to_dict(self) -> dict:
        return {"const": self.const, "lin_h": self.lin_h, "lin_p": self.lin_p,
                "quad_h": self.quad_h, "quad_p": self.quad_p, "threshold": self.threshold,
                "anchor": list(self.anchor), "kind": self.kind}


def ellipse(cert, threshold: float) -> EllipseRegion:
    """Region of (h, p) with reuse bound at h1 = h2 = h, p1 = p2 = p above ``threshold``."""
    d = cert if isinstance(cert, ReuseData) else ReuseData.from_certificate(cert)
    N4 = d.N / 4.0
    const = d.objective + N4 * (-2.0 * d.h1 * d.y_mean + d.h2**2 * d.y_mome + 2.0 * d.p2**2 * d.y_cosup) \
        - d.p1 * d.y_c1bnd[0] + d.p2 * d.y_c1bnd[1] - threshold
    lin_h = 2.0 * N4 * d.y_mean
    lin_p = d.y_c1bnd[0] - d.y_c1bnd[1]
    quad_h = N4 * d.y_mome
    quad_p = 2.0 * N4 * d.y_cosup
    if quad_h < 0 or quad_p < 0:
        raise ValueError("negative moment or A_2 multiplier; certificate is not dual feasible")
    return EllipseRegion(const, lin_h, lin_p, quad_h, quad_p, threshold,
                         (0.5 * (d.h1 + d.h2), 0.5 * (d.p1 + d.p2), d.objective))


@dataclass
class CoverResult:
    covered: bool
    witness: tuple[float, float] | None
    cells: int
    delta: float
    assignment: dict = field(default_factory=dict)


def covers(regions: list[EllipseRegion], box, guard: float | None = None,
           delta: float | None = None, max_cells: int = 4_000_000) -> CoverResult:
    """Conservative grid check that the union of regions contains ``box``.

    ``box = ((h_lo, h_hi), (p_lo, p_hi))``.  A cell is accepted when one
    region has slack at least ``guard`` at the four corners and the center,
    where ``guard`` dominates the region's Lipschitz constant times the cell
    half-diagonal.  The quadratics are concave, so a nonnegative value at the
    corners already implies the whole cell; the guard keeps a margin against
    rounding.  The grid is refined until it succeeds or ``max_cells`` is hit.
    """
    if not regions:
        raise ValueError("need at least one region")
    (h0, h1), (p0, p1) = box
    if h0 > h1 or p0 > p1:
        raise ValueError("box bounds out of order")
    width = max(h1 - h0, p1 - p0, 1e-300)
    deltas = [delta] if delta is not None else [width / 2**k for k in range(0, 12)]
    witness, last = None, (0, deltas[0])
    for dlt in deltas:
        nh = max(1, math.ceil((h1 - h0) / dlt))
        npp = max(1, math.ceil((p1 - p0) / dlt))
        if nh * npp > max_cells:
            break
        hs = np.linspace(h0, h1, nh + 1)
        ps = np.linspace(p0, p1, npp + 1)
        H, P = np.meshgrid(hs, ps, indexing="ij")
        Hc = 0.5 * (H[:-1, :-1] + H[1:, 1:])
        Pc = 0.5 * (P[:-1, :-1] + P[1:, 1:])
        ok = np.zeros((nh, npp), dtype=bool)
        owner = np.full((nh, npp), -1)
        for k, reg in enumerate(regions):
            if reg.kind == "empty":
                continue
            half_diag = 0.5 * math.hypot((h1 - h0) / nh, (p1 - p0) / npp)
            g = reg.gradient_bound(box) * half_diag
            need = g if guard is None else max(guard, g)
            V = reg.value(H, P)
            cell = np.minimum.reduce([V[:-1, :-1], V[1:, :-1], V[:-1, 1:], V[1:, 1:], reg.value(Hc, Pc)])
            good = (cell >= need) & ~ok
            owner[good] = k
            ok |= good
        if ok.all():
            return CoverResult(True, None, nh * npp, dlt, {"owner_counts": np.bincount(owner.ravel(), minlength=len(regions)).tolist()})
        last = (nh * npp, dlt)
        bad = np.argwhere(~ok)[0]
        witness = (float(Hc[tuple(bad)]), float(Pc[tuple(bad)]))
        # a point outside every region can never be covered at finer grids
        if not any(r.value(*witness) >= 0 for r in regions):
            return CoverResult(False, witness, nh * npp, dlt)
        if delta is not None:
            break
    return CoverResult(False, witness, *last)
