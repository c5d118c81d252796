import json
import math

import mpmath as mp
import numpy as np
import pytest

from minoverlap.certify import (UNIT_ROUNDOFF, Certificate, EllipseRegion, EnvelopeError, ReuseData,
                                certificate_from_dict, certificate_to_dict, check_envelope, covers, ellipse,
                                fl_error_bound, load_certificate, reuse_objective, save_certificate, verify)
from minoverlap.cli import certify_program
from minoverlap.dual import DualPoint, eval as dual_eval
from minoverlap.programs import ProgramInput, build_full, build_lp
from minoverlap.solver import SolverOptions

PUBLISHED = ReuseData(objective=0.37905, N=25000, h1=0.015, h2=0.015, p1=0.385, p2=0.385,
                  y_mean=0.0000014902, y_mome=0.00010235, y_cosup=0.000038011, y_c1bnd=(0.35962, 0.0),
                  q1=-0.02, q2=0.02)


def test_fl_error_bound_examples():
    assert fl_error_bound(1, 123.0) == 0.0
    u = mp.mpf(2) ** -53
    exact2 = u * (1 + u) / (1 - u)
    assert mp.mpf(fl_error_bound(2, 1.0)) >= exact2
    assert fl_error_bound(2, 1.0) == pytest.approx(1.11e-16, rel=1e-2)
    exact = (10**5 - 1) * u * (1 + u) / (1 - (10**5 - 1) * u)
    assert mp.mpf(fl_error_bound(10**5, 1.0)) >= exact
    assert fl_error_bound(10**5, 1.0) == pytest.approx(1.11e-11, rel=1e-2)
    ns = np.array([1, 2, 10, 100, 10**4])
    assert np.all(np.diff(fl_error_bound(ns, np.ones(5))) > 0)
    with pytest.raises(ValueError):
        fl_error_bound(2**54, 1.0)


def test_parseval_cone_scenario():
    # 2T = 14000 multipliers below 5e-4 under the norm: the bound stays far below 1e-11
    T = 7000
    z = np.full(2 * T, 5e-4)
    y = 1.2 * np.linalg.norm(z)
    bound = fl_error_bound(2 * T + 1, y * y + float(z @ z))
    assert bound < 1e-13
    assert y * y - float(z @ z) > 1e-11 > bound


def test_tiny_margin_on_long_row_fails():
    assert not 1e-16 > fl_error_bound(10**4, 1.0)


@pytest.fixture(scope="module")
def cert():
    inp = ProgramInput(N=200, T=60, R=6, h1=0.01, h2=0.05, p1=0.33, p2=0.4, q1=-0.02, q2=0.02)
    return certify_program(build_full(inp), SolverOptions(max_iters=3000))


@pytest.fixture(scope="module")
def anchor_cert():
    inp = ProgramInput(N=200, T=60, R=6, h1=0.015, h2=0.015, p1=0.385, p2=0.385, q1=-0.02, q2=0.02)
    return certify_program(build_full(inp), SolverOptions(max_iters=3000))


def test_verify_report_fields(cert):
    rep = cert.report
    assert rep.ok
    assert len(rep.margin) == len(rep.error_bound) == len(rep.labels) == len(rep.n_terms)
    np.testing.assert_array_equal(rep.passed, rep.margin > rep.error_bound)
    assert rep.unit_roundoff == 2.0**-53 == UNIT_ROUNDOFF
    assert cert.objective == rep.certified_objective < rep.objective_raw
    s = rep.summary()
    assert s["pass"] and s["num_failed"] == 0


def test_random_summation_orders_keep_signs(cert):
    dual = cert.dual()
    u = dual.expand(cert.point.free)
    G = dual._G
    free = u[dual.free_rows]
    phi = dual.source.objective
    rng = np.random.default_rng(4)
    for j in range(0, G.shape[1], 7):
        a, b = G.indptr[j], G.indptr[j + 1]
        terms = np.concatenate([[phi[j]], -(G.data[a:b] * free[G.indices[a:b]])])
        for _ in range(10):
            s = 0.0
            for t in rng.permutation(terms).tolist():
                s += t
            assert s / dual._pcoef[j] > 0


def test_tampered_point_fails(cert):
    free = cert.point.free.copy()
    free[:] = -1.0
    rep = verify(cert.dual(), DualPoint(free))
    assert not rep.ok and len(rep.failures) > 0


def test_certificate_round_trip(cert, tmp_path):
    save_certificate(cert, tmp_path / "c.json")
    back = load_certificate(tmp_path / "c.json")
    assert back.point.free.tobytes() == cert.point.free.tobytes()
    assert back.objective == cert.objective
    assert back.report.ok
    assert back.flags == {"paper_compat": False}
    save_certificate(back, tmp_path / "d.json")
    assert (tmp_path / "c.json").read_bytes() == (tmp_path / "d.json").read_bytes()


def test_certificate_rejects_bad_data(cert):
    d = certificate_to_dict(cert)
    bad = json.loads(json.dumps(d))
    bad["format"] = "other"
    with pytest.raises(ValueError):
        certificate_from_dict(bad)
    bad = json.loads(json.dumps(d))
    fam = next(iter(bad["point"]))
    bad["point"][fam] = bad["point"][fam][:-1]
    with pytest.raises(ValueError):
        certificate_from_dict(bad)
    # a tampered multiplier is caught by re-verification, not trusted
    bad = json.loads(json.dumps(d))
    vals = bad["point"]["mome"]
    bad["point"]["mome"] = [(-1.0).hex() if v is not None else None for v in vals]
    assert not certificate_from_dict(bad).report.ok


def test_compat_flag_is_recorded(tmp_path):
    inp = ProgramInput(N=60, T=20, R=3, h1=0.1, h2=0.3, p1=0.55, p2=0.65, q1=-0.25, q2=-0.15)
    c = certify_program(build_full(inp, paper_compat=True), SolverOptions(max_iters=1000))
    save_certificate(c, tmp_path / "c.json")
    back = load_certificate(tmp_path / "c.json")
    assert back.flags == {"paper_compat": True}
    assert back.dual().source.meta["paper_compat"] is True


def test_lp_certificate_round_trip(tmp_path):
    c = certify_program(build_lp(50, 3), SolverOptions(max_iters=2000))
    save_certificate(c, tmp_path / "lp.json")
    back = load_certificate(tmp_path / "lp.json")
    assert back.kind == "lp" and back.lp_shape == (50, 3)
    assert back.objective == c.objective


def test_envelope_check():
    assert check_envelope(0.3) == 0.3
    assert check_envelope(0.25 - 5e-9) == 0.25 - 5e-9
    for bad in (0.2, 0.39):
        with pytest.raises(EnvelopeError):
            check_envelope(bad)


def test_published_reuse_example():
    assert reuse_objective(PUBLISHED, 0.015, 0.015, 0.385, 0.385) == 0.37905
    drop = reuse_objective(PUBLISHED, 0.015, 0.015, 0.395, 0.395) - 0.37905
    # raising p1 tightens the row c_1 - p1 >= 0, so the y_c1bnd[1] term enters with (p1' - p1)
    expected = (0.395 - 0.385) * 0.35962 + (25000 / 4) * 2 * (0.385**2 - 0.395**2) * 0.000038011
    assert drop == pytest.approx(expected, rel=1e-12)
    assert drop == pytest.approx(0.0036 - 0.0037, abs=1e-4)
    assert 0.37905 + drop < 0.379005
    reg = ellipse(PUBLISHED, 0.379005)
    assert reg.kind == "ellipse" and reg.contains(0.015, 0.385)
    assert not reg.contains(0.015, 0.395)
    with pytest.raises(ValueError):
        reuse_objective(PUBLISHED, 0.015, 0.015, 0.385, 0.385, q1p=-0.03)


def test_reuse_matches_dual_objective(anchor_cert):
    """The reuse formula is the dual objective of the same point at the new box."""
    c = anchor_cert
    dual = c.dual()
    d = ReuseData.from_certificate(c)
    raw = c.report.objective_raw
    for h, p in [(0.02, 0.38), (0.0, 0.39), (0.015, 0.375)]:
        new = c.input.with_box(h1=h, h2=h, p1=p, p2=p)
        direct = dual_eval(dual, c.point, new).objective
        via = reuse_objective(d, h, h, p, p) - c.objective + raw
        assert via == pytest.approx(direct, abs=1e-12)
    assert reuse_objective(c, *(c.input.h1, c.input.h2, c.input.p1, c.input.p2)) == c.objective


def test_ellipse_membership(anchor_cert):
    reg = ellipse(anchor_cert, anchor_cert.objective - 1e-3)
    assert reg.quad_h >= 0 and reg.quad_p >= 0
    rng = np.random.default_rng(9)
    hs = rng.uniform(-0.1, 0.15, 10_000)
    ps = rng.uniform(0.3, 0.45, 10_000)
    d = ReuseData.from_certificate(anchor_cert)
    vals = np.array([reuse_objective(d, h, h, p, p) for h, p in zip(hs, ps)]) - reg.threshold
    clear = np.abs(vals) > 1e-12
    np.testing.assert_array_equal(reg.contains(hs, ps)[clear], (vals >= 0)[clear])


def test_degenerate_regions():
    zero = ReuseData(0.3, 100, 0.0, 0.0, 0.3, 0.3, 0.0, 0.0, 0.0, (0.0, 0.0))
    assert ellipse(zero, 0.31).kind == "empty"
    assert ellipse(zero, -1e9).kind == "plane"
    assert ellipse(ReuseData(0.3, 100, 0.0, 0.0, 0.3, 0.3, 1e-3, 0.0, 0.0, (0.0, 0.0)), 0.2).kind == "half-plane"
    assert ellipse(ReuseData(0.3, 100, 0.0, 0.0, 0.3, 0.3, 0.0, 1e-3, 0.0, (0.0, 0.0)), 0.2).kind == "strip"


def test_covers_basics():
    plane = EllipseRegion(1.0, 0, 0, 0, 0, 0.0, (0, 0, 1))
    assert covers([plane], ((0, 1), (0, 1))).covered
    disc = EllipseRegion(1.0, 0, 0, 1.0, 1.0, 0.0, (0, 0, 1))
    box = ((-2.0, 2.0), (-2.0, 2.0))
    res = covers([disc], box)
    assert not res.covered
    assert not disc.contains(*res.witness)
    assert res.cells > 0
    assert covers([disc], ((-0.5, 0.5), (-0.5, 0.5))).covered


def test_covers_monotone():
    a = EllipseRegion(1.0, 0, 0, 1.0, 1.0, 0.0, (0, 0, 1))
    b = EllipseRegion(1.0 - 1.0, 2.0, 0, 1.0, 1.0, 0.0, (1, 0, 1))   # unit disc at (1, 0)
    box = ((-0.5, 1.5), (-0.4, 0.4))
    assert not covers([a], box).covered
    assert covers([a, b], box).covered
    assert covers([a, b, EllipseRegion(-1.0, 0, 0, 0, 0, 0, (0, 0, 0))], box).covered
    assert covers([a, b], ((0.0, 1.0), (-0.2, 0.2))).covered
    with pytest.raises(ValueError):
        covers([], box)
