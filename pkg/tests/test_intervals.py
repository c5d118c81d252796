import math

import numpy as np
import pytest

from minoverlap import oracle
from minoverlap.intervals import (AverageVector, Discretization, build_envelopes, cos_bracket,
                                  mean_bracket, moment_bracket, sin_bracket)

from conftest import load
from helpers import half_coeff


def test_discretization():
    d = Discretization(2000)
    assert d.L == 0.001
    assert d.L_exact * d.N == 2
    with pytest.raises(ValueError):
        Discretization(0)


def test_envelope_examples():
    env = build_envelopes(Discretization(2), 1)
    assert env.alpha_minus[0, 1] == pytest.approx(-math.pi / 2, abs=1e-15)
    assert env.alpha_minus[0, 0] == pytest.approx(math.cos(math.pi / 4) - math.pi / 4, abs=1e-15)
    assert env.alpha_minus[0, 0] == pytest.approx(-0.07829, abs=1e-5)
    assert env.beta_plus[0, 0] == pytest.approx(1.49250, abs=1e-5)


@pytest.mark.parametrize("N,R", [(2, 3), (7, 2), (50, 5)])
def test_envelopes_contain_trig_values(N, R):
    disc = Discretization(N)
    env = build_envelopes(disc, R)
    L = disc.L
    t = np.linspace(0.0, 1.0, 10_000)
    for j in range(N):
        x = (j + t) * L
        for m in range(1, 2 * R + 1):
            cs, sn = np.cos(np.pi * m * x / 2), np.sin(np.pi * m * x / 2)
            assert env.alpha_minus[j, m - 1] <= cs.min() and cs.max() <= env.alpha_plus[j, m - 1]
            assert env.beta_minus[j, m - 1] <= sn.min() and sn.max() <= env.beta_plus[j, m - 1]


def test_envelope_width():
    disc = Discretization(64)
    env = build_envelopes(disc, 4)
    m = np.arange(1, 9)
    np.testing.assert_allclose(env.alpha_plus - env.alpha_minus, np.broadcast_to(np.pi * m * disc.L / 2, (64, 8)),
                               rtol=0, atol=1e-15)


def test_zero_averages_give_zero_brackets():
    disc = Discretization(10)
    env = build_envelopes(disc, 2)
    z = AverageVector.constant(10, 0.0)
    for m in (1, 2, 3):
        assert cos_bracket(z, env, m, disc.L) == (0.0, 0.0)
        assert sin_bracket(z, env, m, disc.L) == (0.0, 0.0)
    assert mean_bracket(z, disc.L) == (0.0, 0.0)
    assert moment_bracket(z, disc.L) == (0.0, 0.0)


def test_uniform_quarter_bracket_A2():
    disc = Discretization(2000)
    env = build_envelopes(disc, 1)
    lo, hi = cos_bracket(AverageVector.constant(2000, 0.25), env, 2, disc.L)
    assert lo <= 0.0 <= hi
    assert hi - lo <= math.pi * disc.L


def test_even_averages_sine_and_mean_symmetric():
    disc = Discretization(100)
    env = build_envelopes(disc, 2)
    rng = np.random.default_rng(3)
    w = rng.uniform(0, 1, 100)
    w *= 0.5 * disc.N / (2 * w.sum())
    avg = AverageVector(w, w)
    for m in (1, 2, 3):
        lo, hi = sin_bracket(avg, env, m, disc.L)
        assert lo <= 0 <= hi
        assert lo == pytest.approx(-hi, abs=1e-14)
    lo, hi = mean_bracket(avg, disc.L)
    assert lo == pytest.approx(-hi, abs=1e-14)
    assert hi - lo == pytest.approx(2 * disc.L * 0.5, rel=1e-12)


def test_dimension_mismatch():
    env = build_envelopes(Discretization(10), 1)
    with pytest.raises(ValueError):
        cos_bracket(AverageVector.constant(9, 0.1), env, 1, 0.2)
    with pytest.raises(ValueError):
        sin_bracket(AverageVector.constant(10, 0.1), env, 3, 0.2)


@pytest.mark.parametrize("name", ["right_half", "constant_half", "shifted_step", "cosine_staircase"])
def test_brackets_contain_exact_quantities(name):
    f = load(name)
    M = oracle.convolve(f)
    knots = [float(x) for x in M.breakpoints]
    Mf = lambda x: float(M(x))
    EM, SM = float(oracle.mean(M)), float(oracle.second_moment(M))
    prev = None
    for N in (250, 500, 1000):
        disc = Discretization(N)
        env = build_envelopes(disc, 2)
        avg = oracle.averages(M, N)
        widths = []
        for m in (1, 2, 3, 4):
            A = half_coeff(Mf, m, "cos", -2, 2, knots)
            B = half_coeff(Mf, m, "sin", -2, 2, knots)
            lo, hi = cos_bracket(avg, env, m, disc.L)
            assert lo - 1e-12 <= A <= hi + 1e-12
            widths.append(hi - lo)
            lo, hi = sin_bracket(avg, env, m, disc.L)
            assert lo - 1e-12 <= B <= hi + 1e-12
        lo, hi = mean_bracket(avg, disc.L)
        assert lo <= EM <= hi
        widths.append(hi - lo)
        lo, hi = moment_bracket(avg, disc.L)
        assert lo <= SM <= hi
        widths.append(hi - lo)
        if prev is not None:
            # widths are O(L)
            np.testing.assert_allclose(np.array(widths) / prev, 0.5, rtol=0.05)
        prev = np.array(widths)


def test_known_moments_of_oracle_functions():
    M = oracle.convolve(load("right_half"))
    assert float(oracle.mean(M)) == -1
    lo, hi = moment_bracket(oracle.averages(M, 1000), 0.002)
    assert lo <= 7 / 6 <= hi
    M = oracle.convolve(load("constant_half"))
    lo, hi = moment_bracket(oracle.averages(M, 1000), 0.002)
    assert lo <= 2 / 3 <= hi
