import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import grid1, indicator
from polarpl.convolutions import check_hypothesis, minimal_h
from polarpl.grid import GridFunction, integrate_power
from polarpl.inequalities import (KINDS, InstanceGenerator, check_convex, generate, suite_instance, sweep,
                                  sweep_csv, verify_classical_pl, verify_lp, verify_polar_pl,
                                  verify_polar_pl_measure)
from polarpl.io import REPORT_SCHEMA

import jsonschema


def gauss(n=513):
    return grid1(lambda x: np.exp(-x * x / 2), -8, 8, n)


# --------------------------------------------------------------------- classical

def test_classical_gaussian_equality():
    f = gauss()
    rep = verify_classical_pl(f, f, 0.5, h=f)
    assert rep.verdict == "pass"
    assert rep.lhs == pytest.approx(np.sqrt(2 * np.pi), abs=1e-3)
    assert rep.rhs == pytest.approx(np.sqrt(2 * np.pi), abs=1e-3)


def test_classical_indicators():
    f, g = indicator(-1, 1), indicator(-3, 3)
    rep = verify_classical_pl(f, g, 0.5)
    assert rep.verdict == "pass"
    assert rep.lhs == pytest.approx(4, abs=2 * f.h)
    assert rep.rhs == pytest.approx(np.sqrt(12), abs=2 * f.h)


def test_classical_zero_h_fails():
    f, g = indicator(-1, 1), indicator(-3, 3)
    rep = verify_classical_pl(f, g, 0.5, h=f.with_values(np.zeros(f.shape)))
    assert rep.verdict == "fail"
    assert not rep.hypothesis_check["passed"]


# --------------------------------------------------------------------- polar

def test_polar_equality_case():
    phi = generate(InstanceGenerator("cvx0-max-affine", 3))
    f = phi.with_values(np.exp(-phi.values))
    rep = verify_polar_pl(f, f, 0.4, h=f)
    assert rep.verdict == "pass"
    assert abs(rep.margin) <= 1e-9 * rep.rhs


def test_polar_indicators():
    f, g = indicator(-1, 1), indicator(-3, 3)
    rep = verify_polar_pl(f, g, 0.5)
    assert rep.verdict == "pass"
    assert rep.lhs == pytest.approx(6, abs=2 * f.h)
    assert rep.rhs == pytest.approx(3, abs=2 * f.h)
    assert rep.details["mean_order_ok"]


def test_polar_degenerate_and_bad_lambda():
    f = indicator(-1, 1)
    zero = f.with_values(np.zeros(f.shape))
    with pytest.raises(ValueError, match="zero"):
        verify_polar_pl(f, zero, 0.5)
    with pytest.raises(ValueError):
        verify_polar_pl(f, f, 1.0)


def test_polar_sweep_small():
    reps = sweep("polar", 12, seed=0)
    assert all(r.verdict == "pass" for r in reps)
    assert all(r.details["mean_order_ok"] for r in reps)
    for r in reps:
        jsonschema.validate(r.to_dict(), REPORT_SCHEMA)


def test_sweep_csv_layout():
    reps = sweep("lp", 3, seed=5, shape=(129,))
    lines = sweep_csv(reps).strip().split("\n")
    assert lines[0] == "seed,lambda,p,lhs,rhs,margin,verdict,resolution"
    assert len(lines) == 4
    with pytest.raises(ValueError):
        sweep("nope", 1, 0)


# --------------------------------------------------------------------- weighted polar

def test_measure_with_zero_weight_matches_polar():
    f, g = indicator(-1, 1), indicator(-3, 3)
    zero = f.with_values(np.zeros(f.shape))
    a = verify_polar_pl_measure(f, g, 0.5, zero)
    b = verify_polar_pl(f, g, 0.5)
    assert a.lhs == b.lhs and a.rhs == b.rhs and a.verdict == b.verdict


def test_measure_gaussian_weight():
    alpha = grid1(lambda x: x * x / 2)
    f, g = indicator(-1, 1), indicator(-3, 3)
    eq = verify_polar_pl_measure(f, f, 0.5, alpha, h=f)
    assert eq.verdict == "pass" and abs(eq.margin) <= 1e-12
    rep = verify_polar_pl_measure(f, g, 0.5, alpha)
    assert rep.verdict == "pass" and rep.lhs >= rep.rhs


def test_measure_rejects_nonconvex_weight():
    alpha = grid1(lambda x: np.cos(x))
    f = indicator(-1, 1)
    with pytest.raises(ValueError, match="not convex"):
        verify_polar_pl_measure(f, f, 0.5, alpha)
    assert not check_convex(alpha)[0]
    assert check_convex(grid1(np.abs))[0]


# --------------------------------------------------------------------- Lp

@pytest.mark.parametrize("p,expected", [(1.0, 4.0), (2.0, 2 * np.sqrt(2))])
def test_lp_equality(p, expected):
    f = indicator(-1, 1)
    rep = verify_lp(f, f, p)
    assert rep.verdict == "pass"
    assert rep.lhs == pytest.approx(expected, rel=1e-2)
    assert rep.rhs == pytest.approx(expected, rel=1e-2)


def test_lp_errors():
    f = indicator(-1, 1)
    with pytest.raises(ValueError):
        verify_lp(f, f, 0.0)
    big = GridFunction.constant(np.inf, f.box, f.shape)
    with pytest.raises(ValueError):
        verify_lp(big, f, 1.0)


def test_lp_sweep_small():
    reps = sweep("lp", 9, seed=1, shape=(257,))
    assert all(r.verdict == "pass" for r in reps)


# --------------------------------------------------------------------- generators

def test_generator_is_deterministic():
    for kind in KINDS:
        a = generate(InstanceGenerator(kind, 11))
        b = generate(InstanceGenerator(kind, 11))
        assert np.array_equal(a.values, b.values)


def test_cvx0_generator_invariants():
    phi = generate(InstanceGenerator("cvx0-max-affine", 7, k=3))
    assert phi.evaluate(np.zeros((1, 1)))[0] == 0
    assert np.all(phi.values >= 0)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-4, 4, (2, 1000, 1))
    lam = rng.uniform(0, 1, (1000, 1))
    mid = phi.evaluate((1 - lam) * x + lam * y)
    ends = (1 - lam[:, 0]) * phi.evaluate(x) + lam[:, 0] * phi.evaluate(y)
    assert np.all(mid <= ends + 1e-9)


def test_log_concave_and_indicator_kinds():
    f = generate(InstanceGenerator("log-concave", 2))
    assert f.values.min() >= 0 and f.values.max() <= 1
    ind = generate(InstanceGenerator("indicator-convex", 4))
    x = ind.axes[0]
    on = x[ind.values == 1]
    assert on.min() < 0 < on.max()
    assert np.all(ind.values[(x >= on.min()) & (x <= on.max())] == 1)
    f2 = generate(InstanceGenerator("log-concave", 2, n=2, shape=(33, 33)))
    assert f2.shape == (33, 33)
    with pytest.raises(ValueError):
        InstanceGenerator("mystery")


# --------------------------------------------------------------------- properties

@settings(max_examples=15)
@given(st.sampled_from(["polar", "classical", "lp"]), st.integers(0, 500))
def test_minimal_h_is_sound(suite, index):
    f, g, lam, _, _ = suite_instance(suite, index, 0, shape=(129,))
    kind = {"polar": "polar", "classical": "classical", "lp": "lp"}[suite]
    lam = 0.5 if suite == "lp" else lam
    if suite != "lp":
        c = max(1.0, f.values.max(), g.values.max())
        f, g = f.with_values(f.values / c), g.with_values(g.values / c)
    h = minimal_h(f, g, lam, kind)
    assert check_hypothesis(f, g, h, lam, kind).passed


@settings(max_examples=15)
@given(st.integers(0, 500), st.floats(0, 1))
def test_larger_h_keeps_pass(index, bump):
    f, g, lam, _, _ = suite_instance("polar", index, 0, shape=(129,))
    rep = verify_polar_pl(f, g, lam)
    assert rep.verdict == "pass"
    h = minimal_h(f, g, lam, "polar")
    c = rep.details["rescale"]
    h2 = h.with_values(c * h.values + bump)
    assert verify_polar_pl(f, g, lam, h=h2).verdict == "pass"


@pytest.mark.parametrize("index", range(6))
def test_halving_the_grid_keeps_pass(index):
    fine = suite_instance("polar", index, 0, shape=(513,))
    coarse = suite_instance("polar", index, 0, shape=(257,))
    a = verify_polar_pl(fine[0], fine[1], fine[2])
    b = verify_polar_pl(coarse[0], coarse[1], coarse[2])
    assert b.verdict == "pass" and a.verdict == "pass"


def test_refine_flag_records_coarse_margin():
    f, g = indicator(-1, 1), indicator(-3, 3)
    rep = verify_polar_pl(f, g, 0.5, refine=True)
    assert rep.verdict == "pass" and rep.details["coarse_margin"] > 0


def test_lp_norm_matches_integral_of_power():
    f = indicator(-1, 1)
    assert integrate_power(f, 2.0) == pytest.approx(2.0, rel=1e-2)
