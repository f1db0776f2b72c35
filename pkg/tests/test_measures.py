from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import cvx0
from polarpl.grid import INF, GridFunction, integrate_exp_neg
from polarpl.measures import (DivergentIntegral, NamedMeasure, PMean, borell_kappa, kappa_concavity_check,
                              measure_kappa_from_density, measure_of_epi, p_mean, parse_measure)


def const_on_unit(c, n=301):
    return GridFunction.from_callable(lambda x: np.where((x[:, 0] >= 0) & (x[:, 0] <= 1), c, INF),
                                      ((-1.0, 2.0),), (n,))


# --------------------------------------------------------------------- p-means

def test_p_mean_examples():
    assert p_mean(2, 4, 0.5, 1) == 3
    assert p_mean(2, 8, 0.5, 0) == pytest.approx(4)
    assert p_mean(3, 6, 0.5, -1) == pytest.approx(4)
    assert p_mean(3, 6, 0.5, INF) == 6 and p_mean(3, 6, 0.5, -INF) == 3
    assert p_mean(0, 5, 0.3, -2) == 0 and p_mean(0, 5, 0.3, 0) == 0
    assert p_mean(2, 7, 0.0, -3) == 2 and p_mean(2, 7, 1.0, 5) == 7
    assert PMean(1, 0.25)(4, 8) == 5
    assert p_mean(0, 0, 0.5, 2) == 0 and p_mean(1e-151, 1.0, 0.5, -3) > 0


def test_p_mean_rejects_bad_input():
    with pytest.raises(ValueError):
        p_mean(-1, 2, 0.5, 1)
    with pytest.raises(ValueError):
        p_mean(1, 2, 1.5, 1)
    with pytest.raises(ValueError):
        PMean(1, -0.1)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 1))
def test_p_mean_monotone_in_p(a, b, lam):
    ps = [-INF, -3, -1, -0.5, 0, 0.5, 1, 2, INF]
    vals = [p_mean(a, b, lam, p) for p in ps]
    for lo, hi in zip(vals, vals[1:]):
        assert lo <= hi * (1 + 1e-12) + 1e-300


@given(st.floats(1e-3, 100), st.floats(1e-3, 100), st.floats(0.01, 0.99), st.floats(-3, 3))
def test_p_mean_between_min_and_max(a, b, lam, p):
    m = p_mean(a, b, lam, p)
    assert min(a, b) * (1 - 1e-12) <= m <= max(a, b) * (1 + 1e-12)


# --------------------------------------------------------------------- Borell

def test_borell_examples():
    for n in (1, 2, 5):
        assert borell_kappa(0, n) == 0
    for n in (1, 2, 3):
        assert borell_kappa(-1, n + 1) == Fraction(-1, n + 2)
    for p, n in ((3, 1), (5, 2), (7, 3)):
        assert borell_kappa(Fraction(1, p), n + 1) == Fraction(1, p - (n + 1))
    assert borell_kappa(-INF, 3) == pytest.approx(-1 / 3)
    with pytest.raises(ZeroDivisionError):
        borell_kappa(Fraction(1, 2), 2)
    with pytest.raises(ZeroDivisionError):
        borell_kappa(0.5, 2)


@given(st.fractions(-5, Fraction(1, 5)), st.integers(1, 4))
def test_borell_round_trip_is_exact(k, n):
    if 1 - n * k == 0:
        return
    kn = borell_kappa(k, n)
    if 1 + n * kn > 0:
        assert measure_kappa_from_density(kn, n) == k


# --------------------------------------------------------------------- kappa concavity

def test_kappa_concavity_examples():
    gauss = lambda x: np.exp(-0.5 * (x * x).sum(axis=1))
    assert kappa_concavity_check(gauss, 0.0, ((-3, 3), (-3, 3))).passed
    nu = NamedMeasure("nu", 1)
    assert kappa_concavity_check(nu.density, -1 / 3, nu.sample_box()).passed
    two = lambda x: (((x[:, 0] > -2) & (x[:, 0] < -1)) | ((x[:, 0] > 1) & (x[:, 0] < 2))).astype(float)
    rep = kappa_concavity_check(two, 0.0, ((-2, 2),), seed=3)
    assert not rep.passed
    w = rep.witness
    mid = (1 - w["lam"]) * w["x"][0] + w["lam"] * w["y"][0]
    assert -1 <= mid <= 1 and w["lhs"] == 0


@pytest.mark.parametrize("tag,p", [("lebesgue", None), ("mu", None), ("nu", None), ("mu_p", 2.0),
                                   ("nu_p", 2.0), ("nu_p", 0.5), ("mu_p", 3.0)])
@pytest.mark.parametrize("n", [1, 2])
def test_every_measure_density_is_kappa_concave(tag, p, n):
    m = NamedMeasure(tag, n, p)
    rep = kappa_concavity_check(m.density, m.density_kappa, m.sample_box(), sample_count=10_000, seed=n)
    assert rep.passed, rep.witness


def test_named_measure_validation():
    with pytest.raises(ValueError):
        NamedMeasure("bogus")
    with pytest.raises(ValueError):
        NamedMeasure("mu_p", 1, None)
    with pytest.raises(ValueError):
        NamedMeasure("weighted", 1)
    assert parse_measure("nu_p:2").p == 2.0
    assert parse_measure("mu", 2).ambient_dim == 3


# --------------------------------------------------------------------- epi-graph measures

def test_measure_of_epi_examples():
    assert measure_of_epi(const_on_unit(1.0), NamedMeasure("mu")) == pytest.approx(np.exp(-1), abs=1e-4)
    assert measure_of_epi(const_on_unit(2.0), NamedMeasure("mu_p", 1, 2.0)) == pytest.approx(0.25, abs=1e-4)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mu_epi_equals_nu_of_f_image(seed):
    phi = cvx0(seed, shape=(257,))
    a = measure_of_epi(phi, NamedMeasure("mu"))
    b = measure_of_epi(phi, NamedMeasure("nu"), "F-epi")
    assert abs(a - b) <= 1e-3 * a


@pytest.mark.parametrize("seed", [0, 1])
def test_mu_p_epi_equals_nu_p_of_f_image(seed):
    phi = cvx0(seed, shape=(257,))
    phi = phi.with_values(phi.values + 1)
    m = NamedMeasure("mu_p", 1, 2.0)
    a = measure_of_epi(phi, m)
    b = measure_of_epi(phi, NamedMeasure("nu_p", 1, 2.0), "F-epi")
    assert abs(a - b) <= 1e-3 * a


def test_mu_epi_equals_exp_integral_2d():
    phi = cvx0(5, n=2, shape=(65, 65))
    assert measure_of_epi(phi, NamedMeasure("mu", 2)) == pytest.approx(integrate_exp_neg(phi), rel=1e-9)


def test_divergent_integrals_are_reported():
    phi = cvx0(0, shape=(129,))
    with pytest.raises(DivergentIntegral):
        measure_of_epi(phi, NamedMeasure("lebesgue"))
    # phi vanishes at the origin, so phi^-p blows up
    with pytest.raises(DivergentIntegral):
        measure_of_epi(phi, NamedMeasure("mu_p", 1, 2.0))
    with pytest.raises(ValueError):
        measure_of_epi(phi, NamedMeasure("mu", 2))
