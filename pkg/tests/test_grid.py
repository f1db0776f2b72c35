import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import grid1, indicator
from polarpl.grid import (INF, GridFunction, Quadrature, eval_at, integrate_exp_neg, integrate_refined,
                          integrate_power, lp_norm)
from polarpl.measures import NamedMeasure


def test_constant_inside_and_outside_box():
    f = GridFunction.constant(0.0, ((-1.0, 1.0),), 11)
    assert eval_at(f, 0.37) == 0.0
    assert eval_at(f, 2.0) == INF


def test_interpolation_of_square():
    f = grid1(lambda x: x * x, -1.0, 1.0, 1025)
    assert abs(eval_at(f, 0.5) - 0.25) <= 1e-5


def test_infinite_stencil_node_gives_inf():
    f = indicator(-1.0, 1.0, inf=True)
    assert eval_at(f, 0.0) == 0.0
    assert eval_at(f, 3.0) == INF
    # exactly at the last finite node the infinite neighbour carries no weight
    assert eval_at(f, 1.0) == 0.0


def test_two_dimensional_bilinear():
    f = GridFunction.from_callable(lambda x: 2 * x[:, 0] + 3 * x[:, 1], ((0, 1), (0, 2)), (5, 9))
    pts = np.array([[0.3, 1.7], [0.91, 0.05]])
    assert np.allclose(f.evaluate(pts), 2 * pts[:, 0] + 3 * pts[:, 1])


def test_rejects_bad_grids():
    with pytest.raises(ValueError):
        GridFunction(((1.0, 0.0),), np.zeros(3))
    with pytest.raises(ValueError):
        GridFunction(((0.0, 1.0),), np.zeros(1))
    with pytest.raises(ValueError):
        GridFunction(((0.0, 1.0),), np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        GridFunction(((0, 1),) * 3, np.zeros((2, 2, 2)))


def test_integrate_exp_neg_examples():
    assert integrate_exp_neg(GridFunction.constant(0.0, ((-1, 1),), 65)) == pytest.approx(2.0, abs=1e-12)
    g = grid1(lambda x: x * x / 2, -8, 8, 1025)
    assert integrate_exp_neg(g, quad=Quadrature("midpoint", 3)) == pytest.approx(np.sqrt(2 * np.pi), abs=1e-4)
    assert integrate_exp_neg(GridFunction.constant(INF, ((-1, 1),), 9)) == 0.0


def test_integrate_exp_neg_density_must_be_finite():
    alpha = grid1(lambda x: np.where(x > 0.5, -1e4, 0.0), -1, 1, 9)
    m = NamedMeasure("weighted", 1, alpha=alpha)
    with np.errstate(over="ignore"), pytest.raises(ValueError, match="non-finite density"):
        integrate_exp_neg(GridFunction.constant(0.0, ((-1, 1),), 9), m)


def test_lp_norm_examples():
    f = indicator(0.0, 1.0, -1.0, 2.0, 3001)
    assert lp_norm(f, 2, Quadrature("midpoint", 2)) == pytest.approx(1.0, abs=2e-3)
    e = grid1(lambda x: np.exp(-np.abs(x)), -20, 20, 4001)
    assert lp_norm(e, 1, Quadrature("midpoint", 1)) == pytest.approx(2.0, abs=1e-4)
    with pytest.raises(ValueError):
        lp_norm(e, 0.0)
    with pytest.raises(ValueError):
        integrate_power(GridFunction.constant(INF, ((0, 1),), 5), 1.0)


@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_lp_norm_homogeneous(seed, c):
    rng = np.random.default_rng(seed)
    f = GridFunction(((-1.0, 1.0),), rng.uniform(0, 1, 33))
    for p in (0.5, 1.0, 2.0):
        assert lp_norm(f.with_values(c * f.values), p) == pytest.approx(c * lp_norm(f, p), rel=1e-12)


def test_refinement_error_decreases_for_smooth_integrand():
    fn = lambda x: np.exp(-x[:, 0] ** 2)
    errs = [integrate_refined(fn, ((-3, 3),), (17,), "midpoint", k)[1] for k in (1, 2, 3, 4)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


@given(st.integers(0, 10_000))
def test_eval_monotone_and_integral_antitone(seed):
    rng = np.random.default_rng(seed)
    f = GridFunction(((-1.0, 1.0), (0.0, 2.0)), rng.uniform(0, 3, (9, 7)))
    g = f.with_values(f.values + rng.uniform(0, 1, (9, 7)))
    pts = rng.uniform([-1.2, -0.2], [1.2, 2.2], (200, 2))
    fv, gv = f.evaluate(pts), g.evaluate(pts)
    assert np.all(fv <= gv)
    assert integrate_exp_neg(f) >= integrate_exp_neg(g)


def test_quadrature_validation():
    with pytest.raises(ValueError):
        Quadrature("simpson")
    with pytest.raises(ValueError):
        Quadrature("midpoint", -1)
