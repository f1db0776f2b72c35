"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with pytest or directly with ``python3 tests/test_acceptance.py``.
"""
import functools
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import cvx0, grid1, indicator  # noqa: E402
from polarpl.busemann import (BusemannInstance, build_k_lambda, random_embedding, random_instance,  # noqa: E402
                              reduction_check, shrink, symmetric_instance, verify_busemann)
from polarpl.convolutions import (ConvolutionParams, check_hypothesis, ginf_conv,  # noqa: E402
                                  ginf_conv_epi_oracle, minimal_h)
from polarpl.grid import INF, integrate_exp_neg, integrate_power  # noqa: E402
from polarpl.inequalities import (InstanceGenerator, generate, suite_instance, sweep,  # noqa: E402
                                  verify_classical_pl, verify_lp, verify_polar_pl, verify_polar_pl_measure)
from polarpl.measures import NamedMeasure, borell_kappa, measure_of_epi  # noqa: E402
from polarpl.transforms import f_jacobian_abs_det, f_map, gauge, legendre, polarity  # noqa: E402


def _line(k, ok, msg):
    return f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {msg}"


def _report(k, ok, msg, capsys=None):
    line = _line(k, ok, msg)
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


def _sup(a, b, mask):
    return float(np.abs(a - b)[mask].max())


# --------------------------------------------------------------------- 1, 2: transforms

# output grid multiplier and gauge box factor per dimension
TRANSFORM_SETTINGS = {1: (8, 4.0), 2: (4, 1.0)}


@functools.lru_cache(maxsize=None)
def transform_suite():
    """Involution errors and timings on 50 (n=1) + 20 (n=2) Cvx0 instances, in units of h."""
    rows = []
    elapsed = 0.0
    for n, count in ((1, 50), (2, 20)):
        mult, fac = TRANSFORM_SETTINGS[n]
        for seed in range(count):
            phi = cvx0(1000 + seed, n=n)
            M = (phi.shape[0] - 1) * mult + 1
            region = phi.values <= 10
            t = time.perf_counter()
            A = polarity(phi, out_shape=(M,) * n)
            AA = polarity(A, out_box=phi.box, out_shape=phi.shape)
            Lg = legendre(phi, out_shape=(M,) * n)
            LL = legendre(Lg, out_box=phi.box, out_shape=phi.shape)
            J = gauge(phi, out_shape=(M,) * n, factor=fac)
            JJ = gauge(J, out_box=phi.box, out_shape=phi.shape)
            elapsed += time.perf_counter() - t
            LA = legendre(A, out_box=phi.box, out_shape=phi.shape)
            AL = polarity(Lg, out_box=phi.box, out_shape=phi.shape)
            Jd = gauge(phi, out_box=phi.box, out_shape=phi.shape)
            inv = [_sup(X.values, phi.values, region) / phi.h for X in (AA, LL, JJ)]
            ids = [_sup(X.values, Jd.values, region) / phi.h for X in (LA, AL)]
            rows.append((n, seed, inv, ids))
    return rows, elapsed


def criterion_1(capsys=None):
    rows, elapsed = transform_suite()
    worst = max(max(r[2]) for r in rows)
    ok = worst <= 5 and elapsed <= 120
    return _report(1, ok, f"involutions on {len(rows)} instances: worst {worst:.2f} h (<= 5 h), "
                          f"{elapsed:.1f} s (<= 120 s)", capsys)


def criterion_2(capsys=None):
    rows, _ = transform_suite()
    worst = max(max(r[3]) for r in rows)
    wide = grid1(np.abs, -64, 64, 4097)
    y = np.linspace(-8, 8, 513)
    e1 = _sup(polarity(wide, out_box=((-8, 8),), out_shape=(513,)).values, np.abs(y), slice(None)) / wide.h
    phi = grid1(lambda x: np.where(np.abs(x) <= 1, np.abs(x), INF))
    out = polarity(phi)
    e2 = _sup(out.values, np.maximum(np.abs(out.axes[0]) - 1, 0), slice(None)) / phi.h
    q = grid1(lambda x: x * x / 2)
    out = legendre(q, out_box=((-2, 2),), out_shape=(257,))
    e3 = _sup(out.values, out.axes[0] ** 2 / 2, slice(None)) / q.h
    ok = worst <= 4 and max(e1, e2, e3) <= 2
    return _report(2, ok, f"J vs LA vs AL worst {worst:.2f} h (<= 4 h); examples "
                          f"{e1:.2f}, {e2:.2f}, {e3:.2f} h (<= 2 h)", capsys)


# --------------------------------------------------------------------- 3: two routes

def criterion_3(capsys=None):
    worst_ratio = 0.0
    for seed in range(30):
        lam = (0.2, 0.37, 0.5, 0.65, 0.8)[seed % 5]
        prm = ConvolutionParams(lam)
        a, b = cvx0(2 * seed, shape=(257,)), cvx0(2 * seed + 1, shape=(257,))
        g, o = ginf_conv(a, b, prm), ginf_conv_epi_oracle(a, b, prm)
        m = (g.values <= 10) | (o.values <= 10)
        tol = 5 * (a.h + 1 / prm.t_samples)
        worst_ratio = max(worst_ratio, _sup(g.values, o.values, m) / tol)
    P = ConvolutionParams(0.5)
    phi = cvx0(77)
    c1 = _sup(ginf_conv(phi, phi, P).values, phi.values, slice(None)) / phi.h
    K, L = indicator(-1, 2, inf=True), indicator(-3, 1, inf=True)
    z = K.axes[0]
    hull = np.where((z >= -3 - 1e-9) & (z <= 2 + 1e-9), 0.0, INF)
    KL = ginf_conv(K, L, ConvolutionParams(0.3)).values
    c2_ok = bool(np.array_equal(np.isfinite(KL), np.isfinite(hull)) and np.all(KL[np.isfinite(KL)] == 0))
    a, b = grid1(np.abs), grid1(lambda x: 2 * np.abs(x))
    c3 = _sup(ginf_conv(a, b, P).values, 4 / 3 * np.abs(a.axes[0]), slice(None)) / a.h
    ok = worst_ratio <= 1 and c1 <= 4 and c2_ok and c3 <= 4
    return _report(3, ok, f"30 pairs: worst {worst_ratio:.2f} x 5(h + 1/T); closed forms "
                          f"{c1:.2f} h, hull {'ok' if c2_ok else 'wrong'}, {c3:.2f} h (<= 4 h)", capsys)


# --------------------------------------------------------------------- 4..7: inequalities

@functools.lru_cache(maxsize=None)
def polar_sweep():
    t = time.perf_counter()
    reps = sweep("polar", 100, seed=0)
    return reps, time.perf_counter() - t


def criterion_4(capsys=None):
    reps, elapsed = polar_sweep()
    passed = sum(r.verdict == "pass" for r in reps)
    f, g = indicator(-1, 1), indicator(-3, 3)
    ind = verify_polar_pl(f, g, 0.5)
    ind_ok = abs(ind.lhs - 6) <= 0.06 and abs(ind.rhs - 3) <= 0.03
    phi = cvx0(5)
    e = phi.with_values(np.exp(-phi.values))
    eq = verify_polar_pl(e, e, 0.4)
    eq_ok = abs(eq.margin) <= 0.01 * eq.lhs
    ok = passed == 100 and ind_ok and eq_ok and elapsed <= 300
    return _report(4, ok, f"{passed}/100 pass in {elapsed:.1f} s; indicator lhs {ind.lhs:.4f} rhs {ind.rhs:.4f}; "
                          f"equality |margin|/lhs {abs(eq.margin) / eq.lhs:.2e}", capsys)


def _weight(index):
    if index % 2 == 0:
        return grid1(lambda x: x * x / 2)
    return cvx0(5000 + index)


def criterion_5(capsys=None):
    passed = 0
    for i in range(50):
        f, g, lam, _, desc = suite_instance("polar", i, 300)
        passed += verify_polar_pl_measure(f, g, lam, _weight(i), instance=desc).verdict == "pass"
    worst = 0.0
    for i in range(5):
        f, g, lam, _, _ = suite_instance("polar", i, 700)
        zero = f.with_values(np.zeros(f.shape))
        a, b = verify_polar_pl_measure(f, g, lam, zero), verify_polar_pl(f, g, lam)
        worst = max(worst, abs(a.lhs - b.lhs) / b.lhs, abs(a.rhs - b.rhs) / b.rhs)
    ok = passed == 50 and worst <= 1e-6
    return _report(5, ok, f"{passed}/50 weighted instances pass; alpha = 0 vs unweighted {worst:.1e} relative", capsys)


def criterion_6(capsys=None):
    f = indicator(-1, 1)
    worst = 0.0
    for p in (0.5, 1.0, 2.0):
        r = verify_lp(f, f, p)
        worst = max(worst, abs(r.lhs - r.rhs) / r.rhs)
    reps = sweep("lp", 50, seed=0)
    passed = sum(r.verdict == "pass" for r in reps)
    ok = worst <= 0.01 and passed == 50
    return _report(6, ok, f"equality gap {worst:.2e} (<= 1%); {passed}/50 random instances pass", capsys)


def criterion_7(capsys=None):
    G = grid1(lambda x: np.exp(-x * x / 2), -8, 8, 513)
    g = verify_classical_pl(G, G, 0.5)
    gauss = abs(g.lhs - g.rhs) / g.rhs
    f, h = indicator(-1, 1), indicator(-3, 3)
    ind = verify_classical_pl(f, h, 0.5)
    # step functions carry an O(h) quadrature error per integral
    ind_ok = ind.lhs >= np.sqrt(12) - 4 * f.h and abs(ind.lhs - 4) <= 2 * f.h
    reps, _ = polar_sweep()
    classical = sweep("classical", 30, seed=0)
    order_ok = all(r.details["mean_order_ok"] for r in list(reps) + classical)
    ok = gauss <= 1e-3 and ind_ok and order_ok and all(r.verdict == "pass" for r in classical)
    return _report(7, ok, f"Gaussian gap {gauss:.1e}; indicators {ind.lhs:.4f} >= {np.sqrt(12):.4f}; "
                          f"harmonic <= geometric on {len(reps) + len(classical)} instances: {order_ok}", capsys)


# --------------------------------------------------------------------- 8: measures

def criterion_8(capsys=None):
    exact = 0.0
    worst = 0.0
    for seed in range(20):
        phi = cvx0(seed)
        phi1 = phi.with_values(phi.values + 1)
        mu = measure_of_epi(phi, NamedMeasure("mu"))
        mup = measure_of_epi(phi1, NamedMeasure("mu_p", 1, 2.0))
        exact = max(exact, abs(mu - integrate_exp_neg(phi)) / mu, abs(mup - integrate_power(phi1, -2.0)) / mup)
        nu = measure_of_epi(phi, NamedMeasure("nu"), "F-epi")
        nup = measure_of_epi(phi1, NamedMeasure("nu_p", 1, 2.0), "F-epi")
        worst = max(worst, abs(nu - mu) / mu, abs(nup - mup) / mup)
    borell = all(borell_kappa(-1, n + 1) == Fraction(-1, n + 2) for n in range(1, 6))
    borell &= all(borell_kappa(Fraction(1, p), n + 1) == Fraction(1, p - (n + 1))
                  for n in range(1, 4) for p in range(n + 2, n + 7))
    rng = np.random.default_rng(8)
    jac = 0.0
    for n in (1, 2, 3):
        for _ in range(20):
            p = np.concatenate([rng.uniform(-2, 2, n), rng.uniform(0.3, 3, 1)])
            eps = 1e-6
            D = np.empty((n + 1, n + 1))
            for j in range(n + 1):
                d = np.zeros(n + 1)
                d[j] = eps
                D[:, j] = (f_map(p + d) - f_map(p - d)) / (2 * eps)
            ref = f_jacobian_abs_det(p, n)
            jac = max(jac, abs(abs(np.linalg.det(D)) - ref) / ref)
    ok = exact <= 1e-12 and worst <= 1e-3 and borell and jac <= 1e-6
    return _report(8, ok, f"shared-quadrature gap {exact:.1e}; F-image routes {worst:.1e} (<= 1e-3); "
                          f"Borell exact {borell}; Jacobian {jac:.1e} (<= 1e-6)", capsys)


# --------------------------------------------------------------------- 9: Busemann

def criterion_9(capsys=None):
    t = time.perf_counter()
    weighted = sum(verify_busemann(random_instance(s)).verdict == "pass" for s in range(20))
    sym = verify_busemann(symmetric_instance())
    sym_gap = abs(sym.lhs - sym.rhs) / sym.rhs
    classical = sum(verify_busemann(random_instance(s, classical=True)).verdict == "pass" for s in range(20))
    red = 0
    for s in range(10):
        emb = random_embedding(s, weight=("gaussian", "max_affine")[s % 2])
        red += reduction_check(emb, seed=s).passed
    elapsed = time.perf_counter() - t
    ok = weighted == 20 and sym_gap <= 0.02 and classical == 20 and red == 10 and elapsed <= 300
    return _report(9, ok, f"{weighted}/20 weighted, {classical}/20 classical, symmetric gap {sym_gap:.1e}, "
                          f"{red}/10 reductions, {elapsed:.1f} s", capsys)


# --------------------------------------------------------------------- 10: negative controls

def criterion_10(capsys=None):
    f = indicator(0, 1)
    zero = check_hypothesis(f, f, f.with_values(np.zeros(f.shape)), 0.5, "polar")
    c1 = not zero.passed and zero.witness is not None

    phi = cvx0(3)
    e = phi.with_values(np.exp(-phi.values))
    h = minimal_h(e, e, 0.5, "polar")
    vals = h.values.copy()
    i = int(np.argmax(vals))
    vals[i - 3:i + 4] *= 0.5
    pert = check_hypothesis(e, e, h.with_values(vals), 0.5, "polar")
    c2 = not pert.passed and pert.witness is not None and abs(pert.witness["z"][0] - h.axes[0][i]) <= 4 * h.h

    inst = random_instance(3)
    K = build_k_lambda(inst.K0, inst.K1, inst.lam)
    bad = BusemannInstance(inst.x0, inst.x1, inst.lam, inst.K0, inst.K1, inst.psi, shrink(K, 0.9))
    rep = verify_busemann(bad)
    c3 = not rep.hypothesis_check["passed"] and rep.hypothesis_check["witness"] is not None
    ok = c1 and c2 and c3
    return _report(10, ok, f"h = 0 caught {c1}; perturbed h caught {c2}; shrunk K_lam caught {c3}", capsys)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.slow
@pytest.mark.parametrize("k", range(1, 11))
def test_criterion(k, capsys):
    assert CRITERIA[k - 1](capsys)


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
