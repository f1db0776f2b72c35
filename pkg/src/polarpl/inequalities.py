"""Instance generators and numerical verifiers for the Prekopa-Leindler type
inequalities: classical, polar, polar against a log-concave measure, and L^p."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull

from .convolutions import ConvolutionParams, check_hypothesis, minimal_h
from .grid import DEFAULT_QUAD, GridFunction, Quadrature, integrate_power, lp_norm
from .measures import NamedMeasure, p_mean

REL_TOL = 0.02
SWEEP_LAMBDAS = (0.1, 0.25, 0.5, 0.75, 0.9)
SWEEP_PS = (0.5, 1.0, 2.0)
VERDICTS = ("pass", "fail", "inconclusive")


@dataclass
class VerificationReport:
    theorem: str
    lhs: float
    rhs: float
    margin: float
    rel_tol: float
    resolution: dict
    hypothesis_check: dict
    instance: dict
    verdict: str
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _verdict(lhs: float, rhs: float, rel_tol: float, hyp_ok: bool, upper: bool = False) -> str:
    """lhs >= rhs (1 - rel_tol), or lhs <= rhs (1 + rel_tol) when ``upper``."""
    if not hyp_ok:
        return "fail"
    ok = lhs <= rhs * (1 + rel_tol) if upper else lhs >= rhs * (1 - rel_tol)
    return "pass" if ok else "fail"


# --------------------------------------------------------------------- instances

KINDS = ("cvx0-max-affine", "log-concave", "bounded-measurable", "indicator-convex")


@dataclass(frozen=True)
class InstanceGenerator:
    """Seeded random function. ``k`` is the number of affine terms (or bumps);
    None draws it. ``coef_range`` bounds the slope magnitudes."""

    kind: str = "cvx0-max-affine"
    seed: int = 0
    n: int = 1
    k: Optional[int] = None
    coef_range: Optional[tuple] = None
    box: Optional[tuple] = None
    shape: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.n not in (1, 2):
            raise ValueError("n must be 1 or 2")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def grid(self):
        half = 4.0 if self.n == 1 else 6.0
        box = self.box or ((-half, half),) * self.n
        shape = self.shape or ((513,) if self.n == 1 else (129, 129))
        return tuple(tuple(b) for b in box), tuple(shape)

    def describe(self) -> dict:
        box, shape = self.grid
        return {"kind": self.kind, "seed": self.seed, "n": self.n, "k": self.k,
                "coef_range": self.coef_range, "box": box, "shape": shape}


def max_affine_terms(rng: np.random.Generator, n: int, k: Optional[int] = None, coef_range=None):
    """Rows (a, b) of phi(x) = max(0, max_i <a_i, x> - b_i) with b_i >= 0.

    b_i = |a_i| u_i puts the kink of term i at distance u_i from the origin.
    In 1D the slopes alternate in sign; in 2D their directions are spread
    evenly around the circle, so the zero set is a bounded polygon.
    """
    if n == 1:
        k = int(rng.integers(2, 5)) if k is None else k
        lo, hi = coef_range or (3.5, 8.0)
        sign = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
        a = (rng.uniform(lo, hi, k) * sign)[:, None]
        u = rng.uniform(0.1, 0.5, k)
    else:
        k = int(rng.integers(6, 10)) if k is None else k
        lo, hi = coef_range or (3.0, 5.0)
        th = 2 * np.pi * np.arange(k) / k + rng.uniform(-0.15, 0.15, k)
        a = np.stack([np.cos(th), np.sin(th)], 1) * rng.uniform(lo, hi, k)[:, None]
        u = rng.uniform(0.3, 0.8, k)
    b = np.linalg.norm(a, axis=1) * u
    return a, b


def max_affine(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=float).reshape(len(b), -1)
    b = np.asarray(b, dtype=float)

    def phi(x):
        return np.maximum(0.0, (np.asarray(x).reshape(-1, a.shape[1]) @ a.T - b).max(axis=1))
    return phi


def _bumps(rng, n, k, box):
    """Max of k axis-aligned boxes with heights in (0.2, 1], spread over the box."""
    k = int(rng.integers(2, 5)) if k is None else k
    lo = np.array([b[0] for b in box]) * 0.7
    hi = np.array([b[1] for b in box]) * 0.7
    c = rng.uniform(lo, hi, (k, n))
    w = rng.uniform(0.2, 1.2, (k, n))
    ht = rng.uniform(0.2, 1.0, k)

    def f(x):
        x = np.asarray(x).reshape(-1, n)
        inside = np.all(np.abs(x[:, None, :] - c[None]) <= w[None], axis=2)
        return np.max(np.where(inside, ht[None], 0.0), axis=1)
    return f


def _convex_indicator(rng, n, box):
    if n == 1:
        a, b = rng.uniform(0.5, 3.0, 2)
        return lambda x: ((x[:, 0] >= -a) & (x[:, 0] <= b)).astype(float)
    th = np.sort(rng.uniform(0, 2 * np.pi, 7))
    pts = np.stack([np.cos(th), np.sin(th)], 1) * rng.uniform(1.0, 4.0, 7)[:, None]
    pts = np.vstack([pts, [[0.3, 0.0], [-0.3, 0.0], [0.0, 0.3], [0.0, -0.3]]])
    eq = ConvexHull(pts).equations
    return lambda x: np.all(x @ eq[:, :2].T + eq[:, 2] <= 1e-12, axis=1).astype(float)


def generate(gen: InstanceGenerator) -> GridFunction:
    """Deterministic function of ``gen``: a Cvx0 max-affine function, its
    exponential exp(-phi), a bounded step function with non-convex support,
    or the indicator of a convex set containing the origin."""
    rng = np.random.default_rng(gen.seed)
    box, shape = gen.grid
    if gen.kind in ("cvx0-max-affine", "log-concave"):
        a, b = max_affine_terms(rng, gen.n, gen.k, gen.coef_range)
        phi = GridFunction.from_callable(max_affine(a, b), box, shape)
        if gen.kind == "log-concave":
            return phi.with_values(np.exp(-phi.values))
        return phi
    if gen.kind == "bounded-measurable":
        return GridFunction.from_callable(_bumps(rng, gen.n, gen.k, box), box, shape)
    return GridFunction.from_callable(_convex_indicator(rng, gen.n, box), box, shape)


# --------------------------------------------------------------------- verifiers

def _rescale(f: GridFunction, g: GridFunction):
    """Common factor c >= 1 with f/c, g/c <= 1."""
    c = max(1.0, float(f.values.max()), float(g.values.max()))
    if not np.isfinite(c):
        raise ValueError("f and g must be bounded")
    return c, f.with_values(f.values / c), g.with_values(g.values / c)


def _resolution(f: GridFunction, params: ConvolutionParams) -> dict:
    return {"shape": list(f.shape), "h": f.h, "t_samples": params.t_samples,
            "line_samples": params.line_samples}


def _coarsen(f: GridFunction) -> GridFunction:
    sl = tuple(slice(None, None, 2) if (n - 1) % 2 == 0 else slice(None) for n in f.shape)
    return GridFunction(f.box, f.values[sl])


def _check_refinement(report: VerificationReport, coarse: VerificationReport) -> VerificationReport:
    """Mark inconclusive when halving the resolution flips the margin's sign."""
    report.details["coarse_margin"] = coarse.margin
    if report.verdict == "pass" and np.sign(coarse.margin) != np.sign(report.margin) and coarse.margin < 0:
        report.verdict = "inconclusive"
    return report


def _integral(u: GridFunction, weight: Optional[NamedMeasure], quad: Quadrature) -> float:
    return integrate_power(u, 1.0, quad, None if weight is None else weight.base_density)


def _pl_core(theorem, f, g, lam, h, params, rel_tol, quad, weight, instance, refine):
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie strictly inside (0, 1), got {lam}")
    params = params or ConvolutionParams(lam)
    if params.lam != lam:
        params = ConvolutionParams(lam, params.t_samples, params.line_samples)
    kind = "classical" if theorem == "classical-pl" else "polar"
    c, f1, g1 = _rescale(f, g)
    If, Ig = _integral(f1, weight, quad), _integral(g1, weight, quad)
    if If <= 0 or Ig <= 0:
        raise ValueError("integral of f or g is zero: degenerate instance")
    supplied = h is not None
    h1 = h.with_values(h.values / c) if supplied else minimal_h(f1, g1, lam, kind, params)
    hyp = check_hypothesis(f1, g1, h1, lam, kind, params)
    Ih = _integral(h1, weight, quad)
    rhs_polar = p_mean(If, Ig, lam, -1.0)
    rhs_classical = p_mean(If, Ig, lam, 0.0)
    rhs = rhs_classical if kind == "classical" else rhs_polar
    lhs, rhs = c * Ih, c * rhs
    report = VerificationReport(
        theorem, lhs, rhs, lhs - rhs, rel_tol, _resolution(f, params), hyp.to_dict(),
        dict(instance or {}, lam=lam, h="supplied" if supplied else "minimal"),
        _verdict(lhs, rhs, rel_tol, hyp.passed),
        {"rescale": c, "int_f": c * If, "int_g": c * Ig,
         "rhs_polar": c * rhs_polar, "rhs_classical": c * rhs_classical,
         "mean_order_ok": bool(rhs_polar <= rhs_classical * (1 + 1e-12)),
         "measure": "lebesgue" if weight is None else weight.tag})
    if refine and not supplied:
        coarse = _pl_core(theorem, _coarsen(f), _coarsen(g), lam, None, params, rel_tol,
                          quad, weight, instance, False)
        _check_refinement(report, coarse)
    return report


def verify_classical_pl(f: GridFunction, g: GridFunction, lam: float, h: Optional[GridFunction] = None,
                        rel_tol: float = REL_TOL, quad: Quadrature = DEFAULT_QUAD, instance=None,
                        refine: bool = False) -> VerificationReport:
    """int h >= (int f)^(1-lam) (int g)^lam given h((1-lam)x + lam y) >= f(x)^(1-lam) g(y)^lam."""
    return _pl_core("classical-pl", f, g, lam, h, None, rel_tol, quad, None, instance, refine)


def verify_polar_pl(f: GridFunction, g: GridFunction, lam: float, h: Optional[GridFunction] = None,
                    params: Optional[ConvolutionParams] = None, rel_tol: float = REL_TOL,
                    quad: Quadrature = DEFAULT_QUAD, instance=None, refine: bool = False) -> VerificationReport:
    """int h >= M_{-1}^lam(int f, int g) given
    h((1-t)x + ty) >= min(f(x)^((1-t)/(1-lam)), g(y)^(t/lam)) for all t."""
    return _pl_core("polar-pl", f, g, lam, h, params, rel_tol, quad, None, instance, refine)


def check_convex(alpha: GridFunction, tol: float = 1e-9) -> tuple[bool, Optional[list]]:
    """Midpoint convexity on node pairs whose midpoint is a node, along each
    axis and the diagonals. Returns (ok, witness node indices)."""
    v = alpha.values
    fin = np.isfinite(v)
    if alpha.dim == 1:
        steps = [(1,), ]
    else:
        steps = [(1, 0), (0, 1), (1, 1), (1, -1)]
    for st in steps:
        for m in range(1, max(alpha.shape) // 2):
            d = tuple(s * m for s in st)
            idx = np.argwhere(fin)
            lo = idx - d
            hi = idx + d
            ok = np.all((lo >= 0) & (lo < alpha.shape) & (hi >= 0) & (hi < alpha.shape), axis=1)
            idx, lo, hi = idx[ok], lo[ok], hi[ok]
            if idx.size == 0:
                continue
            mid = v[tuple(idx.T)]
            ends = 0.5 * (v[tuple(lo.T)] + v[tuple(hi.T)])
            bad = mid > ends + tol * (1 + np.abs(ends))
            if bad.any():
                j = int(np.argmax(bad))
                return False, [lo[j].tolist(), idx[j].tolist(), hi[j].tolist()]
    return True, None


def verify_polar_pl_measure(f: GridFunction, g: GridFunction, lam: float, alpha: GridFunction,
                            h: Optional[GridFunction] = None, params: Optional[ConvolutionParams] = None,
                            rel_tol: float = REL_TOL, quad: Quadrature = DEFAULT_QUAD, instance=None,
                            refine: bool = False) -> VerificationReport:
    """Polar inequality with every integral taken against exp(-alpha) dx, alpha convex."""
    ok, wit = check_convex(alpha)
    if not ok:
        raise ValueError(f"alpha is not convex (midpoint test fails at nodes {wit})")
    weight = NamedMeasure("weighted", alpha.dim, alpha=alpha)
    rep = _pl_core("polar-pl-mu", f, g, lam, h, params, rel_tol, quad, weight, instance, refine)
    return rep


def verify_lp(f: GridFunction, g: GridFunction, p: float, h: Optional[GridFunction] = None,
              lam: float = 0.5, params: Optional[ConvolutionParams] = None, rel_tol: float = REL_TOL,
              quad: Quadrature = DEFAULT_QUAD, instance=None, refine: bool = False) -> VerificationReport:
    """||h||_p >= ||f||_p + ||g||_p given h((1-t)x + ty) >= min(f(x)/(1-t), g(y)/t)."""
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    params = params or ConvolutionParams(lam)
    nf, ng = lp_norm(f, p, quad), lp_norm(g, p, quad)
    if not (np.isfinite(nf) and np.isfinite(ng)):
        raise ValueError("||f||_p or ||g||_p is infinite")
    supplied = h is not None
    if not supplied:
        h = minimal_h(f, g, lam, "lp", params)
    hyp = check_hypothesis(f, g, h, lam, "lp", params)
    lhs, rhs = lp_norm(h, p, quad), nf + ng
    report = VerificationReport(
        "lp", lhs, rhs, lhs - rhs, rel_tol, _resolution(f, params), hyp.to_dict(),
        dict(instance or {}, p=p, lam=lam, h="supplied" if supplied else "minimal"),
        _verdict(lhs, rhs, rel_tol, hyp.passed), {"norm_f": nf, "norm_g": ng})
    if refine and not supplied:
        coarse = verify_lp(_coarsen(f), _coarsen(g), p, None, lam, params, rel_tol, quad, instance)
        _check_refinement(report, coarse)
    return report


# --------------------------------------------------------------------- sweeps

SUITE_KINDS = {
    "polar": ("log-concave", "bounded-measurable", "indicator-convex"),
    "classical": ("log-concave", "bounded-measurable", "indicator-convex"),
    "lp": ("log-concave", "bounded-measurable", "indicator-convex"),
}
CSV_COLUMNS = ("seed", "lambda", "p", "lhs", "rhs", "margin", "verdict", "resolution")


def suite_instance(suite: str, index: int, seed: int, n: int = 1, shape=None):
    """(f, g, lam, p, descriptor) for member ``index`` of a sweep."""
    kinds = SUITE_KINDS[suite]
    kind = kinds[index % len(kinds)]
    s = seed + index
    fg = [generate(InstanceGenerator(kind, 2 * s + j, n, shape=shape)) for j in (0, 1)]
    if kind == "bounded-measurable" and suite == "lp":
        fg = [u.with_values(u.values * (1 + 2 * j)) for j, u in enumerate(fg)]
    lam = SWEEP_LAMBDAS[index % len(SWEEP_LAMBDAS)]
    p = SWEEP_PS[index % len(SWEEP_PS)] if suite == "lp" else None
    return fg[0], fg[1], lam, p, {"kind": kind, "seed": s, "n": n}


def sweep(suite: str, count: int, seed: int, n: int = 1, shape=None,
          params: Optional[ConvolutionParams] = None, rel_tol: float = REL_TOL) -> list[VerificationReport]:
    if suite not in SUITE_KINDS:
        raise ValueError(f"unknown suite {suite!r}")
    out = []
    for i in range(count):
        f, g, lam, p, desc = suite_instance(suite, i, seed, n, shape)
        prm = None if params is None else ConvolutionParams(lam, params.t_samples, params.line_samples)
        if suite == "polar":
            rep = verify_polar_pl(f, g, lam, params=prm, rel_tol=rel_tol, instance=desc)
        elif suite == "classical":
            rep = verify_classical_pl(f, g, lam, rel_tol=rel_tol, instance=desc)
        else:
            rep = verify_lp(f, g, p, params=prm, rel_tol=rel_tol, instance=desc)
        out.append(rep)
    return out


def sweep_csv(reports: list[VerificationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        res = "x".join(str(s) for s in r.resolution["shape"]) + f"/T{r.resolution['t_samples']}"
        w.writerow([r.instance.get("seed"), r.instance.get("lam"), r.instance.get("p", ""),
                    repr(r.lhs), repr(r.rhs), repr(r.margin), r.verdict, res])
    return buf.getvalue()
