"""Busemann-type inequality in R^(n+2).

E is the span of the first n coordinates and H_x = E + R^+ x for x orthogonal
to E. A point a + r x of H_x has local coordinates (a, r). Sets inside a
half-space are stored in these local coordinates, so the Hausdorff measure
on H_x is |x| da dr.

For k0 = a0 + r0 x0 and k1 = a1 + r1 x1 the segment [k0, k1] meets
H_lam (direction x_lam = (1 - lam) x0 + lam x1) at
    t = lam r0 / (lam r0 + (1 - lam) r1),  r = r0 r1 / (lam r0 + (1 - lam) r1),
    a = (1 - t) a0 + t a1.
With G(a, r) = (a / r, 1 / r) the crossing point satisfies
G(k) = (1 - lam) G(k0) + lam G(k1), so the minimal admissible K_lam of two
polytopes is a polytope again: G of the Minkowski average of the G-images.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .convolutions import ConvolutionParams, HypothesisCheck, ginf_conv
from .grid import DEFAULT_QUAD, INF, GridFunction, integrate_exp_neg
from .inequalities import REL_TOL, VerificationReport, _jsonable, _verdict
from .measures import DivergentIntegral, NamedMeasure
from .transforms import f_tilde

GEOM_TOL = 1e-9
GL_ORDERS = (12, 24, 48, 96)
QUAD_RTOL = 1e-7
FIBER_EDGES = np.concatenate([[0.0], np.geomspace(1e-4, 1e4, 49)])
FIBER_ORDER = 8
TAIL_RTOL = 1e-8
Z_FLOOR = 1e-4


# --------------------------------------------------------------------- half-spaces

def _perp(x, n: int) -> np.ndarray:
    """Check that x is orthogonal to E and return its last two coordinates."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n + 2:
        raise ValueError(f"direction must have {n + 2} coordinates, got {x.size}")
    scale = max(1.0, float(np.abs(x).max()))
    if np.abs(x[:n]).max(initial=0.0) > GEOM_TOL * scale:
        raise ValueError(f"direction {x.tolist()} is not orthogonal to E")
    if np.linalg.norm(x[n:]) == 0:
        raise ValueError("direction must be non-zero")
    return x[n:]


def to_local(points, x, n: int, tol: float = 1e-7) -> np.ndarray:
    """Local coordinates (a, r) of ambient points of H_x; raises if a point is off H_x."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xp = _perp(x, n)
    q = pts[:, n:]
    r = q @ xp / (xp @ xp)
    off = np.linalg.norm(q - r[:, None] * xp[None], axis=1)
    scale = 1.0 + np.abs(pts).max(initial=0.0)
    bad = (off > tol * scale) | (r < -tol * scale)
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueError(f"point {pts[i].tolist()} does not lie in the half-space of {list(x)}")
    return np.column_stack([pts[:, :n], np.maximum(r, 0.0)])


def to_ambient(local, x, n: int) -> np.ndarray:
    local = np.atleast_2d(np.asarray(local, dtype=float))
    x = np.asarray(x, dtype=float).reshape(-1)
    out = local[:, -1:] * x[None, :]
    out[:, :n] += local[:, :n]
    return out


def crossing(k0: np.ndarray, k1: np.ndarray, lam: float):
    """Where [k0, k1] meets H_lam, for local points k0 of H_x0 and k1 of H_x1.

    Returns (t, local point of H_lam). Pairs with r0 = r1 = 0 lie in E and
    give nan.
    """
    k0, k1 = np.atleast_2d(k0), np.atleast_2d(k1)
    r0, r1 = k0[:, -1], k1[:, -1]
    den = lam * r0 + (1 - lam) * r1
    with np.errstate(invalid="ignore", divide="ignore"):
        t = lam * r0 / den
        r = r0 * r1 / den
    a = (1 - t)[:, None] * k0[:, :-1] + t[:, None] * k1[:, :-1]
    return t, np.column_stack([a, r])


def g_map(local: np.ndarray) -> np.ndarray:
    """(a, r) -> (a / r, 1 / r); its own inverse on r > 0."""
    local = np.atleast_2d(np.asarray(local, dtype=float))
    r = local[:, -1]
    if np.any(r <= 0):
        raise ValueError("G needs r > 0")
    return np.column_stack([local[:, :-1] / r[:, None], 1.0 / r])


# --------------------------------------------------------------------- potentials

POTENTIALS = ("zero", "max_affine", "quadratic", "epi_weight")


@dataclass(frozen=True)
class Potential:
    """Convex psi on R^(n+2).

    zero; max_affine max_i <A_i, p> - b_i; quadratic <p, A p> / 2 + <b, p>
    with A positive semi-definite; epi_weight alpha(x) + z for p = (x, s, z),
    alpha a convex grid function on R^n or None for 0.
    """

    kind: str = "zero"
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    alpha: Optional[GridFunction] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in POTENTIALS:
            raise ValueError(f"unknown potential {self.kind!r}")
        if self.kind in ("max_affine", "quadratic"):
            if self.A is None or self.b is None:
                raise ValueError(f"{self.kind} potential needs A and b")
            A = np.atleast_2d(np.asarray(self.A, dtype=float))
            b = np.asarray(self.b, dtype=float).reshape(-1)
            if self.kind == "max_affine" and A.shape[0] != b.size:
                raise ValueError("max_affine: A needs one row per entry of b")
            if self.kind == "quadratic":
                if A.shape != (b.size, b.size) or not np.allclose(A, A.T):
                    raise ValueError("quadratic: A must be a symmetric matrix matching b")
                if np.linalg.eigvalsh(A).min() < -1e-12:
                    raise ValueError("quadratic: A is not positive semi-definite")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "b", b)

    def __call__(self, p) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        if self.kind == "zero":
            return np.zeros(p.shape[0])
        if self.kind == "max_affine":
            return (p @ self.A.T - self.b).max(axis=1)
        if self.kind == "quadratic":
            return 0.5 * np.einsum("ij,jk,ik->i", p, self.A, p) + p @ self.b
        n = p.shape[1] - 2
        base = np.zeros(p.shape[0]) if self.alpha is None else self.alpha.evaluate(p[:, :n])
        return base + p[:, -1]

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.A is not None:
            out.update(A=self.A.tolist(), b=self.b.tolist())
        if self.kind == "epi_weight":
            out["alpha"] = None if self.alpha is None else "grid"
        return out


# --------------------------------------------------------------------- regions

def _seg_dist(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    d = b - a
    dd = float(d @ d)
    s = 0.0 if dd == 0 else min(1.0, max(0.0, float((q - a) @ d) / dd))
    return float(np.linalg.norm(q - a - s * d))


def _dist_to_hull(q: np.ndarray, verts: np.ndarray, equations=None) -> float:
    """Euclidean distance from q to conv(verts).

    In the plane this is exact: zero inside, else the nearest edge. In higher
    dimensions the projection is found by SLSQP over barycentric weights.
    """
    if equations is not None and np.all(q @ equations[:, :-1].T + equations[:, -1] <= 0):
        return 0.0
    m = verts.shape[0]
    if m == 1:
        return float(np.linalg.norm(q - verts[0]))
    if verts.shape[1] == 2 or m == 2:
        if m == 2:
            return _seg_dist(q, verts[0], verts[1])
        ring = np.vstack([verts, verts[:1]])
        return min(_seg_dist(q, ring[i], ring[i + 1]) for i in range(m))
    res = minimize(lambda w: np.sum((verts.T @ w - q) ** 2), np.full(m, 1.0 / m),
                   jac=lambda w: 2 * verts @ (verts.T @ w - q), method="SLSQP",
                   bounds=[(0, 1)] * m, constraints={"type": "eq", "fun": lambda w: w.sum() - 1},
                   options={"ftol": 1e-15, "maxiter": 500})
    return float(np.linalg.norm(verts.T @ res.x - q))


def _reduce_degenerate(v: np.ndarray) -> np.ndarray:
    """Extreme points of a set of rank at most 1; other degenerate sets are kept whole."""
    d = v - v.mean(axis=0)
    u, sv, vt = np.linalg.svd(d, full_matrices=False)
    tol = GEOM_TOL * (1.0 + np.abs(v).max())
    rank = int(np.sum(sv > tol))
    if rank == 0:
        return v[:1]
    if rank == 1:
        proj = d @ vt[0]
        return v[[np.argmin(proj), np.argmax(proj)]]
    return np.unique(v, axis=0)


def _gl(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1), 0.5 * w


def _simplex_rule(simplex: np.ndarray, order: int):
    """Collapsed Gauss-Legendre points and weights on a d-simplex (rows are vertices)."""
    d = simplex.shape[1]
    u, w = _gl(order)
    grids = np.meshgrid(*([u] * d), indexing="ij")
    wgrid = np.meshgrid(*([w] * d), indexing="ij")
    U = np.stack([g.reshape(-1) for g in grids], 1)
    W = np.prod(np.stack([g.reshape(-1) for g in wgrid], 1), axis=1)
    diffs = np.diff(simplex, axis=0)  # v_k - v_(k-1)
    pts = np.repeat(simplex[:1], U.shape[0], axis=0)
    scale = np.ones(U.shape[0])
    for k in range(d):
        scale = scale * U[:, k]
        pts = pts + scale[:, None] * diffs[k]
    jac = abs(np.linalg.det(diffs)) * np.prod(U ** np.arange(d - 1, -1, -1)[None, :], axis=1)
    return pts, W * jac


@dataclass(frozen=True)
class PolytopeRegion:
    """Convex hull of finitely many local points (a, r), r >= 0. May be degenerate."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.shape[0] == 0:
            raise ValueError("a polytope needs at least one vertex")
        if np.any(v[:, -1] < -GEOM_TOL):
            raise ValueError("vertices must have r >= 0")
        hull = None
        if v.shape[0] > v.shape[1]:
            try:
                hull = ConvexHull(v)
            except QhullError:
                hull = None
        if hull is not None:
            # counter-clockwise order in the plane, which the edge distance relies on
            v = v[hull.vertices]
            hull = ConvexHull(v)
        else:
            v = _reduce_degenerate(v)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "_hull", hull)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def full_dimensional(self) -> bool:
        return self._hull is not None

    @property
    def volume(self) -> float:
        return float(self._hull.volume) if self._hull is not None else 0.0

    def gap(self, q) -> np.ndarray:
        """Distance to the set; for full-dimensional sets the largest facet
        violation, which is negative inside."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if self._hull is not None:
            eq = self._hull.equations
            return (q @ eq[:, :-1].T + eq[:, -1]).max(axis=1)
        return np.array([_dist_to_hull(p, self.vertices) for p in q])

    def distance(self, q: np.ndarray) -> float:
        eq = None if self._hull is None else self._hull.equations
        return _dist_to_hull(np.asarray(q, dtype=float), self.vertices, eq)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Vertices followed by random convex combinations of them."""
        w = rng.dirichlet(np.full(self.vertices.shape[0], 0.5), count)
        return np.vstack([self.vertices, w @ self.vertices])

    def integrate(self, fn, order: int) -> float:
        if self._hull is None:
            return 0.0
        tri = Delaunay(self.vertices)
        total = 0.0
        for s in tri.simplices:
            pts, w = _simplex_rule(self.vertices[s], order)
            total += float(np.dot(w, fn(pts)))
        return total

    def describe(self) -> dict:
        return {"kind": "polytope", "vertices": self.vertices.tolist()}


@dataclass(frozen=True)
class EpiRegion:
    """{(a, r) : phi(a) < r < upper} for a grid function phi on E."""

    phi: GridFunction
    upper: float = INF

    def __post_init__(self):
        if not np.isfinite(self.phi.values).any():
            raise ValueError("phi is +inf everywhere; the region is empty")
        if np.nanmin(self.phi.values) < 0:
            raise ValueError("the lower boundary must be >= 0 (the region lies in r >= 0)")

    @property
    def dim(self) -> int:
        return self.phi.dim + 1

    def gap(self, q) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=float))
        lower = self.phi.evaluate(q[:, :-1], outside=INF) - q[:, -1]
        return np.maximum(lower, q[:, -1] - self.upper)

    def tolerance(self, q, cells: float = 4.0) -> np.ndarray:
        """Grid error allowance for membership of q: ``cells`` grid steps times
        (1 + the largest slope of phi within two nodes of q)."""
        phi = self.phi
        v = np.where(np.isfinite(phi.values), phi.values, np.nan)
        slope = np.zeros(phi.shape)
        for ax, step in enumerate(phi.steps):
            d = np.abs(np.diff(v, axis=ax)) / step
            d = np.where(np.isnan(d), 0.0, d)
            pad = [(0, 0)] * phi.dim
            pad[ax] = (1, 0)
            lo = np.pad(d, pad)
            pad[ax] = (0, 1)
            hi = np.pad(d, pad)
            slope = np.maximum(slope, np.maximum(lo, hi))
        slope = maximum_filter(slope, size=5, mode="nearest")
        q = np.atleast_2d(np.asarray(q, dtype=float))
        lo = np.array([b[0] for b in phi.box])
        idx = np.rint((q[:, :-1] - lo) / phi.steps).astype(int)
        idx = np.clip(idx, 0, np.array(phi.shape) - 1)
        return cells * phi.h * (1.0 + slope[tuple(idx.T)])

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        nodes, vals = self.phi.nodes(), self.phi.flat()
        fin = np.isfinite(vals)
        i = rng.choice(np.flatnonzero(fin), count)
        hi = np.minimum(vals[i] + 10.0, self.upper)
        r = vals[i] + (hi - vals[i]) * rng.uniform(0, 1, count) ** 3
        return np.column_stack([nodes[i], r])

    def describe(self) -> dict:
        return {"kind": "epi", "upper": self.upper, "box": self.phi.box, "shape": self.phi.shape}


Region = Union[PolytopeRegion, EpiRegion]


# --------------------------------------------------------------------- slab integrals

@dataclass
class SlabIntegral:
    value: float
    error: float
    order: int


def _integrand(x, psi: Potential, n: int):
    def fn(local):
        return np.exp(-psi(to_ambient(local, x, n)))
    return fn


def _epi_integral(K: EpiRegion, x, psi: Potential, n: int) -> SlabIntegral:
    pts, w = DEFAULT_QUAD.points_weights(K.phi.box, K.phi.shape)
    lo = K.phi.evaluate(pts)
    keep = np.isfinite(lo) & (lo < K.upper)
    pts, w, lo = pts[keep], w[keep], lo[keep]
    span = K.upper - lo
    u, gw = _gl(FIBER_ORDER)
    fn = _integrand(x, psi, n)
    panels = np.zeros((pts.shape[0], FIBER_EDGES.size - 1))
    for j in range(FIBER_EDGES.size - 1):
        e0 = np.minimum(FIBER_EDGES[j], span)
        e1 = np.minimum(FIBER_EDGES[j + 1], span)
        width = e1 - e0
        if not np.any(width > 0):
            continue
        for uk, wk in zip(u, gw):
            r = lo + e0 + width * uk
            vals = fn(np.column_stack([pts, r]))
            panels[:, j] += wk * width * np.where(width > 0, vals, 0.0)
    total = float(np.dot(w, panels.sum(axis=1)))
    tail = float(np.dot(w, panels[:, -3:].sum(axis=1)))
    open_top = np.any(span > FIBER_EDGES[-1])
    if open_top and tail > TAIL_RTOL * max(total, 1e-300):
        raise DivergentIntegral(f"integral over the unbounded region does not settle: "
                                f"the last panels carry {tail:.3g} of {total:.3g}")
    return SlabIntegral(total, tail, FIBER_ORDER)


def slab_integral(K: Region, x, psi: Potential = Potential(), n: int = 1) -> SlabIntegral:
    """Integral of exp(-psi) over K (local coordinates of H_x) against the
    (n+1)-dimensional Hausdorff measure, i.e. |x| times the local integral.

    Polytopes use collapsed Gauss-Legendre on a triangulation, doubling the
    order until two successive values agree to QUAD_RTOL; ``error`` is the
    last difference. Epi regions use the grid quadrature in a and log-spaced
    Gauss panels in r; an unbounded region whose far panels still matter
    raises DivergentIntegral.
    """
    xn = float(np.linalg.norm(_perp(x, n)))
    if K.dim != n + 1:
        raise ValueError(f"region has dimension {K.dim}, expected {n + 1}")
    if isinstance(K, EpiRegion):
        res = _epi_integral(K, x, psi, n)
        return SlabIntegral(xn * res.value, xn * res.error, res.order)
    fn = _integrand(x, psi, n)
    prev = None
    for order in GL_ORDERS:
        cur = K.integrate(fn, order)
        if prev is not None and abs(cur - prev) <= QUAD_RTOL * abs(cur):
            break
        err = INF if prev is None else abs(cur - prev)
        prev = cur
    else:
        return SlabIntegral(xn * cur, xn * err, order)
    return SlabIntegral(xn * cur, xn * abs(cur - prev), order)


# --------------------------------------------------------------------- instances

def _as_region(K, x, n: int) -> Region:
    if isinstance(K, (PolytopeRegion, EpiRegion)):
        return K
    return PolytopeRegion(to_local(K, x, n))


@dataclass(frozen=True)
class BusemannInstance:
    """Directions x0, x1 orthogonal to E, lam in (0, 1), sets K0, K1 (regions
    or ambient point arrays, whose convex hull is used), a convex potential
    and an optional K_lam (the minimal one is built when absent)."""

    x0: np.ndarray
    x1: np.ndarray
    lam: float
    K0: Region
    K1: Region
    psi: Potential = Potential()
    K_lam: Optional[Region] = None
    n: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie strictly inside (0, 1), got {self.lam}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        x1 = np.asarray(self.x1, dtype=float).reshape(-1)
        p0, p1 = _perp(x0, self.n), _perp(x1, self.n)
        det = p0[0] * p1[1] - p0[1] * p1[0]
        if abs(det) <= GEOM_TOL * np.linalg.norm(p0) * np.linalg.norm(p1):
            raise ValueError("x0 and x1 must be linearly independent")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "K0", _as_region(self.K0, x0, self.n))
        object.__setattr__(self, "K1", _as_region(self.K1, x1, self.n))
        if self.K_lam is not None:
            object.__setattr__(self, "K_lam", _as_region(self.K_lam, self.x_lam, self.n))
        for K in (self.K0, self.K1, self.K_lam):
            if K is not None and K.dim != self.n + 1:
                raise ValueError(f"region dimension {K.dim} does not match n = {self.n}")

    @property
    def x_lam(self) -> np.ndarray:
        return (1 - self.lam) * self.x0 + self.lam * self.x1

    def describe(self) -> dict:
        return {"n": self.n, "lam": self.lam, "x0": self.x0.tolist(), "x1": self.x1.tolist(),
                "K0": self.K0.describe(), "K1": self.K1.describe(), "psi": self.psi.describe(),
                "K_lam": "minimal" if self.K_lam is None else self.K_lam.describe()}


def build_k_lambda(K0: Region, K1: Region, lam: float, t_samples: Optional[int] = None,
                   pair_samples: int = 4000, seed: int = 0, method: str = "auto",
                   band: float = 1e-3) -> PolytopeRegion:
    """Minimal K_lam = union over t of ((1 - t) K0 + t K1) on H_lam, in local coordinates.

    method "exact" (two polytopes with r > 0 at every vertex) maps both sets
    by G, averages them and maps back. method "sampled" takes vertex pairs
    and ``pair_samples`` random pairs and keeps their crossing points; with
    ``t_samples`` set it instead scans that many t values per pair and keeps
    combinations within ``band`` of H_lam. "auto" picks "exact" when it applies.
    The result is the convex hull of the points found.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie strictly inside (0, 1), got {lam}")
    polys = isinstance(K0, PolytopeRegion) and isinstance(K1, PolytopeRegion)
    if method == "auto":
        method = "exact" if polys and K0.vertices[:, -1].min() > 0 and K1.vertices[:, -1].min() > 0 \
            else "sampled"
    if method == "exact":
        if not polys:
            raise ValueError("exact construction needs two polytopes")
        g0, g1 = g_map(K0.vertices), g_map(K1.vertices)
        pts = ((1 - lam) * g0[:, None, :] + lam * g1[None, :, :]).reshape(-1, g0.shape[1])
        pts = PolytopeRegion(pts).vertices
        return PolytopeRegion(g_map(pts))
    if method != "sampled":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    s0, s1 = K0.sample(rng, pair_samples), K1.sample(rng, pair_samples)
    if isinstance(K0, PolytopeRegion) and isinstance(K1, PolytopeRegion):
        v0, v1 = K0.vertices, K1.vertices
        pairs0 = np.vstack([np.repeat(v0, v1.shape[0], axis=0), s0[v0.shape[0]:]])
        pairs1 = np.vstack([np.tile(v1, (v0.shape[0], 1)), s1[v1.shape[0]:]])
    else:
        m = min(s0.shape[0], s1.shape[0])
        pairs0, pairs1 = s0[:m], s1[:m]
    if t_samples is None:
        t, pts = crossing(pairs0, pairs1, lam)
        pts = pts[np.isfinite(t)]
    else:
        ts = (np.arange(t_samples) + 0.5) / t_samples
        r0, r1 = pairs0[:, -1:], pairs1[:, -1:]
        # E-perp part of the combination in the (x0, x1) basis is ((1-t) r0, t r1);
        # it lies on R^+ x_lam when (1-t) r0 / (1-lam) = t r1 / lam
        c0, c1 = (1 - ts)[None] * r0, ts[None] * r1
        sigma = c0 + c1
        off = np.abs(c0 * lam - c1 * (1 - lam)) / np.maximum(sigma, 1e-300)
        hit = off <= band
        i, j = np.nonzero(hit)
        tt = ts[j][:, None]
        a = (1 - tt) * pairs0[i, :-1] + tt * pairs1[i, :-1]
        pts = np.column_stack([a, sigma[i, j]])
    if pts.shape[0] == 0:
        raise ValueError("no combination of K0 and K1 lands in H_lam")
    return PolytopeRegion(pts)


# --------------------------------------------------------------------- hypothesis

def check_inclusion(K0: Region, K1: Region, K_lam: Region, lam: float, pair_samples: int = 4000,
                    seed: int = 0, tol: float = 1e-7) -> HypothesisCheck:
    """Spot-check ((1 - t) K0 + t K1) on H_lam inside K_lam.

    Crossing points of sampled pairs (all vertex pairs for polytopes) are
    tested against K_lam; ``worst`` is the largest membership gap (relative
    for polytopes, in excess of the grid allowance for epi regions), so the
    check passes when worst <= tol. The witness holds t, both end points and
    the crossing point in local coordinates.
    """
    rng = np.random.default_rng(seed)
    s0, s1 = K0.sample(rng, pair_samples), K1.sample(rng, pair_samples)
    if isinstance(K0, PolytopeRegion) and isinstance(K1, PolytopeRegion):
        v0, v1 = K0.vertices, K1.vertices
        p0 = np.vstack([np.repeat(v0, v1.shape[0], axis=0), s0[v0.shape[0]:]])
        p1 = np.vstack([np.tile(v1, (v0.shape[0], 1)), s1[v1.shape[0]:]])
    else:
        m = min(s0.shape[0], s1.shape[0])
        p0, p1 = s0[:m], s1[:m]
    t, pts = crossing(p0, p1, lam)
    ok = np.isfinite(t)
    p0, p1, t, pts = p0[ok], p1[ok], t[ok], pts[ok]
    gap = K_lam.gap(pts)
    if isinstance(K_lam, EpiRegion):
        rel = gap - K_lam.tolerance(pts)
    else:
        rel = gap / (1.0 + np.abs(pts).max(axis=1))
    i = int(np.argmax(rel))
    worst = float(rel[i])
    passed = bool(worst <= tol)
    witness = None if passed else {"t": float(t[i]), "k0": p0[i].tolist(), "k1": p1[i].tolist(),
                                   "point": pts[i].tolist()}
    return HypothesisCheck(passed, worst, tol, witness)


# --------------------------------------------------------------------- verification

def verify_busemann(inst: BusemannInstance, rel_tol: float = REL_TOL, pair_samples: int = 4000,
                    seed: int = 0, hyp_tol: float = 1e-7) -> VerificationReport:
    """|x_lam| / I(K_lam) <= (1 - lam) |x0| / I(K0) + lam |x1| / I(K1) with
    I the integral of exp(-psi). margin = lhs - rhs, so it is negative when
    the inequality holds with room to spare."""
    K_lam = inst.K_lam
    supplied = K_lam is not None
    if supplied:
        hyp = check_inclusion(inst.K0, inst.K1, K_lam, inst.lam, pair_samples, seed, hyp_tol)
    else:
        K_lam = build_k_lambda(inst.K0, inst.K1, inst.lam, pair_samples=pair_samples, seed=seed)
        hyp = HypothesisCheck(True, -INF, hyp_tol, None)
    ints = [slab_integral(K, x, inst.psi, inst.n)
            for K, x in ((inst.K0, inst.x0), (inst.K1, inst.x1), (K_lam, inst.x_lam))]
    for name, I in zip(("K0", "K1", "K_lam"), ints):
        if not I.value > 0:
            raise ValueError(f"integral of exp(-psi) over {name} is zero")
    norms = [float(np.linalg.norm(x)) for x in (inst.x0, inst.x1, inst.x_lam)]
    lhs = norms[2] / ints[2].value
    rhs = (1 - inst.lam) * norms[0] / ints[0].value + inst.lam * norms[1] / ints[1].value
    resolution = {"orders": [I.order for I in ints], "quad_error": [I.error for I in ints],
                  "pair_samples": pair_samples}
    details = {"integrals": [I.value for I in ints], "norms": norms,
               "k_lam": K_lam.describe() if isinstance(K_lam, PolytopeRegion) else "supplied"}
    return VerificationReport("busemann", lhs, rhs, lhs - rhs, rel_tol, resolution, hyp.to_dict(),
                              inst.describe(), _verdict(lhs, rhs, rel_tol, hyp.passed, upper=True), details)


# --------------------------------------------------------------------- oracle

def hull_slice(K0_ambient, K1_ambient, x_lam, n: int = 1) -> PolytopeRegion:
    """conv(K0 u K1) cut by the hyperplane E + R x_lam, in local coordinates of H_lam.

    The cut of a polytope by a hyperplane is the hull of the cuts of all
    segments between its vertices.
    """
    pts = np.vstack([np.atleast_2d(K0_ambient), np.atleast_2d(K1_ambient)]).astype(float)
    try:
        pts = pts[ConvexHull(pts).vertices]
    except QhullError:
        pass
    xp = _perp(x_lam, n)
    normal = np.zeros(n + 2)
    normal[n:] = [-xp[1], xp[0]]
    d = pts @ normal
    scale = GEOM_TOL * (1.0 + np.abs(pts).max())
    on = pts[np.abs(d) <= scale]
    i, j = np.nonzero((d[:, None] < -scale) & (d[None, :] > scale))
    s = d[i] / (d[i] - d[j])
    cut = pts[i] + s[:, None] * (pts[j] - pts[i])
    found = np.vstack([on, cut])
    if found.shape[0] == 0:
        raise ValueError("the hyperplane misses conv(K0 u K1)")
    return PolytopeRegion(to_local(found, x_lam, n, tol=1e-6))


def hausdorff(P: PolytopeRegion, Q: PolytopeRegion) -> float:
    """Hausdorff distance of two convex polytopes (attained at a vertex)."""
    d1 = max(Q.distance(v) for v in P.vertices)
    d2 = max(P.distance(v) for v in Q.vertices)
    return max(d1, d2)


# --------------------------------------------------------------------- random instances

def random_polygon(rng: np.random.Generator, n: int = 1, count: Optional[int] = None) -> np.ndarray:
    """Local vertices of a random convex polytope with r in about [0.3, 2.6]."""
    d = n + 1
    count = int(rng.integers(5, 9)) if count is None else count
    center = np.concatenate([rng.uniform(-1.0, 1.0, n), rng.uniform(0.9, 1.8, 1)])
    dirs = rng.normal(size=(count, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return center + dirs * rng.uniform(0.25, 0.8, (count, 1))


def random_direction(rng: np.random.Generator, n: int, angle: float) -> np.ndarray:
    x = np.zeros(n + 2)
    x[n:] = rng.uniform(0.5, 2.0) * np.array([np.cos(angle), np.sin(angle)])
    return x


def random_potential(rng: np.random.Generator, n: int, kind: str) -> Potential:
    d = n + 2
    if kind == "max_affine":
        k = int(rng.integers(2, 5))
        return Potential("max_affine", rng.uniform(-0.8, 0.8, (k, d)), rng.uniform(0.0, 1.0, k))
    if kind == "quadratic":
        M = rng.normal(size=(d, d)) * 0.4
        return Potential("quadratic", M @ M.T, rng.uniform(-0.5, 0.5, d))
    return Potential()


def random_instance(seed: int, n: int = 1, classical: bool = False, lam: Optional[float] = None) -> BusemannInstance:
    """Two random convex polytopes in half-spaces at angles at least 0.4 apart.

    classical: psi = 0 and K_lam the slice of conv(K0 u K1); otherwise a
    random max-affine or quadratic potential and the minimal K_lam.
    """
    rng = np.random.default_rng(seed)
    th0 = rng.uniform(0.1, 1.2)
    th1 = th0 + rng.uniform(0.4, 1.6)
    x0, x1 = random_direction(rng, n, th0), random_direction(rng, n, th1)
    lam = float(rng.uniform(0.15, 0.85)) if lam is None else lam
    P0, P1 = PolytopeRegion(random_polygon(rng, n)), PolytopeRegion(random_polygon(rng, n))
    if classical:
        amb0, amb1 = to_ambient(P0.vertices, x0, n), to_ambient(P1.vertices, x1, n)
        x_lam = (1 - lam) * x0 + lam * x1
        return BusemannInstance(x0, x1, lam, P0, P1, Potential(), hull_slice(amb0, amb1, x_lam, n), n)
    kind = ("max_affine", "quadratic")[seed % 2]
    return BusemannInstance(x0, x1, lam, P0, P1, random_potential(rng, n, kind), None, n)


def symmetric_instance(angle: float = 0.6, n: int = 1, vertices=None) -> BusemannInstance:
    """K1 is the mirror image of K0 under z -> -z, lam = 1/2, psi = 0."""
    x0 = np.zeros(n + 2)
    x0[n:] = [np.cos(angle), np.sin(angle)]
    x1 = x0.copy()
    x1[-1] = -x1[-1]
    if vertices is None:
        vertices = random_polygon(np.random.default_rng(7), n)
    P = PolytopeRegion(vertices)
    return BusemannInstance(x0, x1, 0.5, P, P, Potential(), None, n)


def shrink(K: PolytopeRegion, factor: float) -> PolytopeRegion:
    c = K.vertices.mean(axis=0)
    return PolytopeRegion(c + factor * (K.vertices - c))


# --------------------------------------------------------------------- reduction

@dataclass(frozen=True)
class ReductionEmbedding:
    """K_i = {(x, s_i z, z) : z > phi_i(x)} in H_(x_i), x_i = (0, s_i, 1), and
    psi(x, s, z) = alpha(x) + z. phi_lam defaults to the weighted geometric
    inf-convolution of phi0 and phi1."""

    s0: float
    s1: float
    lam: float
    phi0: GridFunction
    phi1: GridFunction
    phi_lam: Optional[GridFunction] = None
    alpha: Optional[GridFunction] = None
    params: Optional[ConvolutionParams] = None

    def __post_init__(self):
        if not 0 < self.s0 < self.s1:
            raise ValueError("need 0 < s0 < s1")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie strictly inside (0, 1), got {self.lam}")
        if self.phi0.dim != self.phi1.dim:
            raise ValueError("phi0 and phi1 must have the same dimension")
        if self.alpha is not None and self.alpha.dim != self.phi0.dim:
            raise ValueError("alpha dimension does not match")
        if self.phi_lam is None:
            params = self.params or ConvolutionParams(self.lam)
            object.__setattr__(self, "phi_lam", ginf_conv(self.phi0, self.phi1, params))

    @property
    def n(self) -> int:
        return self.phi0.dim

    @property
    def s_lam(self) -> float:
        return (1 - self.lam) * self.s0 + self.lam * self.s1

    def direction(self, s: float) -> np.ndarray:
        x = np.zeros(self.n + 2)
        x[self.n:] = [s, 1.0]
        return x

    def instance(self) -> BusemannInstance:
        psi = Potential("epi_weight", alpha=self.alpha)
        return BusemannInstance(self.direction(self.s0), self.direction(self.s1), self.lam,
                                EpiRegion(self.phi0), EpiRegion(self.phi1), psi,
                                EpiRegion(self.phi_lam), self.n)

    def measure(self) -> Optional[NamedMeasure]:
        if self.alpha is None:
            return None
        return NamedMeasure("weighted", self.n, alpha=self.alpha)


@dataclass
class ReductionReport:
    checks: dict
    passed: bool

    @property
    def failed(self) -> list:
        return [k for k, v in self.checks.items() if not v["passed"]]

    def to_dict(self) -> dict:
        return _jsonable({"passed": self.passed, "failed": self.failed, "checks": self.checks})


def _sub(passed, value, tol, witness=None) -> dict:
    return {"passed": bool(passed), "value": float(value), "tol": float(tol), "witness": witness}


def reduction_check(emb: ReductionEmbedding, seed: int = 0, samples: int = 2000,
                    identity_tol: float = 1e-6, exact_tol: float = 1e-9,
                    inclusion_tol: Optional[float] = None) -> ReductionReport:
    """Four checks of the embedding of epi-graphs into half-spaces of R^(n+2).

    identity: integral of exp(-phi_i) against exp(-alpha) equals
      (1 + s_i^2)^(-1/2) times the integral of exp(-psi) over K_i (relative);
    involution: F~(F~(p)) = p on random points;
    segments: F~ maps points of a segment onto the segment between the images;
    inclusion: for sampled k0 in K0, k1 in K1 the point of [k0, k1] on H_lam
      satisfies F~(k) = (1 - lam) F~(k0) + lam F~(k1) and lies in K_lam. The
      membership gap phi_lam(x) - z may reach ``inclusion_tol`` (default the
      grid allowance of EpiRegion.tolerance) from grid error.
    """
    rng = np.random.default_rng(seed)
    n = emb.n
    inst = emb.instance()
    checks = {}

    worst, wit = 0.0, None
    for name, phi, s in (("0", emb.phi0, emb.s0), ("lam", emb.phi_lam, emb.s_lam), ("1", emb.phi1, emb.s1)):
        left = integrate_exp_neg(phi, emb.measure())
        right = slab_integral(EpiRegion(phi), emb.direction(s), inst.psi, n).value / np.sqrt(1 + s * s)
        err = abs(left - right) / max(abs(left), 1e-300)
        if err > worst:
            worst, wit = err, {"i": name, "measure": left, "slab": right}
    checks["identity"] = _sub(worst <= identity_tol, worst, identity_tol, wit if worst > identity_tol else None)

    p = np.column_stack([rng.normal(size=(samples, n + 1)) * 3, rng.uniform(0.05, 10, samples)])
    back = f_tilde(f_tilde(p))
    res = np.abs(back - p).max(axis=1) / (1 + np.abs(p).max(axis=1))
    i = int(np.argmax(res))
    checks["involution"] = _sub(res[i] <= exact_tol, res[i], exact_tol,
                                None if res[i] <= exact_tol else {"point": p[i].tolist()})

    q = np.column_stack([rng.normal(size=(samples, n + 1)) * 3, rng.uniform(0.05, 10, samples)])
    t = rng.uniform(0, 1, samples)[:, None]
    mid = (1 - t) * p + t * q
    A, B, M = f_tilde(p), f_tilde(q), f_tilde(mid)
    d = B - A
    beta = np.sum((M - A) * d, axis=1) / np.sum(d * d, axis=1)
    foot = A + beta[:, None] * d
    scale = 1 + np.maximum(np.abs(A).max(axis=1), np.abs(B).max(axis=1))
    res = np.linalg.norm(M - foot, axis=1) / scale
    # the image must also lie between the end images
    res = np.maximum(res, np.maximum(-beta, beta - 1))
    i = int(np.argmax(res))
    checks["segments"] = _sub(res[i] <= exact_tol, res[i], exact_tol,
                              None if res[i] <= exact_tol else {"p": p[i].tolist(), "q": q[i].tolist(),
                                                                "t": float(t[i, 0])})

    k0, k1 = inst.K0.sample(rng, samples), inst.K1.sample(rng, samples)
    m = min(k0.shape[0], k1.shape[0])
    # F~ divides by z; below Z_FLOOR rounding swamps the chain residual
    keep = (k0[:m, -1] >= Z_FLOOR) & (k1[:m, -1] >= Z_FLOOR)
    k0, k1 = k0[:m][keep], k1[:m][keep]
    tt, loc = crossing(k0, k1, emb.lam)
    a0, a1 = to_ambient(k0, inst.x0, n), to_ambient(k1, inst.x1, n)
    amb = (1 - tt)[:, None] * a0 + tt[:, None] * a1
    on_plane = np.abs(amb[:, n] - emb.s_lam * amb[:, n + 1]) / (1 + np.abs(amb).max(axis=1))
    chain = f_tilde(amb) - ((1 - emb.lam) * f_tilde(a0) + emb.lam * f_tilde(a1))
    chain = np.abs(chain).max(axis=1) / (1 + np.abs(f_tilde(amb)).max(axis=1))
    exact_res = float(max(on_plane.max(), chain.max()))
    gap = inst.K_lam.gap(loc)
    allow = inst.K_lam.tolerance(loc) if inclusion_tol is None else np.full(gap.shape, inclusion_tol)
    excess = gap - allow
    i = int(np.argmax(excess))
    ok = exact_res <= exact_tol and excess[i] <= 0
    witness = None
    if not ok:
        witness = {"t": float(tt[i]), "k0": a0[i].tolist(), "k1": a1[i].tolist(), "point": amb[i].tolist(),
                   "gap": float(gap[i]), "chain_residual": exact_res}
    checks["inclusion"] = _sub(ok, gap[i], allow[i], witness)
    checks["inclusion"]["chain_residual"] = exact_res
    return ReductionReport(checks, all(c["passed"] for c in checks.values()))


def random_embedding(seed: int, shape=(257,), box=((-4.0, 4.0),), weight: str = "gaussian",
                     params: Optional[ConvolutionParams] = None) -> ReductionEmbedding:
    """phi0, phi1 random Cvx0 max-affine functions, alpha Gaussian or a random max-affine weight."""
    from .inequalities import InstanceGenerator, generate, max_affine, max_affine_terms
    rng = np.random.default_rng(10_000 + seed)
    phi0 = generate(InstanceGenerator("cvx0-max-affine", 2 * seed, 1, box=box, shape=shape))
    phi1 = generate(InstanceGenerator("cvx0-max-affine", 2 * seed + 1, 1, box=box, shape=shape))
    if weight == "gaussian":
        alpha = GridFunction.from_callable(lambda x: 0.5 * np.sum(x * x, axis=1), box, shape)
    elif weight == "max_affine":
        a, b = max_affine_terms(rng, 1, 3, (0.2, 1.0))
        alpha = GridFunction.from_callable(max_affine(a, b), box, shape)
    else:
        alpha = None
    s0 = float(rng.uniform(0.5, 1.5))
    s1 = s0 + float(rng.uniform(0.5, 2.0))
    lam = float(rng.uniform(0.2, 0.8))
    return ReductionEmbedding(s0, s1, lam, phi0, phi1, None, alpha, params)
