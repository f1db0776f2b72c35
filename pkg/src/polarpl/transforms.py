"""Legendre, polarity and gauge transforms of grid functions, the point map
F(x, z) = (x/z, 1/z), polar sets and F-images of epi-graphs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from . import _kernels
from .grid import INF, GridFunction, grid_nodes, scaled_box

DEFAULT_FACTOR = 4.0
GAUGE_R_GRID = np.logspace(-6, 6, 2049)
GAUGE_BISECT = 48
GAUGE_STRIDE = 8


def zero_tolerance(phi: GridFunction) -> float:
    return 1e-9 * (1.0 + phi.finite_max())


def _output_grid(phi: GridFunction, out_box, out_shape, factor):
    box = tuple(out_box) if out_box is not None else scaled_box(phi.box, factor)
    shape = tuple(out_shape) if out_shape is not None else phi.shape
    return box, shape


# --------------------------------------------------------------------- Legendre

def _conj_axis(vals: np.ndarray, xs: np.ndarray, ys: np.ndarray, axis: int) -> np.ndarray:
    """max over x along ``axis`` of x*y - vals(x), for every y in ``ys``."""
    v = np.moveaxis(vals, axis, -1)  # (..., N)
    out = np.empty(v.shape[:-1] + (ys.size,))
    chunk = max(1, 4_000_000 // max(1, v.size))
    for s in range(0, ys.size, chunk):
        yy = ys[s:s + chunk]
        cand = xs[None, :] * yy[:, None]  # (c, N)
        out[..., s:s + chunk] = np.max(cand - v[..., None, :], axis=-1)
    return np.moveaxis(out, -1, axis)


def legendre(phi: GridFunction, out_box=None, out_shape=None, factor: float = DEFAULT_FACTOR) -> GridFunction:
    """Discrete convex conjugate sup_x {<x, y> - phi(x)} over the grid nodes.

    In two dimensions the supremum is taken one axis at a time, which is exact
    for the discrete problem.
    """
    if not np.isfinite(phi.values).any():
        raise ValueError("Legendre transform of a function that is +inf everywhere is -inf")
    box, shape = _output_grid(phi, out_box, out_shape, factor)
    ys = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box, shape)]
    xs = phi.axes
    with np.errstate(invalid="ignore"):
        if phi.dim == 1:
            vals = _conj_axis(phi.values, xs[0], ys[0], 0)
        else:
            inner = _conj_axis(phi.values, xs[1], ys[1], 1)
            vals = _conj_axis(-inner, xs[0], ys[0], 0)
    return GridFunction(box, vals)


# --------------------------------------------------------------------- polar sets

@dataclass(frozen=True)
class PolarSet:
    """K° = {y : <x, y> <= 1 for x in K}, stored through the extreme points of K."""

    generators: np.ndarray
    tol: float = 1e-9

    def support(self, ys: np.ndarray) -> np.ndarray:
        ys = np.atleast_2d(ys)
        if self.generators.shape[0] == 0:
            return np.full(ys.shape[0], -INF)
        return np.max(ys @ self.generators.T, axis=1)

    def contains(self, ys) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        if ys.ndim == 1:
            ys = ys.reshape(-1, self.generators.shape[1])
        return self.support(ys) <= 1.0 + self.tol


def _extreme_points(pts: np.ndarray) -> np.ndarray:
    if pts.shape[1] == 1:
        return np.array([[pts.min()], [pts.max()]])
    if pts.shape[0] <= 3:
        return pts
    try:
        return pts[ConvexHull(pts).vertices]
    except QhullError:
        # collinear: the two farthest points along the principal direction
        d = pts - pts.mean(axis=0)
        axis = np.linalg.svd(d, full_matrices=False)[2][0]
        proj = d @ axis
        return pts[[np.argmin(proj), np.argmax(proj)]]


def polar_set(K, tol: float = 1e-9) -> PolarSet:
    """Polar of a point set (array (m, n)) or of the zero set of a grid function."""
    if isinstance(K, GridFunction):
        pts = K.nodes()[K.flat() <= zero_tolerance(K)]
        dim = K.dim
    else:
        pts = np.asarray(K, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        dim = pts.shape[1] if pts.size else 1
    if pts.shape[0] == 0:
        raise ValueError("polar of an empty set is undefined here")
    return PolarSet(_extreme_points(pts).reshape(-1, dim), tol)


# --------------------------------------------------------------------- polarity

def polarity(phi: GridFunction, out_box=None, out_shape=None, factor: float = DEFAULT_FACTOR) -> GridFunction:
    """The polarity transform.

    Zero at y = 0; +inf off the polar of the zero set; elsewhere the sup over
    nodes with phi > 0 of (<x, y> - 1) / phi(x). Nodes where phi is +inf (and
    the whole region outside the box) contribute exactly 0, so the sup is never
    below 0.
    """
    box, shape = _output_grid(phi, out_box, out_shape, factor)
    ys = grid_nodes(box, shape)
    vals = phi.flat()
    ztol = zero_tolerance(phi)
    zero = vals <= ztol
    if zero.any():
        in_domain = polar_set(phi).contains(ys)
    else:
        in_domain = np.ones(ys.shape[0], dtype=bool)
    pos = (vals > ztol) & np.isfinite(vals)
    xs = phi.nodes()[pos]
    inv = 1.0 / vals[pos]
    order = np.argsort(-np.linalg.norm(xs, axis=1) * inv, kind="stable")
    xs = np.ascontiguousarray(xs[order])
    inv = np.ascontiguousarray(inv[order])
    out = _kernels.polarity_kernel(xs, inv, np.ascontiguousarray(ys), in_domain)
    origin = np.all(np.isclose(ys, 0.0, atol=1e-12), axis=1)
    out[origin] = 0.0
    return GridFunction(box, out.reshape(shape))


# --------------------------------------------------------------------- gauge

def envelope_planes(phi: GridFunction, tol: float = 1e-9) -> Optional[np.ndarray]:
    """Rows (c, d) with max_k <c_k, x> - d_k the lower convex envelope of the
    node data, or None when some value is infinite, the data are flat or a
    node lies above the envelope (non-convex data)."""
    vals = phi.flat()
    if not np.all(np.isfinite(vals)):
        return None
    x = phi.nodes()
    try:
        eq = ConvexHull(np.column_stack([x, vals])).equations
    except QhullError:
        return None
    low = eq[eq[:, -2] < -1e-12]
    c = -low[:, :-2] / low[:, -2:-1]
    d = low[:, -1] / low[:, -2]
    planes = np.unique(np.round(np.column_stack([c, d]), 12), axis=0)
    env = (x @ planes[:, :-1].T - planes[:, -1]).max(axis=1)
    if np.any(np.abs(env - vals) > tol * (1.0 + np.abs(vals))):
        return None
    return np.ascontiguousarray(planes)


def gauge(phi: GridFunction, out_box=None, out_shape=None, factor: float = DEFAULT_FACTOR,
          r_grid: np.ndarray = GAUGE_R_GRID, interpolation: str = "auto") -> GridFunction:
    """inf{r > 0 : phi(x / r) <= 1 / r} over r in [r_grid[0], r_grid[-1]]
    (0 when r_grid[0] qualifies).

    phi(x / r) is read from the lower convex envelope of the node data
    ("envelope") or multilinearly ("multilinear"). "auto" takes the envelope
    when the data are finite and convex. For convex data the envelope is the
    tightest convex interpolant, and it keeps the kinks of phi from being
    smeared over a cell, which matters because the error in r grows like r
    times the error in phi. The envelope is max-affine, so its inf is solved
    per node in closed form; multilinear reads scan the logarithmic r-grid and
    bisect between the first admissible sample and its predecessor.
    """
    if interpolation not in ("auto", "envelope", "multilinear"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    planes = None if interpolation == "multilinear" else envelope_planes(phi)
    if interpolation == "envelope" and planes is None:
        raise ValueError("envelope interpolation needs finite convex node data")
    box, shape = _output_grid(phi, out_box, out_shape, factor)
    xs = np.ascontiguousarray(grid_nodes(box, shape))
    rs = np.asarray(r_grid, dtype=float)
    if planes is not None:
        b = np.asarray(phi.box, dtype=float)
        out = _kernels.gauge_planes_kernel(b[:, 0].copy(), b[:, 1].copy(), xs, rs[0], rs[-1],
                                           np.ascontiguousarray(planes))
        return GridFunction(box, out.reshape(shape))
    vals, lo, step, shp = _kernels.grid_args(phi)
    out = _kernels.gauge_kernel(vals, lo, step, shp, xs, rs, GAUGE_BISECT, GAUGE_STRIDE)
    return GridFunction(box, out.reshape(shape))


# --------------------------------------------------------------------- point map

def f_map(p):
    """F(x, z) = (x / z, 1 / z); accepts one point or an array of points (..., n+1)."""
    p = np.asarray(p, dtype=float)
    z = p[..., -1]
    if np.any(z <= 0):
        raise ValueError("F is defined only for z > 0")
    out = np.empty_like(p)
    out[..., :-1] = p[..., :-1] / z[..., None]
    out[..., -1] = 1.0 / z
    return out


def f_jacobian_abs_det(p, n: int) -> float:
    """|det DF(x, z)| = z^-(n+2)."""
    z = float(np.asarray(p, dtype=float).reshape(-1)[-1])
    if z <= 0:
        raise ValueError("F is defined only for z > 0")
    return z ** (-(n + 2))


def f_tilde(p):
    """(x, s, z) -> (x/z, s/z, 1/z) on R^n x R x R^+ (same formula as F, one more slot)."""
    return f_map(p)


# --------------------------------------------------------------------- epi-graph images

@dataclass(frozen=True)
class EpiPointSet:
    """Finite sample of a region of R^n x R^+; rows are (x, z) with z > 0."""

    points: np.ndarray
    kind: str = "epi-sample"
    source: Optional[GridFunction] = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size and np.any(pts[:, -1] <= 0):
            raise ValueError("all z coordinates must be strictly positive")
        if self.kind not in ("epi-sample", "F-image"):
            raise ValueError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1] - 1

    def membership_gap(self, q: np.ndarray) -> np.ndarray:
        """<= 0 where the source function says ``q`` belongs to the set."""
        phi = self.source
        if self.kind == "epi-sample":
            return phi.evaluate(q[:, :-1]) - q[:, -1]
        pre = f_map(q)
        return phi.evaluate(pre[:, :-1]) - pre[:, -1]


def epi_image(phi: GridFunction, density: int = 24, z_span: tuple[float, float] = (1e-3, 1e3)) -> EpiPointSet:
    """Sample points (x, z) with z > phi(x) on each grid fiber and map them by F."""
    nodes = phi.nodes()
    vals = phi.flat()
    fin = np.isfinite(vals)
    offs = np.geomspace(z_span[0], z_span[1], density)
    x = np.repeat(nodes[fin], density, axis=0)
    z = (vals[fin][:, None] + offs[None, :]).reshape(-1)
    pts = np.column_stack([x, z])
    return EpiPointSet(f_map(pts), "F-image", phi)


@dataclass
class StarCheck:
    star_shaped: bool
    worst_gap: float
    witness: Optional[tuple[list[float], float]]

    def __bool__(self):
        return self.star_shaped


def check_star_shaped(s: EpiPointSet, tol: float = 1e-9, lambdas=None) -> StarCheck:
    """Is lam * p in the set for every sampled p and lam in (0, 1]?

    Uses the generating function's membership test when the set carries one,
    otherwise nearest-sample distance (tolerance ``tol`` in absolute units).
    """
    if s.points.shape[0] == 0:
        raise ValueError("empty point set")
    lams = np.linspace(0.05, 1.0, 20) if lambdas is None else np.asarray(lambdas, dtype=float)
    worst, witness = -INF, None
    tree = None if s.source is not None else cKDTree(s.points)
    for lam in lams:
        q = lam * s.points
        if tree is None:
            with np.errstate(invalid="ignore"):
                gap = s.membership_gap(q)
            gap = np.where(np.isnan(gap), INF, gap)
        else:
            gap = tree.query(q)[0]
        i = int(np.argmax(gap))
        if gap[i] > worst:
            worst = float(gap[i])
            witness = (s.points[i].tolist(), float(lam))
    ok = worst <= tol
    return StarCheck(ok, worst, None if ok else witness)
