"""Extended-real functions sampled on uniform grids over boxes in R^n (n = 1, 2).

+inf is stored as IEEE ``inf``; numpy arithmetic already gives the rules the
toolkit relies on (``c + inf = inf``, ``c / inf = 0`` for finite ``c``).
Outside its box a grid function is +inf.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

INF = np.inf

# Fractional offsets closer than this to a node snap onto it, so evaluating
# exactly at a node never picks up an infinite neighbour.
_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A function sampled at the nodes of ``np.linspace(lo, hi, N)`` per axis.

    ``values`` is indexed ``values[i0, i1, ...]`` (row-major), ``+inf`` allowed.
    The array is copied and frozen on construction.
    """

    box: tuple[tuple[float, float], ...]
    values: np.ndarray

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        vals = np.array(self.values, dtype=float)
        if len(box) not in (1, 2):
            raise ValueError(f"only dimensions 1 and 2 are supported, got {len(box)}")
        if vals.ndim != len(box):
            raise ValueError(f"values have {vals.ndim} axes but box has {len(box)}")
        for lo, hi in box:
            if not lo < hi:
                raise ValueError(f"empty box axis [{lo}, {hi}]")
        if min(vals.shape) < 2:
            raise ValueError(f"need at least 2 samples per axis, got shape {vals.shape}")
        if np.isnan(vals).any():
            raise ValueError("grid values contain NaN")
        if np.isneginf(vals).any():
            raise ValueError("grid values contain -inf")
        vals.setflags(write=False)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], box, shape) -> "GridFunction":
        """Sample ``fn`` (points of shape (K, n) -> (K,)) at the grid nodes."""
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        nodes = grid_nodes(box, shape)
        vals = np.asarray(fn(nodes), dtype=float).reshape(shape)
        return cls(box, vals)

    @classmethod
    def constant(cls, c: float, box, shape) -> "GridFunction":
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        return cls(box, np.full(shape, float(c)))

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.box, self.shape)]

    @property
    def steps(self) -> np.ndarray:
        return np.array([(hi - lo) / (n - 1) for (lo, hi), n in zip(self.box, self.shape)])

    @property
    def h(self) -> float:
        """Largest grid step."""
        return float(self.steps.max())

    def nodes(self) -> np.ndarray:
        return grid_nodes(self.box, self.shape)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def finite_max(self) -> float:
        fin = self.values[np.isfinite(self.values)]
        return float(fin.max()) if fin.size else 0.0

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.box, np.asarray(values, dtype=float).reshape(self.shape))

    def same_grid(self, other: "GridFunction") -> bool:
        return self.box == other.box and self.shape == other.shape

    def resample(self, box, shape) -> "GridFunction":
        return GridFunction.from_callable(self.evaluate, box, shape)

    def evaluate(self, points, outside: float = INF) -> np.ndarray:
        """Multilinear interpolation at ``points``; +inf where any stencil node
        carrying positive weight is +inf, ``outside`` off the box."""
        pts = _as_points(points, self.dim)
        out = np.full(pts.shape[0], float(outside))
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        span = hi - lo
        inside = np.all((pts >= lo - 1e-12 * span) & (pts <= hi + 1e-12 * span), axis=1)
        if not inside.any():
            return out
        p = pts[inside]
        steps = self.steps
        shape = np.array(self.shape)
        u = (p - lo) / steps
        idx = np.clip(np.floor(u).astype(np.int64), 0, shape - 2)
        w = u - idx
        near = np.abs(w - np.round(w)) < _SNAP
        w = np.where(near, np.round(w), w)
        w = np.clip(w, 0.0, 1.0)
        acc = np.zeros(p.shape[0])
        hit_inf = np.zeros(p.shape[0], dtype=bool)
        for corner in itertools.product((0, 1), repeat=self.dim):
            c = np.array(corner)
            wt = np.prod(np.where(c == 1, w, 1.0 - w), axis=1)
            val = self.values[tuple((idx + c).T)]
            live = wt > 0
            hit_inf |= live & np.isinf(val)
            acc += np.where(live & np.isfinite(val), wt * np.where(np.isfinite(val), val, 0.0), 0.0)
        out[inside] = np.where(hit_inf, INF, acc)
        return out

    def __call__(self, points, outside: float = INF) -> np.ndarray:
        return self.evaluate(points, outside)


def grid_nodes(box, shape) -> np.ndarray:
    axes = [np.linspace(lo, hi, int(n)) for (lo, hi), n in zip(box, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if dim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        return pts.reshape(-1, 1)
    return pts.reshape(-1, dim)


def eval_at(f: GridFunction, x) -> float:
    """Value of ``f`` at a single point ``x``."""
    return float(f.evaluate(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))[0])


def scaled_box(box, factor: float):
    return tuple((lo * factor, hi * factor) for lo, hi in box)


@dataclass(frozen=True)
class Quadrature:
    """Tensor-product rule on the grid, each cell split into 2**refinement parts."""

    rule: str = "midpoint"
    refinement: int = 0

    def __post_init__(self):
        if self.rule not in ("midpoint", "trapezoid"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.refinement < 0:
            raise ValueError("refinement must be >= 0")

    def refined(self, level: int) -> "Quadrature":
        return Quadrature(self.rule, level)

    def points_weights(self, box, shape) -> tuple[np.ndarray, np.ndarray]:
        sub = 2 ** self.refinement
        pts_axes, w_axes = [], []
        for (lo, hi), n in zip(box, shape):
            cells = (int(n) - 1) * sub
            step = (hi - lo) / cells
            if self.rule == "midpoint":
                pts = lo + (np.arange(cells) + 0.5) * step
                w = np.full(cells, step)
            else:
                pts = np.linspace(lo, hi, cells + 1)
                w = np.full(cells + 1, step)
                w[0] = w[-1] = step / 2
            pts_axes.append(pts)
            w_axes.append(w)
        mesh = np.meshgrid(*pts_axes, indexing="ij")
        wmesh = np.meshgrid(*w_axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        w = np.prod(np.stack([m.reshape(-1) for m in wmesh], axis=1), axis=1)
        return pts, w


DEFAULT_QUAD = Quadrature()


def integrate(fn: Callable[[np.ndarray], np.ndarray], box, shape, quad: Quadrature = DEFAULT_QUAD) -> float:
    pts, w = quad.points_weights(box, shape)
    vals = np.asarray(fn(pts), dtype=float)
    return float(np.dot(w, vals))


def integrate_refined(fn, box, shape, rule: str = "midpoint", level: int = 1) -> tuple[float, float]:
    """Integral at refinement ``level`` and the estimate |I_level - I_(level-1)|."""
    if level < 1:
        raise ValueError("level must be >= 1 to form an error estimate")
    prev = integrate(fn, box, shape, Quadrature(rule, level - 1))
    cur = integrate(fn, box, shape, Quadrature(rule, level))
    return cur, abs(cur - prev)


def integrate_exp_neg(phi: GridFunction, measure=None, quad: Quadrature = DEFAULT_QUAD) -> float:
    """Integral of exp(-phi) over phi's box against ``measure`` (Lebesgue if None).

    ``measure`` must provide ``base_density(points)`` on R^n.
    """
    pts, w = quad.points_weights(phi.box, phi.shape)
    vals = np.exp(-phi.evaluate(pts))
    if measure is not None:
        dens = np.asarray(measure.base_density(pts), dtype=float)
        bad = ~np.isfinite(dens)
        if bad.any():
            node = pts[np.argmax(bad)]
            raise ValueError(f"non-finite density at node {node.tolist()}")
        vals = vals * dens
    return float(np.dot(w, vals))


def integrate_power(f: GridFunction, p: float, quad: Quadrature = DEFAULT_QUAD, weight=None) -> float:
    """Integral of f**p over the box, optionally against a base density."""
    if np.isinf(f.values).any():
        bad = np.unravel_index(np.argmax(np.isinf(f.values)), f.shape)
        raise ValueError(f"function is +inf at node {list(bad)}; L^p integral diverges")
    pts, w = quad.points_weights(f.box, f.shape)
    vals = np.maximum(f.evaluate(pts), 0.0) ** p
    if weight is not None:
        vals = vals * weight(pts)
    return float(np.dot(w, vals))


def lp_norm(f: GridFunction, p: float, quad: Quadrature = DEFAULT_QUAD) -> float:
    """(integral of f**p)**(1/p)."""
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    return integrate_power(f, p, quad) ** (1.0 / p)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def fiber_integral(member, density, edges: np.ndarray, n_fibers: int, bisect: int = 50) -> np.ndarray:
    """Integrate ``density`` over ``{r : member(r)}`` along a batch of fibers.

    ``member(f, r)`` and ``density(f, r)`` take broadcastable arrays of fiber
    indices and abscissae. ``edges`` is the common r-partition; a cell whose end
    points disagree on membership is split at the crossing found by bisection.
    Returns one value per fiber.
    """
    edges = np.asarray(edges, dtype=float)
    fi = np.arange(n_fibers)[:, None]
    inside = member(fi, edges[None, :])
    lo, hi = edges[:-1][None, :], edges[1:][None, :]
    a = np.broadcast_to(lo, (n_fibers, lo.shape[1])).copy()
    b = np.broadcast_to(hi, a.shape).copy()
    left, right = inside[:, :-1], inside[:, 1:]
    mixed = left != right
    if mixed.any():
        fr, cr = np.nonzero(mixed)
        x0, x1 = lo[0, cr].copy(), hi[0, cr].copy()
        in0 = left[fr, cr]
        for _ in range(bisect):
            mid = 0.5 * (x0 + x1)
            m_in = member(fr, mid)
            same = m_in == in0
            x0 = np.where(same, mid, x0)
            x1 = np.where(same, x1, mid)
        cross = 0.5 * (x0 + x1)
        # keep the part of the cell on the "inside" side of the crossing
        a[fr, cr] = np.where(in0, a[fr, cr], cross)
        b[fr, cr] = np.where(in0, cross, b[fr, cr])
    keep = left | right
    total = np.zeros(n_fibers)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    for xg, wg in zip(_GL_NODES, _GL_WEIGHTS):
        r = mid + half * xg
        vals = density(fi, r)
        total += np.sum(np.where(keep, wg * half * vals, 0.0), axis=1)
    return total

