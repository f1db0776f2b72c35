"""Infimal convolution and the geometric inf-convolution on grids.

The geometric inf-convolution is computed two ways: the inf-max formula over
t in (0, 1) and decompositions z = (1-t) x + t y, and an independent
epi-graph route that averages F-images of the epi-graphs and maps back.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .grid import INF, GridFunction, grid_nodes
from .transforms import DEFAULT_FACTOR, polarity

THEOREMS = ("classical", "polar", "lp")


def t_grid(count: int) -> np.ndarray:
    """Chebyshev points of (0, 1): symmetric under t -> 1-t, endpoints excluded,
    clustered near 0 and 1 where the weights change fastest."""
    if count < 1:
        raise ValueError("t_samples must be >= 1")
    k = np.arange(count)
    t = 0.5 * (1.0 - np.cos(np.pi * (k + 0.5) / count))
    # exact symmetry (cos rounding is not symmetric to the last bit)
    return 0.5 * (t + (1.0 - t[::-1]))


@dataclass(frozen=True)
class ConvolutionParams:
    """lam: averaging weight; t_samples: size of the t-grid; line_samples:
    x-candidates per grid cell along each axis (1 = the grid nodes)."""

    lam: float = 0.5
    t_samples: int = 65
    line_samples: int = 1

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie strictly inside (0, 1), got {self.lam}")
        if self.t_samples < 1:
            raise ValueError("t_samples must be >= 1")
        if self.line_samples < 1:
            raise ValueError("line_samples must be >= 1")

    @property
    def ts(self) -> np.ndarray:
        """The t-grid plus lam and 1 - lam. At t = lam both weights are 1, which
        is the only usable t where x and y are pinned (e.g. on a box edge)."""
        return np.unique(np.concatenate([t_grid(self.t_samples), [self.lam, 1.0 - self.lam]]))


def _hull_box(*fs: GridFunction):
    return tuple((min(f.box[i][0] for f in fs), max(f.box[i][1] for f in fs)) for i in range(fs[0].dim))


def _check_dims(*fs: GridFunction) -> None:
    if len({f.dim for f in fs}) != 1:
        raise ValueError("all functions must have the same dimension")


def _candidates(phi: GridFunction, line_samples: int):
    """Finite candidate points x and their values, sorted by value."""
    if line_samples == 1:
        xs, vals = phi.nodes(), phi.flat()
    else:
        shape = tuple((n - 1) * line_samples + 1 for n in phi.shape)
        xs = grid_nodes(phi.box, shape)
        vals = phi.evaluate(xs)
    fin = np.isfinite(vals)
    xs, vals = xs[fin], vals[fin]
    order = np.argsort(vals, kind="stable")
    return np.ascontiguousarray(xs[order]), np.ascontiguousarray(vals[order])


def _decompose(phi, psi, ts, a_t, b_t, use_sum, out_box, out_shape, line_samples=1) -> GridFunction:
    zs = np.ascontiguousarray(grid_nodes(out_box, out_shape))
    xs, fx = _candidates(phi, line_samples)
    vals, lo, step, shp = _kernels.grid_args(psi)
    fin = vals[np.isfinite(vals)]
    psi_min = float(fin.min()) if fin.size else 0.0
    if xs.shape[0] == 0 or fin.size == 0:
        return GridFunction(out_box, np.full(out_shape, INF))
    out = _kernels.decomposition_kernel(
        zs, xs, fx, vals, lo, step, shp,
        np.asarray(ts, dtype=float), np.asarray(a_t, dtype=float), np.asarray(b_t, dtype=float),
        use_sum, psi_min)
    return GridFunction(out_box, out.reshape(out_shape))


def inf_conv(phi: GridFunction, psi: GridFunction, lam: float, out_box=None, out_shape=None) -> GridFunction:
    """(phi box_lam psi)(z) = inf {(1-lam) phi(x) + lam psi(y) : z = (1-lam) x + lam y}.

    x runs over phi's grid nodes, psi is interpolated at y. The default output
    grid is the lam-average of the two boxes with phi's shape.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie strictly inside (0, 1), got {lam}")
    _check_dims(phi, psi)
    if out_box is None:
        out_box = tuple(((1 - lam) * a[0] + lam * b[0], (1 - lam) * a[1] + lam * b[1])
                        for a, b in zip(phi.box, psi.box))
    out_shape = tuple(out_shape) if out_shape is not None else phi.shape
    return _decompose(phi, psi, [lam], [1 - lam], [lam], True, out_box, out_shape)


def _ginf(phi, psi, ts, a_t, b_t, ends, out_box, out_shape, line_samples):
    """Inf-max over the t-grid, closed up by the t -> 0 and t -> 1 limits.

    As t -> 0 with x = z and y fixed where psi is finite, the bracket tends to
    ends[0] * phi(z); symmetrically ends[1] * psi(z) as t -> 1. Taking these
    into the min gives the lower semicontinuous value at points (such as the
    end points of a support) that no interior t reaches exactly.
    """
    _check_dims(phi, psi)
    out_box = tuple(out_box) if out_box is not None else _hull_box(phi, psi)
    out_shape = tuple(out_shape) if out_shape is not None else tuple(
        max(a, b) for a, b in zip(phi.shape, psi.shape))
    eta = _decompose(phi, psi, ts, a_t, b_t, False, out_box, out_shape, line_samples)
    if not (np.isfinite(phi.values).any() and np.isfinite(psi.values).any()):
        return eta
    zs = grid_nodes(out_box, out_shape)
    lim = np.minimum(ends[0] * phi.evaluate(zs), ends[1] * psi.evaluate(zs))
    return eta.with_values(np.minimum(eta.flat(), lim))


def ginf_conv(phi: GridFunction, psi: GridFunction, params: ConvolutionParams = ConvolutionParams(),
              out_box=None, out_shape=None) -> GridFunction:
    """Weighted geometric inf-convolution

        inf_t inf_{z=(1-t)x+ty} max{ (1-t)/(1-lam) phi(x), t/lam psi(y) }

    over the t-grid. Discretisation only shrinks the feasible set, so values
    approach the true infimum from above.
    """
    ts = params.ts
    lam = params.lam
    return _ginf(phi, psi, ts, (1 - ts) / (1 - lam), ts / lam, (1 / (1 - lam), 1 / lam), out_box, out_shape, params.line_samples)


def ginf_conv_unweighted(phi: GridFunction, psi: GridFunction, params: ConvolutionParams = ConvolutionParams(),
                         out_box=None, out_shape=None) -> GridFunction:
    """inf_t inf_{z=(1-t)x+ty} max{(1-t) phi(x), t psi(y)}; ``params.lam`` is unused."""
    ts = params.ts
    return _ginf(phi, psi, ts, 1 - ts, ts, (1.0, 1.0), out_box, out_shape, params.line_samples)


def ginf_conv_m(phis: Sequence[GridFunction], params: ConvolutionParams = ConvolutionParams(),
                out_box=None, out_shape=None) -> GridFunction:
    """Unweighted geometric inf-convolution of m >= 2 functions,

        inf over t_1 + ... + t_m = 1 of max_i t_i phi_i(x_i),  z = sum t_i x_i.

    Nesting the inf over the simplex as (m-1) two-term infima gives exactly
    this formula, so it is evaluated by folding the two-term version.
    """
    phis = list(phis)
    if len(phis) < 2:
        raise ValueError("need at least two functions")
    _check_dims(*phis)
    out_box = tuple(out_box) if out_box is not None else _hull_box(*phis)
    out_shape = tuple(out_shape) if out_shape is not None else tuple(
        max(f.shape[i] for f in phis) for i in range(phis[0].dim))
    acc = phis[0]
    for nxt in phis[1:]:
        acc = ginf_conv_unweighted(acc, nxt, params, out_box, out_shape)
    return acc


def ginf_conv_epi_oracle(phi: GridFunction, psi: GridFunction, params: ConvolutionParams = ConvolutionParams(),
                         out_box=None, out_shape=None, ray_samples: int = 64,
                         floor: float = 1e-9) -> GridFunction:
    """Epi-graph route: F((1-lam) F(epi phi) + lam F(epi psi)), read back as a function.

    Over a node x, F(epi phi) is the open segment s (x, 1), 0 < s < 1/phi(x).
    A combination s (x,1) + u (y,1) of the weighted segments lies over
    w = (x s + y u)/(s + u) at height 1/(s + u), and the value at w is the
    lowest such height. In 1D the best combination over each output node is
    solved exactly per pair of nodes. In 2D segment ends are paired with
    sampled fractions of the other segment (0, ``ray_samples`` log-spaced small
    ones and as many evenly spaced ones) and each result is binned to the
    nearest output node. Nodes where phi is 0 have unbounded segments, capped
    at 1/floor.
    """
    _check_dims(phi, psi)
    out_box = tuple(out_box) if out_box is not None else _hull_box(phi, psi)
    out_shape = tuple(out_shape) if out_shape is not None else tuple(
        max(a, b) for a, b in zip(phi.shape, psi.shape))
    sig = np.unique(np.concatenate([[0.0], np.geomspace(1e-6, 1.0 / ray_samples, ray_samples // 4),
                                    np.linspace(0.0, 1.0, ray_samples + 1)[1:]]))
    xs, fx = _candidates(phi, 1)
    ys, gy = _candidates(psi, 1)
    if xs.shape[0] == 0 or ys.shape[0] == 0:
        return GridFunction(out_box, np.full(out_shape, INF))
    lo = np.array([b[0] for b in out_box])
    step = np.array([(b[1] - b[0]) / (n - 1) for b, n in zip(out_box, out_shape)])
    out = _kernels.epi_oracle_kernel(xs, fx, ys, gy, sig, params.lam, lo, step,
                                     np.array(out_shape, dtype=np.int64), floor)
    return GridFunction(out_box, out.reshape(out_shape))


def polar_of_sum(phi: GridFunction, psi: GridFunction, params: ConvolutionParams = ConvolutionParams(),
                 route: str = "formula", out_box=None, out_shape=None,
                 factor: float = DEFAULT_FACTOR) -> GridFunction:
    """Polarity transform of phi + psi.

    route="formula": the unweighted geometric inf-convolution of the two
    polarity transforms; route="direct": polarity(phi + psi) on a shared grid.
    """
    if route == "direct":
        if not phi.same_grid(psi):
            psi = psi.resample(phi.box, phi.shape)
        return polarity(phi.with_values(phi.values + psi.values), out_box, out_shape, factor)
    if route != "formula":
        raise ValueError(f"unknown route {route!r}")
    a = polarity(phi, out_box, out_shape, factor)
    b = polarity(psi, a.box, a.shape)
    return ginf_conv_unweighted(a, b, params, a.box, a.shape)


# --------------------------------------------------------------------- minimal h

def _neg_log(f: GridFunction) -> GridFunction:
    with np.errstate(divide="ignore"):
        return f.with_values(-np.log(f.values))


def minimal_h(f: GridFunction, g: GridFunction, lam: float, theorem: str,
              params: Optional[ConvolutionParams] = None, out_box=None, out_shape=None) -> GridFunction:
    """Smallest h satisfying the hypothesis of the chosen inequality.

    classical: exp(-(phi box_lam psi)); polar: exp(-(phi geo_lam psi)) with
    phi = -log f, psi = -log g (f, g must map into [0, 1]);
    lp: 1 / (((1-lam)/f) geo_lam (lam/g)).
    """
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}")
    for name, u in (("f", f), ("g", g)):
        if not (u.values > 0).any():
            raise ValueError(f"{name} vanishes identically: degenerate instance")
        if (u.values < 0).any():
            raise ValueError(f"{name} takes negative values")
    params = params or ConvolutionParams(lam)
    if params.lam != lam:
        params = ConvolutionParams(lam, params.t_samples, params.line_samples)
    if theorem in ("classical", "polar"):
        for name, u in (("f", f), ("g", g)):
            if u.values.max() > 1.0 + 1e-12:
                raise ValueError(f"{name} exceeds 1; rescale into [0, 1] first")
        phi, psi = _neg_log(f), _neg_log(g)
        if theorem == "classical":
            eta = inf_conv(phi, psi, lam, out_box, out_shape)
        else:
            eta = ginf_conv(phi, psi, params, out_box, out_shape)
        return eta.with_values(np.exp(-eta.values))
    with np.errstate(divide="ignore"):
        phi = f.with_values((1 - lam) / f.values)
        psi = g.with_values(lam / g.values)
    eta = ginf_conv(phi, psi, params, out_box, out_shape)
    with np.errstate(divide="ignore"):
        return eta.with_values(1.0 / eta.values)


@dataclass
class HypothesisCheck:
    """Outcome of sweeping (t, x, y) triples; ``worst`` is min(LHS - RHS)
    (relative to max(1, RHS) for lp) and ``witness`` the triple attaining it."""

    passed: bool
    worst: float
    tol: float
    witness: Optional[dict]

    def __bool__(self):
        return self.passed

    def to_dict(self) -> dict:
        return {"passed": self.passed, "worst": self.worst, "tol": self.tol, "witness": self.witness}


def _thin(f: GridFunction, max_nodes: int):
    xs, vals = f.nodes(), f.flat()
    keep = np.isfinite(vals) & (vals > 0)
    xs, vals = xs[keep], vals[keep]
    if xs.shape[0] > max_nodes:
        sel = np.linspace(0, xs.shape[0] - 1, max_nodes).round().astype(int)
        xs, vals = xs[sel], vals[sel]
    return np.ascontiguousarray(xs), np.ascontiguousarray(vals)


def check_hypothesis(f: GridFunction, g: GridFunction, h: GridFunction, lam: float, theorem: str,
                     params: Optional[ConvolutionParams] = None, tol: Optional[float] = None,
                     max_nodes: int = 2049) -> HypothesisCheck:
    """Test h((1-t)x + ty) >= rhs(f(x), g(y), t) at grid nodes x, y and t on the t-grid.

    rhs is min(f^((1-t)/(1-lam)), g^(t/lam)) for polar, f^(1-lam) g^lam at
    t = lam for classical and min(f/(1-t), g/t) for lp. h is read as the
    largest stencil value around the point (grid resolution cannot place the
    point more precisely) and is 0 off its box. The default tolerance is 4 grid
    steps of h. At most ``max_nodes`` positive nodes of f and of g are used.
    """
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie strictly inside (0, 1), got {lam}")
    params = params or ConvolutionParams(lam)
    tol = 4.0 * h.h if tol is None else float(tol)
    ts = np.array([lam]) if theorem == "classical" else params.ts
    # ties between equally bad triples go to the t closest to lam
    ts = ts[np.argsort(np.abs(ts - lam), kind="stable")]
    mode = {"polar": 0, "classical": 1, "lp": 2}[theorem]
    xs, fx = _thin(f, max_nodes)
    ys, gy = _thin(g, max_nodes)
    if xs.shape[0] == 0 or ys.shape[0] == 0:
        return HypothesisCheck(True, INF, tol, None)
    hv, lo, step, shp = _kernels.grid_args(h)
    worst, wi, wk = _kernels.hypothesis_kernel(ts, xs, fx, ys, gy, hv, lo, step, shp, lam, mode)
    q = int(np.argmin(worst))
    w = float(worst[q])
    ok = bool(w >= -tol)
    witness = None
    if not ok:
        t = float(ts[q])
        x, y = xs[wi[q]], ys[wk[q]]
        witness = {"t": t, "x": x.tolist(), "y": y.tolist(), "z": ((1 - t) * x + t * y).tolist()}
    return HypothesisCheck(ok, w, tol, witness)
