"""Compiled inner loops. Every reduction runs in node-index order so results do
not depend on the thread schedule."""
from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is too old for numba; avoid the fallback warning
    numba.config.THREADING_LAYER = "workqueue"

_SNAP = 1e-9
_INF = np.inf


def set_threads_from_env() -> None:
    cap = os.environ.get("POLAR_PL_THREADS")
    if cap:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True, inline="always")
def _frac(u, n):
    i = int(math.floor(u))
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    w = u - i
    r = round(w)
    if abs(w - r) < _SNAP:
        w = r
    if w < 0.0:
        w = 0.0
    if w > 1.0:
        w = 1.0
    return i, w


@njit(cache=True)
def interp(vals, lo, step, shape, p0, p1, outside, use_max):
    """Value of a 1D/2D grid function at (p0[, p1]).

    ``vals`` is flat row-major. With ``use_max`` the largest live stencil value
    is returned instead of the multilinear blend.
    """
    dim = shape.shape[0]
    n0 = shape[0]
    hi0 = lo[0] + step[0] * (n0 - 1)
    tol0 = 1e-12 * (hi0 - lo[0])
    if p0 < lo[0] - tol0 or p0 > hi0 + tol0:
        return outside
    i0, w0 = _frac((p0 - lo[0]) / step[0], n0)
    if dim == 1:
        a = vals[i0]
        b = vals[i0 + 1]
        live_a = w0 < 1.0
        live_b = w0 > 0.0
        if use_max:
            m = -_INF
            if live_a and a > m:
                m = a
            if live_b and b > m:
                m = b
            return m
        if (live_a and a == _INF) or (live_b and b == _INF):
            return _INF
        acc = 0.0
        if live_a:
            acc += (1.0 - w0) * a
        if live_b:
            acc += w0 * b
        return acc
    n1 = shape[1]
    hi1 = lo[1] + step[1] * (n1 - 1)
    tol1 = 1e-12 * (hi1 - lo[1])
    if p1 < lo[1] - tol1 or p1 > hi1 + tol1:
        return outside
    i1, w1 = _frac((p1 - lo[1]) / step[1], n1)
    acc = 0.0
    m = -_INF
    for c0 in range(2):
        wa = w0 if c0 == 1 else 1.0 - w0
        if wa <= 0.0:
            continue
        for c1 in range(2):
            wb = w1 if c1 == 1 else 1.0 - w1
            if wb <= 0.0:
                continue
            v = vals[(i0 + c0) * n1 + (i1 + c1)]
            if use_max:
                if v > m:
                    m = v
            else:
                if v == _INF:
                    return _INF
                acc += wa * wb * v
    if use_max:
        return m
    return acc


@njit(cache=True, parallel=True)
def polarity_kernel(xs, inv_phi, ys, in_domain):
    """sup_i max(0, (<x_i, y> - 1) / phi_i) per output node y; +inf off domain.

    Inputs must be sorted by |x_i| / phi_i descending: the term is bounded by
    |y| |x_i| / phi_i, so the scan stops once that bound cannot beat the best.
    """
    m = ys.shape[0]
    k = xs.shape[0]
    dim = xs.shape[1]
    out = np.empty(m)
    kappa = np.empty(k)
    for i in range(k):
        nx = xs[i, 0] * xs[i, 0]
        if dim == 2:
            nx += xs[i, 1] * xs[i, 1]
        kappa[i] = math.sqrt(nx) * inv_phi[i]
    for j in prange(m):
        if not in_domain[j]:
            out[j] = _INF
            continue
        ny = ys[j, 0] * ys[j, 0]
        if dim == 2:
            ny += ys[j, 1] * ys[j, 1]
        ny = math.sqrt(ny)
        best = 0.0
        for i in range(k):
            if ny * kappa[i] <= best:
                break
            s = xs[i, 0] * ys[j, 0]
            if dim == 2:
                s += xs[i, 1] * ys[j, 1]
            v = (s - 1.0) * inv_phi[i]
            if v > best:
                best = v
        out[j] = best
    return out


@njit(cache=True, inline="always")
def _gauge_ok(vals, lo, step, shape, xs, j, r):
    """phi(x / r) <= 1 / r with phi read multilinearly."""
    p1 = xs[j, 1] / r if xs.shape[1] == 2 else 0.0
    v = interp(vals, lo, step, shape, xs[j, 0] / r, p1, _INF, False)
    return v <= (1.0 / r) * (1.0 + 1e-12)


@njit(cache=True, parallel=True)
def gauge_kernel(vals, lo, step, shape, xs, rs, bisect, stride):
    """inf{r > 0 : phi(x / r) <= 1 / r} per output node.

    The r-grid is scanned upward every ``stride`` samples, then sample by
    sample inside the block before the first hit, then bisected between the
    first admissible sample and its predecessor.
    """
    m = xs.shape[0]
    out = np.empty(m)
    nr = rs.shape[0]
    for j in prange(m):
        hit = -1
        k = 0
        while k < nr:
            if _gauge_ok(vals, lo, step, shape, xs, j, rs[k]):
                hit = k
                break
            k += stride
        if hit == -1 and _gauge_ok(vals, lo, step, shape, xs, j, rs[nr - 1]):
            hit = nr - 1
        if hit == -1:
            out[j] = _INF
            continue
        first = hit
        for q in range(max(0, hit - stride + 1), hit):
            if _gauge_ok(vals, lo, step, shape, xs, j, rs[q]):
                first = q
                break
        if first == 0:
            out[j] = 0.0
            continue
        a = rs[first - 1]
        b = rs[first]
        for _ in range(bisect):
            c = math.sqrt(a * b)
            if _gauge_ok(vals, lo, step, shape, xs, j, c):
                b = c
            else:
                a = c
        out[j] = b
    return out


@njit(cache=True, parallel=True)
def gauge_planes_kernel(lo, hi, xs, r0, r1, planes):
    """inf{r in [r0, r1] : max_k <c_k, x / r> - d_k <= 1 / r, x / r in the box}
    for phi = max_k <c_k, p> - d_k; 0 when r0 qualifies, +inf when none does.

    Each plane gives <c_k, x> - 1 <= d_k r and each axis a bound x_a / r in
    [lo_a, hi_a], so the admissible r form an interval [r_lo, r_hi].
    """
    m = xs.shape[0]
    dim = xs.shape[1]
    out = np.empty(m)
    for j in prange(m):
        r_lo = 0.0
        r_hi = _INF
        for a in range(dim):
            x = xs[j, a]
            if x > 0.0:
                r_lo = max(r_lo, x / hi[a]) if hi[a] > 0.0 else _INF
            elif x < 0.0:
                r_lo = max(r_lo, x / lo[a]) if lo[a] < 0.0 else _INF
        for k in range(planes.shape[0]):
            e = -1.0
            for a in range(dim):
                e += planes[k, a] * xs[j, a]
            d = planes[k, dim]
            if d > 1e-12:
                r_lo = max(r_lo, e / d)
            elif d < -1e-12:
                r_hi = min(r_hi, e / d)
            elif e > 1e-12:
                r_lo = _INF
        r_hi = min(r_hi, r1)
        if r_lo > r_hi * (1.0 + 1e-12):
            out[j] = _INF
        elif r_lo <= r0:
            out[j] = 0.0
        else:
            out[j] = r_lo
    return out


@njit(cache=True, parallel=True)
def decomposition_kernel(zs, xs, phi_x, vals, lo, step, shape, ts, a_t, b_t, use_sum, psi_min):
    """min over t and candidates x of combine(a_t * phi(x), b_t * psi(y)) with
    y = (z - (1 - t) x) / t; combine is max, or + when ``use_sum``.

    ``phi_x`` must be sorted ascending and finite, which lets the scan over x
    stop once a_t * phi(x) (plus b_t * min psi for the sum) reaches the best.
    """
    m = zs.shape[0]
    k = xs.shape[0]
    dim = zs.shape[1]
    nt = ts.shape[0]
    out = np.empty(m)
    for j in prange(m):
        best = _INF
        for q in range(nt):
            t = ts[q]
            at = a_t[q]
            bt = b_t[q]
            slack = bt * psi_min if use_sum else 0.0
            for i in range(k):
                left = at * phi_x[i]
                if left + slack >= best:
                    break
                y0 = (zs[j, 0] - (1.0 - t) * xs[i, 0]) / t
                y1 = (zs[j, 1] - (1.0 - t) * xs[i, 1]) / t if dim == 2 else 0.0
                v = interp(vals, lo, step, shape, y0, y1, _INF, False)
                if v == _INF:
                    continue
                right = bt * v
                if use_sum:
                    c = left + right
                else:
                    c = left if left > right else right
                if c < best:
                    best = c
        out[j] = best
    return out


@njit(cache=True)
def epi_oracle_kernel(xs, phi_x, ys, psi_y, sig, lam, zlo, zstep, zshape, floor):
    """Average sampled F-images of two epi-graphs, map back through F and keep
    the lowest height found over each output node.

    Over node x the F-image is the segment s (x, 1), 0 < s <= S = (1-lam)/phi(x)
    after weighting; likewise u (y, 1), u <= U for psi. A combination lands
    over w = (s x + u y) / (s + u) at height 1 / (s + u).
    1D: for every output node w between x and y the combination with the
    largest s + u is solved exactly (one of s = S, u = U is active).
    2D: the ends are paired with fractions ``sig`` of the other segment and the
    result is binned to the nearest output node.
    """
    dim = xs.shape[1]
    n0 = zshape[0]
    n1 = zshape[1] if dim == 2 else 1
    out = np.full(n0 * n1, _INF)
    ns = sig.shape[0]
    for i in range(xs.shape[0]):
        smax = (1.0 - lam) / max(phi_x[i], floor)
        for k in range(ys.shape[0]):
            umax = lam / max(psi_y[k], floor)
            if dim == 1:
                a = xs[i, 0]
                b = ys[k, 0]
                lo_w = min(a, b)
                hi_w = max(a, b)
                j0 = int(math.ceil((lo_w - zlo[0]) / zstep[0] - 1e-9))
                j1 = int(math.floor((hi_w - zlo[0]) / zstep[0] + 1e-9))
                if j0 < 0:
                    j0 = 0
                if j1 > n0 - 1:
                    j1 = n0 - 1
                for j in range(j0, j1 + 1):
                    w = zlo[0] + j * zstep[0]
                    da = abs(w - a)
                    db = abs(b - w)
                    # s * da = u * db balances the two pulls at w
                    if da <= 1e-12 * (1.0 + abs(w)) and db <= 1e-12 * (1.0 + abs(w)):
                        tot = smax + umax
                    elif da <= 1e-12 * (1.0 + abs(w)):
                        tot = smax
                    elif db <= 1e-12 * (1.0 + abs(w)):
                        tot = umax
                    elif smax * da <= umax * db:
                        tot = smax + smax * da / db
                    else:
                        tot = umax + umax * db / da
                    v = 1.0 / tot
                    if v < out[j]:
                        out[j] = v
                continue
            for q in range(ns):
                for side in range(2):
                    if side == 0:
                        s = smax
                        u = sig[q] * umax
                    else:
                        s = sig[q] * smax
                        u = umax
                    zz = s + u
                    w0 = (s * xs[i, 0] + u * ys[k, 0]) / zz
                    w1 = (s * xs[i, 1] + u * ys[k, 1]) / zz
                    j0 = int(round((w0 - zlo[0]) / zstep[0]))
                    j1 = int(round((w1 - zlo[1]) / zstep[1]))
                    if j0 < 0 or j0 >= n0 or j1 < 0 or j1 >= n1:
                        continue
                    idx = j0 * n1 + j1
                    if 1.0 / zz < out[idx]:
                        out[idx] = 1.0 / zz
    return out


@njit(cache=True, parallel=True)
def hypothesis_kernel(ts, xs, fx, ys, gy, hvals, lo, step, shape, lam, mode):
    """Worst (most negative) h((1-t)x + t y) - rhs over sampled triples.

    mode 0: rhs = min(f^((1-t)/(1-lam)), g^(t/lam));  mode 1: t = lam only,
    rhs = f^(1-lam) g^lam;  mode 2: rhs = min(f/(1-t), g/t).
    h is read as the largest live stencil value, 0 off its box.
    Returns per-t worst value and the (x index, y index) witness.
    """
    nt = ts.shape[0]
    dim = xs.shape[1]
    worst = np.full(nt, _INF)
    wi = np.zeros(nt, dtype=np.int64)
    wk = np.zeros(nt, dtype=np.int64)
    for q in prange(nt):
        t = ts[q]
        for i in range(xs.shape[0]):
            for k in range(ys.shape[0]):
                if mode == 0:
                    a = fx[i] ** ((1.0 - t) / (1.0 - lam))
                    b = gy[k] ** (t / lam)
                    rhs = a if a < b else b
                elif mode == 1:
                    rhs = fx[i] ** (1.0 - lam) * gy[k] ** lam
                else:
                    a = fx[i] / (1.0 - t)
                    b = gy[k] / t
                    rhs = a if a < b else b
                if rhs <= 0.0:
                    continue
                z0 = (1.0 - t) * xs[i, 0] + t * ys[k, 0]
                z1 = (1.0 - t) * xs[i, 1] + t * ys[k, 1] if dim == 2 else 0.0
                lhs = interp(hvals, lo, step, shape, z0, z1, 0.0, True)
                d = lhs - rhs
                if mode == 2:
                    d = d / max(1.0, rhs)
                if d < worst[q]:
                    worst[q] = d
                    wi[q] = i
                    wk[q] = k
    return worst, wi, wk


def grid_args(f):
    """(flat values, lo, step, shape) arrays for the kernels."""
    lo = np.array([b[0] for b in f.box])
    return (np.ascontiguousarray(f.values.reshape(-1)), lo, f.steps.astype(float),
            np.array(f.shape, dtype=np.int64))
