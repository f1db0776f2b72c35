"""p-means, kappa-concavity, Borell's exponent correspondence and the measures
mu, nu, mu_p, nu_p used to integrate over epi-graphs and their F-images."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Callable, Optional

import numpy as np
from scipy.special import gammainc, gamma

from .grid import DEFAULT_QUAD, INF, GridFunction, Quadrature, fiber_integral

Z_MIN, Z_MAX = 1e-4, 1e4
TAGS = ("lebesgue", "mu", "nu", "mu_p", "nu_p", "weighted")


# --------------------------------------------------------------------- means

def p_mean(a, b, lam: float, p: float):
    """M_p^lam(a, b) = ((1-lam) a^p + lam b^p)^(1/p) for a, b >= 0.

    p = 0 is the weighted geometric mean, p = -inf / +inf the min / max.
    lam = 0 or 1 return a or b. For p <= 0 a zero argument gives 0.
    Works elementwise on arrays.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("p-means are defined for non-negative numbers")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0.0:
        out = a.copy()
    elif lam == 1.0:
        out = b.copy()
    elif p == INF:
        out = np.maximum(a, b)
    elif p == -INF:
        out = np.minimum(a, b)
    else:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if p == 0:
                out = a ** (1 - lam) * b ** lam
            else:
                # scale by max (p > 0) or min (p < 0) so the powers stay in [0, 1]
                s = np.maximum(a, b) if p > 0 else np.minimum(a, b)
                ra, rb = a / s, b / s
                out = s * ((1 - lam) * ra ** p + lam * rb ** p) ** (1.0 / p)
        if p <= 0:
            out = np.where((a == 0) | (b == 0), 0.0, out)
        else:
            # inf^p overflow paths: the mean of an infinite argument is infinite
            out = np.where(np.isinf(a) | np.isinf(b), INF, np.where((a == 0) & (b == 0), 0.0, out))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PMean:
    p: float
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")

    def __call__(self, a, b):
        return p_mean(a, b, self.lam, self.p)


# --------------------------------------------------------------------- Borell

def borell_kappa(kappa, n):
    """Density exponent kappa / (1 - n kappa) matching a kappa-concave measure on R^n.

    Exact (a Fraction) when both arguments are rational. kappa = -inf maps to
    -1/n and kappa = 1/n (the pole) is an error.
    """
    if isinstance(kappa, float) and kappa == -INF:
        return -1.0 / n
    if isinstance(kappa, Rational) and isinstance(n, Rational):
        k = Fraction(kappa)
        den = 1 - n * k
        if den == 0:
            raise ZeroDivisionError(f"kappa = 1/n = {k} is the pole of the correspondence")
        return k / den
    den = 1.0 - n * float(kappa)
    if den == 0.0:
        raise ZeroDivisionError(f"kappa = 1/n = {kappa} is the pole of the correspondence")
    return float(kappa) / den


def measure_kappa_from_density(kappa_n, n):
    """Inverse of borell_kappa: kappa_n / (1 + n kappa_n).

    Borell's theorem needs kappa_n >= -1/n; below that no concavity follows
    and -inf is returned. kappa_n = +inf (constant density) gives 1/n.
    """
    exact = isinstance(kappa_n, Rational) and isinstance(n, Rational)
    if not exact and float(kappa_n) == INF:
        return 1.0 / n
    k = Fraction(kappa_n) if exact else float(kappa_n)
    den = 1 + n * k
    if den <= 0:
        return -INF
    return k / den


@dataclass
class KappaReport:
    passed: bool
    kappa: float
    worst_margin: float
    witness: Optional[dict]
    samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "kappa": self.kappa, "worst_margin": self.worst_margin,
                "witness": self.witness, "samples": self.samples, "seed": self.seed}


def kappa_concavity_check(density: Callable[[np.ndarray], np.ndarray], kappa: float, box,
                          sample_count: int = 10_000, seed: int = 0, tol: float = 1e-9) -> KappaReport:
    """Sample (x, y, lam) uniformly (x, y in ``box``) and test

        density((1-lam) x + lam y) >= M_kappa^lam(density(x), density(y))

    with relative tolerance ``tol``. The margin is (lhs - rhs) / max(rhs, 1e-300).
    """
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    x = rng.uniform(lo, hi, (sample_count, lo.size))
    y = rng.uniform(lo, hi, (sample_count, lo.size))
    lam = rng.uniform(0.0, 1.0, sample_count)
    dx = np.asarray(density(x), dtype=float)
    dy = np.asarray(density(y), dtype=float)
    dm = np.asarray(density((1 - lam)[:, None] * x + lam[:, None] * y), dtype=float)
    rhs = np.array([p_mean(a, b, l, kappa) for a, b, l in zip(dx, dy, lam)])
    with np.errstate(invalid="ignore"):
        margin = (dm - rhs) / np.maximum(rhs, 1e-300)
    margin = np.where(np.isnan(margin), 0.0, margin)
    i = int(np.argmin(margin))
    worst = float(margin[i])
    ok = worst >= -tol
    witness = None if ok else {"x": x[i].tolist(), "y": y[i].tolist(), "lam": float(lam[i]),
                               "lhs": float(dm[i]), "rhs": float(rhs[i])}
    return KappaReport(ok, float(kappa), worst, witness, sample_count, seed)


# --------------------------------------------------------------------- named measures

@dataclass(frozen=True)
class NamedMeasure:
    """One of the measures used by the inequalities.

    lebesgue and weighted (density exp(-alpha)) live on R^n; mu, nu, mu_p,
    nu_p live on R^n x R (the last coordinate z; nu, mu_p, nu_p need z > 0):
      mu   exp(-z)                     nu   exp(-1/z) z^-(n+2)
      mu_p p z^-(p+1)                  nu_p p z^(p-(n+1))
    """

    tag: str
    n: int = 1
    p: Optional[float] = None
    alpha: Optional[GridFunction] = field(default=None, compare=False)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown measure {self.tag!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.tag in ("mu_p", "nu_p") and not (self.p is not None and self.p > 0):
            raise ValueError(f"{self.tag} needs p > 0")
        if self.tag == "weighted":
            if self.alpha is None:
                raise ValueError("weighted measure needs alpha")
            if self.alpha.dim != self.n:
                raise ValueError("alpha dimension does not match n")

    @property
    def on_product(self) -> bool:
        """True for the measures on R^n x R."""
        return self.tag in ("mu", "nu", "mu_p", "nu_p")

    @property
    def ambient_dim(self) -> int:
        return self.n + 1 if self.on_product else self.n

    def base_density(self, x: np.ndarray) -> np.ndarray:
        """Density on R^n (lebesgue and weighted only)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.n)
        if self.tag == "lebesgue":
            return np.ones(x.shape[0])
        if self.tag == "weighted":
            return np.exp(-self.alpha.evaluate(x))
        raise ValueError(f"{self.tag} is a measure on R^n x R, not on R^n")

    def density(self, q: np.ndarray) -> np.ndarray:
        """Density at points of the ambient space (rows)."""
        q = np.asarray(q, dtype=float).reshape(-1, self.ambient_dim)
        if not self.on_product:
            return self.base_density(q)
        z = q[:, -1]
        n, p = self.n, self.p
        pos = z > 0
        zz = np.where(pos, z, 1.0)
        with np.errstate(over="ignore", divide="ignore"):
            if self.tag == "mu":
                return np.exp(-z)
            if self.tag == "nu":
                val = np.exp(-1.0 / zz) * zz ** (-(n + 2))
            elif self.tag == "mu_p":
                val = p * zz ** (-(p + 1))
            else:
                val = p * zz ** (p - (n + 1))
        return np.where(pos, val, 0.0)

    @property
    def density_kappa(self) -> float:
        """Concavity exponent of the density."""
        n, p = self.n, self.p
        if self.tag == "lebesgue":
            return INF
        if self.tag in ("mu", "weighted"):
            return 0.0
        if self.tag == "nu":
            return -1.0 / (n + 2)
        if self.tag == "mu_p":
            return -1.0 / (p + 1)
        if p == n + 1:
            return INF
        return 1.0 / (p - (n + 1))

    @property
    def kappa(self) -> float:
        """Concavity exponent of the measure, from the density's via Borell."""
        return measure_kappa_from_density(self.density_kappa, self.ambient_dim)

    def sample_box(self, half_width: float = 3.0, z_max: float = 6.0):
        """A box on which the density is positive, for spot checks."""
        base = [(-half_width, half_width)] * self.n
        if self.tag == "weighted":
            return tuple(self.alpha.box)
        if not self.on_product:
            return tuple(base)
        zlo = -z_max if self.tag == "mu" else 1e-3
        return tuple(base + [(zlo, z_max)])


def parse_measure(spec: str, n: int = 1, alpha: Optional[GridFunction] = None) -> NamedMeasure:
    """'mu', 'nu', 'lebesgue', 'mu_p:2', 'nu_p:2' or 'weighted' (with alpha)."""
    tag, _, arg = spec.partition(":")
    p = float(arg) if arg and tag in ("mu_p", "nu_p") else None
    if tag == "weighted":
        return NamedMeasure("weighted", n, alpha=alpha)
    return NamedMeasure(tag, n, p)


# --------------------------------------------------------------------- epi-graph measures

class DivergentIntegral(ValueError):
    pass


def _epi_route(phi: GridFunction, m: NamedMeasure, quad: Quadrature) -> float:
    """Integrate the closed-form inner z-integral over the shared quadrature."""
    pts, w = quad.points_weights(phi.box, phi.shape)
    v = phi.evaluate(pts)
    fin = np.isfinite(v)
    inner = np.zeros_like(v)
    n, p = m.n, m.p
    if m.tag in ("mu", "weighted"):
        inner[fin] = np.exp(-v[fin])
        if m.tag == "weighted":
            inner = inner * m.base_density(pts)
    elif m.tag == "mu_p":
        if np.any(v[fin] <= 0):
            raise DivergentIntegral("mu_p(epi phi) diverges: phi <= 0 at a quadrature node")
        inner[fin] = v[fin] ** (-p)
    elif m.tag == "nu":
        # int_phi^inf exp(-1/z) z^-(n+2) dz = gamma(n+1) P(n+1, 1/phi)
        with np.errstate(divide="ignore"):
            inner[fin] = gamma(n + 1) * gammainc(n + 1, 1.0 / np.maximum(v[fin], 0.0))
    elif m.tag == "nu_p":
        e = p - n
        if e >= 0:
            raise DivergentIntegral(f"nu_p(epi phi) diverges as z -> inf for p = {p} >= n = {n}")
        if np.any(v[fin] <= 0):
            raise DivergentIntegral("nu_p(epi phi) diverges: phi <= 0 at a quadrature node")
        inner[fin] = -p / e * v[fin] ** e
    else:
        raise DivergentIntegral("Lebesgue measure of an epi-graph is infinite")
    return float(np.dot(w, inner))


def _f_epi_route(phi: GridFunction, m: NamedMeasure, quad: Quadrature, z_span, cells: int) -> float:
    """Integrate m's density over F(epi phi) = {(u r, r) : 0 < r, phi(u) < 1/r}.

    In these ray coordinates dx dz = r^n du dr. Each fiber is integrated over
    r in z_span with the membership boundary located by bisection.
    """
    if not m.on_product:
        raise ValueError(f"{m.tag} is not a measure on R^n x R")
    pts, w = quad.points_weights(phi.box, phi.shape)
    v = phi.evaluate(pts)
    keep = np.isfinite(v)
    u, wu, vu = pts[keep], w[keep], v[keep]
    n = m.n
    edges = np.geomspace(z_span[0], z_span[1], cells + 1)

    def member(f, r):
        return vu[f] * r < 1.0

    def dens(f, r):
        r = np.asarray(r, dtype=float)
        f = np.broadcast_to(f, r.shape)
        q = np.concatenate([u[f] * r[..., None], r[..., None]], axis=-1)
        return m.density(q.reshape(-1, n + 1)).reshape(r.shape) * r ** n

    vals = np.zeros(u.shape[0])
    for s in range(0, u.shape[0], 4096):
        sl = slice(s, s + 4096)
        idx = np.arange(u.shape[0])[sl]
        vals[sl] = fiber_integral(lambda f, r: member(idx[f], r), lambda f, r: dens(idx[f], r),
                                  edges, idx.size)
    return float(np.dot(wu, vals))


def measure_of_epi(phi: GridFunction, m: NamedMeasure, route: str = "epi",
                   quad: Quadrature = DEFAULT_QUAD, z_span=(Z_MIN, Z_MAX), cells: int = 192) -> float:
    """m(epi phi) (route "epi") or m(F(epi phi)) (route "F-epi").

    The epi route uses the closed-form z-integral at the shared quadrature
    nodes, so mu(epi phi) is exactly the quadrature of exp(-phi). The F-epi
    route is a numerical fiber integral over z in ``z_span``; it raises
    DivergentIntegral when widening the span by a decade on each side moves the
    result by more than 1%.
    """
    if phi.dim != m.n:
        raise ValueError(f"measure is on R^{m.n} x R but phi lives on R^{phi.dim}")
    if route == "epi":
        return _epi_route(phi, m, quad)
    if route != "F-epi":
        raise ValueError(f"unknown route {route!r}")
    val = _f_epi_route(phi, m, quad, z_span, cells)
    narrow = _f_epi_route(phi, m, quad, (z_span[0] * 10, z_span[1] / 10), cells)
    if not math.isfinite(val) or abs(val - narrow) > 1e-2 * max(abs(val), 1e-300):
        raise DivergentIntegral(
            f"F-image integral not settled over z in {z_span}: {narrow:.6g} -> {val:.6g}")
    return val
