"""Variable diffusion coefficient a(x), the exterior weight, and the
runtime checks on the coefficient's growth/decay conditions.

Coefficients are supplied analytically (value, gradient, Laplacian
closures): the remainder kernel needs grad a and the verification suite
needs the Laplacian exactly.  Condition checks are sampled on mesh nodes
plus an outer ring; they can falsify the conditions but never certify
them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoefficientError, UnknownCatalogError
from .geometry import DomainMesh


def weight(x) -> np.ndarray:
    """Radial weight (1 + |x|^2)^(1/2) * ln(2 + |x|^2) used for exterior spaces."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    return np.sqrt(1.0 + r2) * np.log(2.0 + r2)


class WeightFunction:
    """Formula object for the exterior weight; pure and stateless."""

    def __call__(self, x):
        return weight(x)

    @staticmethod
    def of_radius(r):
        r = np.asarray(r, dtype=float)
        return np.sqrt(1.0 + r * r) * np.log(2.0 + r * r)


class CoefficientField:
    """Scalar coefficient with analytic gradient and Laplacian.

    value(x), gradient(x), laplacian(x) accept (n, 2) arrays.  c1/c2 are the
    declared positivity bounds, support_radius the radius outside which
    |grad a| is numerically negligible (0 for constants, inf if unbounded).
    """

    def __init__(self, value, gradient, laplacian, c1, c2,
                 support_radius=np.inf, name="coefficient"):
        self.value = value
        self.gradient = gradient
        self.laplacian = laplacian
        self.c1 = float(c1)
        self.c2 = float(c2)
        self.support_radius = float(support_radius)
        self.name = name
        if not (0.0 < self.c1 <= self.c2):
            raise CoefficientError("declared bounds must satisfy 0 < C1 <= C2")

    def eval(self, x):
        """Return (a, grad a, laplacian a) at the given points."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        a = np.asarray(self.value(pts), dtype=float)
        if np.any(a <= 0.0):
            raise CoefficientError("coefficient is nonpositive at a sampled point")
        return a, np.asarray(self.gradient(pts), dtype=float), \
            np.asarray(self.laplacian(pts), dtype=float)

    def grad_log(self, x):
        """grad(ln a) at the given points."""
        a, g, _ = self.eval(x)
        return g / a[:, None]

    def laplacian_log(self, x):
        """Delta(ln a) = Delta a / a - |grad a|^2 / a^2."""
        a, g, lap = self.eval(x)
        return lap / a - np.sum(g * g, axis=1) / a ** 2

    def normal_log_derivative(self, points, normals):
        """d(ln a)/dn = n . grad a / a at boundary points."""
        a, g, _ = self.eval(points)
        return np.sum(np.atleast_2d(normals) * g, axis=1) / a

    @property
    def is_constant(self) -> bool:
        return self.support_radius == 0.0


def make_coefficient(name: str, *, tail_tol: float = 1e-8, **params) -> CoefficientField:
    """Catalog: constant(value), gaussian_bump(beta, center, sigma),
    compact_bump(beta, center, sigma)."""
    if name == "constant":
        c = float(params.pop("value", 1.0))
        if params:
            raise UnknownCatalogError(f"unknown constant parameters {sorted(params)}")
        if c <= 0:
            raise CoefficientError("constant coefficient must be positive")
        return CoefficientField(
            value=lambda x: np.full(x.shape[0], c),
            gradient=lambda x: np.zeros_like(x),
            laplacian=lambda x: np.zeros(x.shape[0]),
            c1=c, c2=c, support_radius=0.0, name=f"constant({c})")
    if name == "gaussian_bump":
        beta = float(params.pop("beta", 1.0))
        center = np.asarray(params.pop("center", (0.0, 0.0)), dtype=float)
        sigma = float(params.pop("sigma", 1.0))
        if params:
            raise UnknownCatalogError(f"unknown gaussian_bump parameters {sorted(params)}")
        if 1.0 + min(beta, 0.0) <= 0:
            raise CoefficientError("gaussian bump makes the coefficient nonpositive")

        def val(x):
            d = x - center
            return 1.0 + beta * np.exp(-(d[:, 0] ** 2 + d[:, 1] ** 2) / sigma ** 2)

        def grad(x):
            d = x - center
            e = np.exp(-(d[:, 0] ** 2 + d[:, 1] ** 2) / sigma ** 2)
            return (-2.0 * beta / sigma ** 2) * d * e[:, None]

        def lap(x):
            d = x - center
            r2 = d[:, 0] ** 2 + d[:, 1] ** 2
            e = np.exp(-r2 / sigma ** 2)
            return beta * e * (4.0 * r2 / sigma ** 4 - 4.0 / sigma ** 2)

        # |grad a| = 2|beta| s exp(-s^2/sigma^2), decreasing beyond its peak:
        # scan outward from the peak for the tail radius
        s = np.linspace(sigma / np.sqrt(2.0), 60.0 * sigma, 200001)
        mag = 2.0 * abs(beta) * s / sigma ** 2 * np.exp(-s ** 2 / sigma ** 2)
        below = np.nonzero(mag < tail_tol)[0]
        r_a = float(np.hypot(*center) + (s[below[0]] if below.size else np.inf))
        return CoefficientField(val, grad, lap,
                                c1=1.0 + min(beta, 0.0) if beta < 0 else 1.0,
                                c2=1.0 + max(beta, 0.0),
                                support_radius=r_a,
                                name=f"gaussian_bump(beta={beta},sigma={sigma})")
    if name == "compact_bump":
        beta = float(params.pop("beta", 0.5))
        center = np.asarray(params.pop("center", (0.0, 0.0)), dtype=float)
        sigma = float(params.pop("sigma", 1.0))
        if params:
            raise UnknownCatalogError(f"unknown compact_bump parameters {sorted(params)}")
        if 1.0 + min(beta, 0.0) <= 0:
            raise CoefficientError("compact bump makes the coefficient nonpositive")
        p = 6  # a = 1 + beta (1 - s^2)^p inside |x - c| < sigma, C^(p-1) at the seam

        def val(x):
            d = x - center
            s2 = (d[:, 0] ** 2 + d[:, 1] ** 2) / sigma ** 2
            out = np.ones(x.shape[0])
            inside = s2 < 1.0
            out[inside] += beta * (1.0 - s2[inside]) ** p
            return out

        def grad(x):
            d = x - center
            s2 = (d[:, 0] ** 2 + d[:, 1] ** 2) / sigma ** 2
            out = np.zeros_like(x)
            inside = s2 < 1.0
            out[inside] = (-2.0 * p * beta / sigma ** 2) \
                * (1.0 - s2[inside, None]) ** (p - 1) * d[inside]
            return out

        def lap(x):
            d = x - center
            s2 = (d[:, 0] ** 2 + d[:, 1] ** 2) / sigma ** 2
            out = np.zeros(x.shape[0])
            inside = s2 < 1.0
            u = 1.0 - s2[inside]
            out[inside] = (2.0 * p * beta / sigma ** 2) \
                * (2.0 * (p - 1) * s2[inside] * u ** (p - 2) - 2.0 * u ** (p - 1))
            return out

        return CoefficientField(val, grad, lap,
                                c1=1.0 + min(beta, 0.0) if beta < 0 else 1.0,
                                c2=1.0 + max(beta, 0.0),
                                support_radius=float(np.hypot(*center) + sigma),
                                name=f"compact_bump(beta={beta},sigma={sigma})")
    raise UnknownCatalogError(f"unknown coefficient name {name!r}")


@dataclass(frozen=True)
class ConditionReport:
    """Sampled suprema for the coefficient growth/decay conditions."""

    sup_weighted_gradient: float       # sup omega2 |grad a|
    sup_weighted_laplacian: float      # sup omega2^2 |Delta a|
    outer_ring_weighted_gradient: float
    bounds_ok: bool
    gradient_ok: bool
    laplacian_ok: bool
    decay_ok: bool

    @property
    def passed(self) -> bool:
        return self.bounds_ok and self.gradient_ok and self.laplacian_ok and self.decay_ok

    def as_dict(self):
        return {
            "sup_weighted_gradient": self.sup_weighted_gradient,
            "sup_weighted_laplacian": self.sup_weighted_laplacian,
            "outer_ring_weighted_gradient": self.outer_ring_weighted_gradient,
            "bounds_ok": self.bounds_ok,
            "gradient_ok": self.gradient_ok,
            "laplacian_ok": self.laplacian_ok,
            "decay_ok": self.decay_ok,
            "passed": self.passed,
        }


def check_conditions(field: CoefficientField, mesh: DomainMesh, *,
                     gradient_bound: float = 1e3,
                     laplacian_bound: float = 1e3,
                     decay_tol: float = 1e-3) -> ConditionReport:
    """Sample the boundedness/decay requirements on mesh nodes + outer ring."""
    if mesh.n_nodes == 0:
        raise CoefficientError("condition check needs a nonempty mesh")
    pts = mesh.points
    a, g, lap = field.eval(pts)
    w = weight(pts)
    gmag = np.hypot(g[:, 0], g[:, 1])
    sup_wg = float(np.max(w * gmag))
    sup_wl = float(np.max(w ** 2 * np.abs(lap)))
    ring_theta = np.linspace(0.0, 2.0 * np.pi, 720, endpoint=False)
    ring = mesh.r_trunc * np.stack([np.cos(ring_theta), np.sin(ring_theta)], axis=1)
    _, gr, _ = field.eval(ring)
    ring_val = float(np.max(weight(ring) * np.hypot(gr[:, 0], gr[:, 1])))
    bounds_ok = bool(np.all(a >= field.c1 - 1e-12) and np.all(a <= field.c2 + 1e-12))
    return ConditionReport(
        sup_weighted_gradient=sup_wg,
        sup_weighted_laplacian=sup_wl,
        outer_ring_weighted_gradient=ring_val,
        bounds_ok=bounds_ok,
        gradient_ok=sup_wg <= gradient_bound and ring_val <= gradient_bound,
        laplacian_ok=sup_wl <= laplacian_bound,
        decay_ok=ring_val <= decay_tol,
    )
