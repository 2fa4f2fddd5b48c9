"""Boundary curves, boundary quadrature grids, and exterior-domain meshes.

Orientation convention (fixed once, used by every sign-sensitive identity):
the unit normal ``n`` returned everywhere points *into* the bounded
complement ``Omega^-``, i.e. out of the unbounded exterior domain ``Omega``.
For the counterclockwise unit circle this means ``n(t) = -x(t)``.

The exterior domain is truncated at a radius ``r_trunc``; the mesh covers
the annular region between the curve and the circle of that radius with a
boundary-fitted polar tensor grid (trapezoidal in the polar angle,
composite Gauss-Legendre panels in the scaled radial coordinate).
All catalog curves are star-shaped with respect to the origin, which the
mesh construction relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DiscretizationError, GeometryError, UnknownCatalogError

_TWO_PI = 2.0 * np.pi


class CurveParametrization:
    """A smooth closed curve t in [0, 2pi) -> R^2 with derivative data.

    position, derivative and second_derivative map arrays of parameter
    values to arrays of shape (n, 2).  ``radial_profile`` gives the curve
    radius as a function of the polar angle (star-shaped curves only) and
    is required for domain meshing.
    """

    def __init__(self, position, derivative, second_derivative,
                 radial_profile=None, analytic=True, name="curve"):
        self.position = position
        self.derivative = derivative
        self.second_derivative = second_derivative
        self.radial_profile = radial_profile
        self.analytic = bool(analytic)
        self.name = name
        self._validate()

    def _validate(self, n_check: int = 256):
        t = np.linspace(0.0, _TWO_PI, n_check, endpoint=False)
        x = self.position(t)
        dx = self.derivative(t)
        speed = np.hypot(dx[:, 0], dx[:, 1])
        if np.any(speed <= 1e-14):
            raise GeometryError("degenerate parametrization: zero speed on sample grid")
        gap = np.linalg.norm(self.position(np.array([0.0]))
                             - self.position(np.array([_TWO_PI - 1e-13])))
        if gap > 1e-9:
            raise GeometryError("curve is not closed: x(0) != x(2pi)")
        self._check_simple(x)
        # signed area fixes which 90-degree rotation of the tangent points
        # into the bounded complement
        area2 = np.sum(x[:, 0] * np.roll(x[:, 1], -1) - x[:, 1] * np.roll(x[:, 0], -1))
        if abs(area2) < 1e-12:
            raise GeometryError("curve encloses no area")
        self._ccw = area2 > 0.0

    @staticmethod
    def _check_simple(x: np.ndarray):
        n = x.shape[0]
        d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        sep = np.minimum(np.abs(i - j), n - np.abs(i - j))
        far = sep > n // 8
        if far.any():
            scale = np.sqrt(d2.max())
            if np.sqrt(d2[far].min()) < 1e-6 * scale:
                raise GeometryError("curve appears to self-intersect on the sample grid")

    def evaluate(self, t):
        """Return (point, unit tangent, unit normal, speed) at parameters t.

        The normal is the 90-degree rotation of the tangent pointing into
        the bounded complement Omega^-.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = self.position(t)
        dx = self.derivative(t)
        speed = np.hypot(dx[:, 0], dx[:, 1])
        if np.any(speed <= 1e-14):
            raise GeometryError("degenerate parametrization: zero speed")
        tangent = dx / speed[:, None]
        sign = 1.0 if self._ccw else -1.0
        normal = sign * np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)
        return x, tangent, normal, speed

    def curvature_term(self, t):
        """n(t) . x''(t) / |x'(t)| at parameters t (double-layer diagonal data)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        _, _, normal, speed = self.evaluate(t)
        ddx = self.second_derivative(t)
        return np.sum(normal * ddx, axis=1) / speed

    def circumradius(self, n_sample: int = 1024) -> float:
        t = np.linspace(0.0, _TWO_PI, n_sample, endpoint=False)
        x = self.position(t)
        return float(np.hypot(x[:, 0], x[:, 1]).max())

    def winding_number(self, point, n_sample: int = 2048) -> float:
        """Winding of the sampled curve about ``point`` (1 inside, 0 outside)."""
        t = np.linspace(0.0, _TWO_PI, n_sample, endpoint=False)
        z = self.position(t) - np.asarray(point, dtype=float)
        ang = np.arctan2(z[:, 1], z[:, 0])
        dang = np.diff(np.concatenate([ang, ang[:1]]))
        dang = (dang + np.pi) % _TWO_PI - np.pi
        return float(np.round(dang.sum() / _TWO_PI))

    def is_inside_bounded(self, points) -> np.ndarray:
        """True for points lying in the bounded complement Omega^-."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.radial_profile is not None:
            theta = np.arctan2(pts[:, 1], pts[:, 0])
            return np.hypot(pts[:, 0], pts[:, 1]) < self.radial_profile(theta)
        return np.array([abs(self.winding_number(p)) > 0.5 for p in pts])


def make_curve(name: str, **params) -> CurveParametrization:
    """Catalog: circle(radius), ellipse(a, b), star(alpha, k, radius)."""
    if name == "circle":
        r0 = float(params.pop("radius", 1.0))
        if params:
            raise UnknownCatalogError(f"unknown circle parameters {sorted(params)}")
        if r0 <= 0:
            raise GeometryError("circle radius must be positive")
        return CurveParametrization(
            position=lambda t: r0 * np.stack([np.cos(t), np.sin(t)], axis=-1),
            derivative=lambda t: r0 * np.stack([-np.sin(t), np.cos(t)], axis=-1),
            second_derivative=lambda t: -r0 * np.stack([np.cos(t), np.sin(t)], axis=-1),
            radial_profile=lambda th: np.full_like(np.asarray(th, dtype=float), r0),
            name=f"circle(r={r0})",
        )
    if name == "ellipse":
        a = float(params.pop("a", 2.0))
        b = float(params.pop("b", 1.0))
        if params:
            raise UnknownCatalogError(f"unknown ellipse parameters {sorted(params)}")
        if a <= 0 or b <= 0:
            raise GeometryError("ellipse semi-axes must be positive")
        return CurveParametrization(
            position=lambda t: np.stack([a * np.cos(t), b * np.sin(t)], axis=-1),
            derivative=lambda t: np.stack([-a * np.sin(t), b * np.cos(t)], axis=-1),
            second_derivative=lambda t: np.stack([-a * np.cos(t), -b * np.sin(t)], axis=-1),
            radial_profile=lambda th: a * b / np.sqrt(
                (b * np.cos(th)) ** 2 + (a * np.sin(th)) ** 2),
            name=f"ellipse(a={a},b={b})",
        )
    if name == "star":
        alpha = float(params.pop("alpha", 0.2))
        k = int(params.pop("k", 5))
        r0 = float(params.pop("radius", 1.0))
        if params:
            raise UnknownCatalogError(f"unknown star parameters {sorted(params)}")
        if not (0.0 <= alpha < 1.0):
            raise GeometryError("star amplitude must satisfy 0 <= alpha < 1")

        def rad(t):
            return r0 * (1.0 + alpha * np.cos(k * np.asarray(t, dtype=float)))

        def drad(t):
            return -r0 * alpha * k * np.sin(k * np.asarray(t, dtype=float))

        def ddrad(t):
            return -r0 * alpha * k * k * np.cos(k * np.asarray(t, dtype=float))

        def pos(t):
            r = rad(t)
            return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)

        def dpos(t):
            r, dr = rad(t), drad(t)
            return np.stack([dr * np.cos(t) - r * np.sin(t),
                             dr * np.sin(t) + r * np.cos(t)], axis=-1)

        def ddpos(t):
            r, dr, ddr = rad(t), drad(t), ddrad(t)
            return np.stack([ddr * np.cos(t) - 2 * dr * np.sin(t) - r * np.cos(t),
                             ddr * np.sin(t) + 2 * dr * np.cos(t) - r * np.sin(t)],
                            axis=-1)

        return CurveParametrization(pos, dpos, ddpos, radial_profile=rad,
                                    name=f"star(alpha={alpha},k={k})")
    raise UnknownCatalogError(f"unknown curve name {name!r}")


@dataclass(frozen=True)
class BoundaryGrid:
    """Equispaced Nystroem grid on the boundary curve."""

    curve: CurveParametrization
    n: int
    t: np.ndarray          # (n,) parameter values
    points: np.ndarray     # (n, 2)
    normals: np.ndarray    # (n, 2), pointing into Omega^-
    speeds: np.ndarray     # (n,)
    weights: np.ndarray    # (n,) trapezoidal arc-length weights

    @property
    def length(self) -> float:
        return float(self.weights.sum())

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Discrete arc-length L2 inner product on S."""
        return float(np.sum(self.weights * f * g))

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))


def boundary_grid(curve: CurveParametrization, n: int) -> BoundaryGrid:
    if n < 8 or n % 2 != 0:
        raise DiscretizationError(f"boundary grid needs even N >= 8, got {n}")
    t = _TWO_PI * np.arange(n) / n
    points, _, normals, speeds = curve.evaluate(t)
    weights = (_TWO_PI / n) * speeds
    return BoundaryGrid(curve=curve, n=n, t=t, points=points,
                        normals=normals, speeds=speeds, weights=weights)


def _gauss_legendre_01(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class DomainMesh:
    """Quadrature nodes on Omega intersected with the disk of radius r_trunc.

    Tensor structure: ``m_theta`` equispaced polar angles (trapezoid rule)
    times composite Gauss-Legendre nodes in the scaled radial coordinate
    rho in [0, 1], with r = r_curve(theta) + (r_trunc - r_curve(theta)) rho.
    Node index = i_r * m_theta + j_theta.
    """

    curve: CurveParametrization
    r_trunc: float
    h: float
    m_theta: int
    q: int
    breakpoints: np.ndarray     # (n_panels + 1,) in [0, 1]
    rho: np.ndarray             # (n_r,) scaled radial nodes
    rho_weights: np.ndarray     # (n_r,)
    panel_of_node: np.ndarray   # (n_r,) panel index of each radial node
    theta: np.ndarray           # (m_theta,)
    r_curve: np.ndarray         # (m_theta,) curve radius at each angle
    points: np.ndarray = field(default=None)    # (n_nodes, 2)
    weights: np.ndarray = field(default=None)   # (n_nodes,)
    support_radius: float = np.inf
    support_mask: np.ndarray = field(default=None)  # (n_nodes,) bool

    def __post_init__(self):
        n_r = self.rho.shape[0]
        rr = self.r_curve[None, :] + (self.r_trunc - self.r_curve[None, :]) * self.rho[:, None]
        xx = rr * np.cos(self.theta)[None, :]
        yy = rr * np.sin(self.theta)[None, :]
        self.r_grid = rr
        self.points = np.stack([xx.ravel(), yy.ravel()], axis=1)
        dtheta = _TWO_PI / self.m_theta
        w = (self.rho_weights[:, None]
             * (self.r_trunc - self.r_curve)[None, :] * rr * dtheta)
        self.weights = w.ravel()
        self.n_r = n_r
        self.n_nodes = n_r * self.m_theta
        radii = np.hypot(self.points[:, 0], self.points[:, 1])
        self.support_mask = radii <= self.support_radius

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def node_index(self, i_r, j_theta):
        return np.asarray(i_r) * self.m_theta + np.asarray(j_theta) % self.m_theta

    def mesh_coords(self, points):
        """Map physical points to (rho, theta); rho < 0 means inside Omega^-."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        theta = np.arctan2(pts[:, 1], pts[:, 0]) % _TWO_PI
        r = np.hypot(pts[:, 0], pts[:, 1])
        r_s = self.curve.radial_profile(theta)
        rho = (r - r_s) / (self.r_trunc - r_s)
        return rho, theta

    def physical_points(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        r_s = self.curve.radial_profile(theta)
        r = r_s + (self.r_trunc - r_s) * rho
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def jacobian(self, rho, theta):
        """|dx / d(rho, theta)| at scaled coordinates."""
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        r_s = self.curve.radial_profile(theta)
        span = self.r_trunc - r_s
        r = r_s + span * rho
        return span * r

    def interpolation(self, rho, theta):
        """Nodal interpolation weights at scaled coordinates.

        Returns (indices, weights) of shape (m, q) and (m, 4) combined into
        (m, 4*q): Lagrange on the radial panel's Gauss nodes times 4-point
        Lagrange across neighbouring theta columns.
        """
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float)) % _TWO_PI
        m = rho.shape[0]
        panel = np.clip(np.searchsorted(self.breakpoints, rho, side="right") - 1,
                        0, len(self.breakpoints) - 2)
        dtheta = _TWO_PI / self.m_theta
        j0 = np.floor(theta / dtheta).astype(int)
        cols = (j0[:, None] + np.arange(-1, 3)[None, :]) % self.m_theta
        th_nodes = (j0[:, None] + np.arange(-1, 3)[None, :]) * dtheta
        w_th = _lagrange_weights(theta, th_nodes)
        idx = np.empty((m, 4 * self.q), dtype=int)
        wts = np.empty((m, 4 * self.q), dtype=float)
        for p in np.unique(panel):
            sel = panel == p
            nodes_p = self.rho[self.panel_of_node == p]
            i_r0 = int(np.nonzero(self.panel_of_node == p)[0][0])
            w_r = _lagrange_weights(rho[sel], np.broadcast_to(nodes_p,
                                                              (sel.sum(), self.q)))
            comb = w_r[:, :, None] * w_th[sel][:, None, :]
            rows = (i_r0 + np.arange(self.q))[:, None] * self.m_theta + cols[sel][:, None, :]
            idx[sel] = rows.reshape(sel.sum(), -1)
            wts[sel] = comb.reshape(sel.sum(), -1)
        return idx, wts


def _lagrange_weights(x, nodes):
    """Rows of Lagrange basis values: x (m,), nodes (m, k) -> (m, k)."""
    x = np.asarray(x, dtype=float)[:, None]
    nodes = np.asarray(nodes, dtype=float)
    m, k = nodes.shape
    w = np.ones((m, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                w[:, i] *= (x[:, 0] - nodes[:, j]) / (nodes[:, i] - nodes[:, j])
    return w


def domain_mesh(curve: CurveParametrization, r_trunc: float, h: float, *,
                q: int = 4, m_theta: Optional[int] = None,
                n_panels: Optional[int] = None,
                support_radius: float = np.inf,
                support_margin: float = 0.0) -> DomainMesh:
    """Build the truncated-exterior quadrature mesh."""
    if h <= 0:
        raise DiscretizationError("mesh spacing h must be positive")
    if curve.radial_profile is None:
        raise GeometryError("domain meshing requires a star-shaped curve "
                            "with a radial profile")
    circ = curve.circumradius()
    if r_trunc <= circ:
        raise GeometryError(
            f"truncation radius {r_trunc} must exceed the curve circumradius {circ:.6g}")
    if m_theta is None:
        m_theta = max(16, 2 * int(np.ceil(np.pi * circ / h)))
    theta = _TWO_PI * np.arange(m_theta) / m_theta
    r_curve = np.asarray(curve.radial_profile(theta), dtype=float)
    span_min = float((r_trunc - r_curve).min())
    if n_panels is None:
        n_panels = max(1, int(np.ceil((r_trunc - r_curve.min()) / (q * h))))
        # keep the innermost Gauss node clear of the boundary (> h/10)
        gx0 = float(_gauss_legendre_01(q)[0][0])
        cap = int(np.floor(10.0 * gx0 * span_min / h))
        n_panels = max(1, min(n_panels, cap))
    breakpoints = np.linspace(0.0, 1.0, n_panels + 1)
    gx, gw = _gauss_legendre_01(q)
    rho = (breakpoints[:-1, None] + np.diff(breakpoints)[:, None] * gx[None, :]).ravel()
    rho_w = (np.diff(breakpoints)[:, None] * gw[None, :]).ravel()
    panel_of_node = np.repeat(np.arange(n_panels), q)
    mesh = DomainMesh(curve=curve, r_trunc=r_trunc, h=h, m_theta=m_theta, q=q,
                      breakpoints=breakpoints, rho=rho, rho_weights=rho_w,
                      panel_of_node=panel_of_node, theta=theta, r_curve=r_curve,
                      support_radius=(support_radius + support_margin
                                      if np.isfinite(support_radius) else np.inf))
    d_first = rho[0] * span_min
    if d_first <= h / 10.0:
        raise DiscretizationError(
            f"innermost mesh node sits {d_first:.3g} from the boundary, "
            f"below the h/10 = {h / 10:.3g} floor; use fewer/larger radial panels")
    return mesh
