"""Constant-coefficient (Laplace) building blocks.

Boundary operators on a periodic Nystroem grid:

* single layer: Martensen-Kussmaul/Kress splitting of the log kernel,
  spectrally accurate on analytic curves;
* double layer and its adjoint: continuous kernels with the curvature
  diagonal limit (needs a C^2 curve);
* hypersingular operator: tangential-derivative (Maue) regularization
  through the single layer.

Sign conventions follow the package-wide choices: the fundamental
solution is P(z) = log|z| / (2 pi), every layer potential carries a
leading minus sign, and normals point into the bounded complement.  With
these choices, on the unit circle

    V(cos n t) = cos(n t) / (2 n),   W(cos n t) = 0 (n >= 1),
    W(1) = 1/2,                      L(cos n t) = (n/2) cos(n t).

Volume potentials over a DomainMesh use a smooth near/far partition of
unity around each target: the far part is plain tensor quadrature of the
(smoothly windowed) integrand, the near part is integrated on a local
dyadic Gauss grid refined toward the singular point, with the density
either evaluated analytically or interpolated from nodal values.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularEvaluationError
from .geometry import BoundaryGrid, CurveParametrization, DomainMesh, boundary_grid

_TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# fundamental solution

def fundamental_solution(x, y):
    """Laplace fundamental solution P(x - y) with both gradients.

    Returns (value, grad_x, grad_y); value = log|x - y| / (2 pi).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.atleast_2d(x - y)
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    if np.any(r2 == 0.0):
        raise SingularEvaluationError("fundamental solution evaluated at x == y")
    value = np.log(r2) / (2.0 * _TWO_PI)
    grad_x = z / (_TWO_PI * r2[:, None])
    if x.ndim == 1 and y.ndim == 1:
        return float(value[0]), grad_x[0], -grad_x[0]
    return value, grad_x, -grad_x


def _kernel_value(x, y):
    """P(x - y) for x of shape (m, 2) and a single target y."""
    z = x - y
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    return np.log(r2) / (2.0 * _TWO_PI)


def _kernel_grad_y(x, y):
    """grad_y P(x - y) = (y - x) / (2 pi |x - y|^2), shape (m, 2)."""
    z = y - x
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    return z / (_TWO_PI * r2[:, None])


# ---------------------------------------------------------------------------
# periodic spectral helpers

def trig_resample(values: np.ndarray, n_up: int) -> np.ndarray:
    """Trigonometric interpolation of periodic nodal data onto n_up nodes."""
    n = values.shape[0]
    if n_up == n:
        return values.copy()
    spec = np.fft.rfft(values)
    out = np.zeros(n_up // 2 + 1, dtype=complex)
    out[: n // 2 + 1] = spec
    out[n // 2] *= 0.5  # old Nyquist mode is now an interior mode
    return np.fft.irfft(out, n_up) * (n_up / n)


def trig_interp_matrix(n: int, n_up: int) -> np.ndarray:
    """Dense matrix form of trig_resample (n_up x n)."""
    mat = np.empty((n_up, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[:] = 0.0
        basis[j] = 1.0
        mat[:, j] = trig_resample(basis, n_up)
    return mat


def fourier_diff(values: np.ndarray) -> np.ndarray:
    """Spectral derivative d/dt of periodic nodal data on [0, 2 pi)."""
    n = values.shape[0]
    k = np.fft.rfftfreq(n, d=1.0 / n)
    spec = np.fft.rfft(values) * (1j * k)
    if n % 2 == 0:
        spec[-1] = 0.0  # derivative of the Nyquist cosine mode at the nodes
    return np.fft.irfft(spec, n)


def fourier_diff_matrix(n: int) -> np.ndarray:
    """Spectral differentiation matrix for even n on equispaced [0, 2 pi)."""
    j = np.arange(n)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        mat = 0.5 * (-1.0) ** diff / np.tan(np.pi * diff / n)
    np.fill_diagonal(mat, 0.0)
    return mat


# ---------------------------------------------------------------------------
# boundary operators (direct values)

def kress_log_weights(grid: BoundaryGrid) -> np.ndarray:
    """Quadrature weights R[i, j] for int_0^{2pi} ln(4 sin^2((t_i - s)/2)) f(s) ds."""
    n_half = grid.n // 2
    dt = grid.t[:, None] - grid.t[None, :]
    m = np.arange(1, n_half)
    acc = np.zeros((grid.n, grid.n))
    for mm in m:
        acc += np.cos(mm * dt) / mm
    return -(_TWO_PI / n_half) * acc - (np.pi / n_half ** 2) * np.cos(n_half * dt)


def single_layer_matrix(grid: BoundaryGrid) -> np.ndarray:
    """Direct value of the single layer on the grid (Kress quadrature)."""
    if not grid.curve.analytic:
        raise SingularEvaluationError(
            "log-quadrature single layer requires the analytic-curve flag")
    n = grid.n
    x = grid.points
    dt = grid.t[:, None] - grid.t[None, :]
    d2 = ((x[:, None, 0] - x[None, :, 0]) ** 2
          + (x[:, None, 1] - x[None, :, 1]) ** 2)
    s2 = 4.0 * np.sin(dt / 2.0) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = 0.5 * np.log(d2 / s2)
    np.fill_diagonal(smooth, np.log(grid.speeds))
    r_w = kress_log_weights(grid)
    mat = -(0.5 * r_w + (_TWO_PI / n) * smooth) / _TWO_PI
    return mat * grid.speeds[None, :]


def double_layer_matrix(grid: BoundaryGrid) -> np.ndarray:
    """Direct value of the double layer (continuous kernel, curvature diagonal)."""
    x = grid.points
    zx = x[None, :, 0] - x[:, None, 0]
    zy = x[None, :, 1] - x[:, None, 1]
    r2 = zx ** 2 + zy ** 2
    num = grid.normals[None, :, 0] * zx + grid.normals[None, :, 1] * zy
    with np.errstate(divide="ignore", invalid="ignore"):
        ker = -num / (_TWO_PI * r2) * grid.speeds[None, :]
    kappa_term = grid.curve.curvature_term(grid.t)
    np.fill_diagonal(ker, kappa_term / (2.0 * _TWO_PI))
    return ker * (_TWO_PI / grid.n)


def adjoint_double_layer_matrix(grid: BoundaryGrid) -> np.ndarray:
    """Direct value of the adjoint double layer (transpose kernel, same diagonal)."""
    x = grid.points
    zx = x[:, None, 0] - x[None, :, 0]
    zy = x[:, None, 1] - x[None, :, 1]
    r2 = zx ** 2 + zy ** 2
    num = grid.normals[:, None, 0] * zx + grid.normals[:, None, 1] * zy
    with np.errstate(divide="ignore", invalid="ignore"):
        ker = -num / (_TWO_PI * r2) * grid.speeds[None, :]
    kappa_term = grid.curve.curvature_term(grid.t)
    np.fill_diagonal(ker, kappa_term / (2.0 * _TWO_PI))
    return ker * (_TWO_PI / grid.n)


def hypersingular_matrix(grid: BoundaryGrid) -> np.ndarray:
    """Hypersingular operator via the Maue identity L = -d/ds V d/ds."""
    d_t = fourier_diff_matrix(grid.n)
    d_s = d_t / grid.speeds[:, None]
    return -d_s @ single_layer_matrix(grid) @ d_s


def apply_boundary_operator(matrix: np.ndarray, density: np.ndarray) -> np.ndarray:
    return matrix @ density


# ---------------------------------------------------------------------------
# off-boundary layer potentials

_LADDER_CAP = 1 << 15


def _upsample_count(grid: BoundaryGrid, dist: float) -> int:
    """Grid size needed for accurate trapezoid evaluation at distance dist."""
    if dist <= 0.0:
        return _LADDER_CAP
    need = 8.0 * grid.length / dist
    n_up = grid.n
    while n_up < min(need, _LADDER_CAP):
        n_up *= 2
    return n_up


def distance_to_curve(curve: CurveParametrization, targets, n_sample=4096):
    t = _TWO_PI * np.arange(n_sample) / n_sample
    x = curve.position(t)
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    d = np.empty(pts.shape[0])
    for i, p in enumerate(pts):
        d[i] = np.sqrt(((x - p) ** 2).sum(axis=1).min())
    return d


def _offboundary_values(points, normals, weights, density, kind, y):
    if kind == "single":
        return -np.sum(weights * _kernel_value(points, y) * density)
    if kind == "double":
        z = points - y
        r2 = z[:, 0] ** 2 + z[:, 1] ** 2
        ker = (normals[:, 0] * z[:, 0] + normals[:, 1] * z[:, 1]) / (_TWO_PI * r2)
        return -np.sum(weights * ker * density)
    raise ValueError(f"unknown layer kind {kind!r}")


def layer_potential_offboundary(grid: BoundaryGrid, density, kind: str, targets,
                                density_fn=None):
    """Evaluate the single or double layer at off-boundary targets.

    ``density`` holds nodal values; near targets trigger evaluation on an
    upsampled grid with the density either resampled trigonometrically or,
    if ``density_fn(t)`` is given, evaluated analytically.
    """
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    density = np.asarray(density, dtype=float)
    dists = distance_to_curve(grid.curve, pts)
    out = np.empty(pts.shape[0])
    cache = {grid.n: (grid, density)}
    for i, (y, d) in enumerate(zip(pts, dists)):
        if d == 0.0:
            raise SingularEvaluationError("off-boundary evaluation target lies on S")
        n_up = _upsample_count(grid, d)
        if n_up not in cache:
            g_up = boundary_grid(grid.curve, n_up)
            rho_up = (density_fn(g_up.t) if density_fn is not None
                      else trig_resample(density, n_up))
            cache[n_up] = (g_up, rho_up)
        g_up, rho_up = cache[n_up]
        out[i] = _offboundary_values(g_up.points, g_up.normals, g_up.weights,
                                     rho_up, kind, y)
    return out if pts.shape[0] > 1 else out


def layer_rows_offboundary(grid: BoundaryGrid, kind: str, targets) -> np.ndarray:
    """Matrix rows mapping nodal density values to off-boundary potentials."""
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    dists = distance_to_curve(grid.curve, pts)
    rows = np.empty((pts.shape[0], grid.n))
    grids = {grid.n: (grid, np.eye(grid.n))}
    for i, (y, d) in enumerate(zip(pts, dists)):
        n_up = _upsample_count(grid, d)
        if n_up not in grids:
            grids[n_up] = (boundary_grid(grid.curve, n_up),
                           trig_interp_matrix(grid.n, n_up))
        g_up, interp = grids[n_up]
        if kind == "single":
            base = -g_up.weights * _kernel_value(g_up.points, y)
        elif kind == "double":
            z = g_up.points - y
            r2 = z[:, 0] ** 2 + z[:, 1] ** 2
            ker = (g_up.normals[:, 0] * z[:, 0]
                   + g_up.normals[:, 1] * z[:, 1]) / (_TWO_PI * r2)
            base = -g_up.weights * ker
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        rows[i] = base @ interp
    return rows


# ---------------------------------------------------------------------------
# volume potentials on the domain mesh

def _bump(u: np.ndarray) -> np.ndarray:
    """C^4 plateau bump: 1 for |u| <= 1/2, 0 for |u| >= 1."""
    au = np.abs(u)
    out = np.zeros_like(au)
    out[au <= 0.5] = 1.0
    mid = (au > 0.5) & (au < 1.0)
    s = (1.0 - au[mid]) / 0.5
    out[mid] = s ** 5 * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + 70.0 * s))))
    return out


def _split_rect(outer, inner):
    """Decompose outer \\ inner (inner inside outer) into <= 4 rectangles."""
    (ox0, ox1, oy0, oy1) = outer
    (ix0, ix1, iy0, iy1) = inner
    rects = []
    if ix0 > ox0:
        rects.append((ox0, ix0, oy0, oy1))
    if ix1 < ox1:
        rects.append((ix1, ox1, oy0, oy1))
    if iy0 > oy0:
        rects.append((max(ix0, ox0), min(ix1, ox1), oy0, iy0))
    if iy1 < oy1:
        rects.append((max(ix0, ox0), min(ix1, ox1), iy1, oy1))
    return [r for r in rects if r[1] > r[0] + 1e-300 and r[3] > r[2] + 1e-300]


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X01 = 0.5 * (_GL_X + 1.0)
_GL_W01 = 0.5 * _GL_W


# unit 4x4 tensor Gauss rule on [0, 1]^2
_U_PTS = np.stack(
    [np.repeat(_GL_X01, 4), np.tile(_GL_X01, 4)], axis=1)
_U_WTS = np.outer(_GL_W01, _GL_W01).ravel()


def _rect_cells(rect, cell_size, origins, sizes, v_cap=np.inf):
    """Append near-square cell specs covering a rectangle; the second
    coordinate additionally honours the v_cap cell-size limit."""
    x0, x1, y0, y1 = rect
    nx = max(1, int(np.ceil((x1 - x0) / cell_size)))
    ny = max(1, int(np.ceil((y1 - y0) / min(cell_size, v_cap))))
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    ox = x0 + hx * np.arange(nx)
    oy = y0 + hy * np.arange(ny)
    xx, yy = np.meshgrid(ox, oy, indexing="ij")
    origins.append(np.stack([xx.ravel(), yy.ravel()], axis=1))
    sizes.append(np.broadcast_to(np.array([hx, hy]), (nx * ny, 2)))


def _singular_rect_quadrature(rect, center, levels=24, v_cap=np.inf):
    """Gauss quadrature on a rectangle, dyadically refined toward ``center``.

    ``center`` may lie on or outside the rectangle (clipped targets); the
    innermost 2^-levels neighbourhood of the singular point is dropped.
    ``v_cap`` limits the cell size along the second coordinate so that a
    window profile living there stays resolved.
    """
    cx, cy = center
    x0, x1, y0, y1 = rect
    scale = max(abs(x0 - cx), abs(x1 - cx), abs(y0 - cy), abs(y1 - cy))
    origins, sizes = [], []
    cur = rect
    s = scale
    for _ in range(levels):
        s_in = 0.5 * s
        inner = (max(cur[0], cx - s_in), min(cur[1], cx + s_in),
                 max(cur[2], cy - s_in), min(cur[3], cy + s_in))
        if inner[1] <= inner[0] or inner[3] <= inner[2]:
            _rect_cells(cur, 0.75 * s, origins, sizes, v_cap=v_cap)
            break
        for strip in _split_rect(cur, inner):
            _rect_cells(strip, 0.75 * s_in, origins, sizes, v_cap=v_cap)
        cur = inner
        s = s_in
    if not origins:
        return np.zeros((0, 2)), np.zeros(0)
    orig = np.concatenate(origins)
    size = np.concatenate(sizes)
    pts = (orig[:, None, :] + size[:, None, :] * _U_PTS[None, :, :]).reshape(-1, 2)
    wts = (size[:, 0] * size[:, 1])[:, None] * _U_WTS[None, :]
    return pts, wts.ravel()


class _NearField:
    """Geometry of the smooth near-field window around one target."""

    def __init__(self, mesh: DomainMesh, y, rho_y, theta_y, width_cols=5,
                 width_phys=1.2, levels=26):
        self.mesh = mesh
        self.y = np.asarray(y, dtype=float)
        dtheta = _TWO_PI / mesh.m_theta
        r_s = float(mesh.curve.radial_profile(np.atleast_1d(theta_y))[0])
        span = mesh.r_trunc - r_s
        r_y = r_s + span * max(rho_y, 0.0)
        # the window varies in theta only; the near rectangle covers the
        # full radial extent so the far field never sees a radial edge
        self.theta_half = min(0.9 * np.pi,
                              max(width_cols * dtheta, 0.7,
                                  width_phys / max(r_y, 1e-3)))
        self.rho_y = rho_y
        self.theta_y = theta_y
        self.r_y = r_y
        self.span = span
        rect = (0.0, 1.0, theta_y - self.theta_half, theta_y + self.theta_half)
        # build the dyadic grid in physically isotropic coordinates
        su, sv = span, max(r_y, 1e-3)
        urect = (rect[0] * su, rect[1] * su, rect[2] * sv, rect[3] * sv)
        ucenter = (np.clip(rho_y, 0.0, 1.0) * su, theta_y * sv)
        upts, uwts = _singular_rect_quadrature(
            urect, ucenter, levels=levels, v_cap=0.125 * self.theta_half * sv)
        self.fine_rho = upts[:, 0] / su
        self.fine_theta = upts[:, 1] / sv
        self.fine_w = uwts / (su * sv)
        bump = _bump((self.fine_theta - theta_y) / self.theta_half)
        jac = mesh.jacobian(self.fine_rho, self.fine_theta)
        self.fine_w = self.fine_w * bump * jac
        keep = self.fine_w != 0.0
        self.fine_rho = self.fine_rho[keep]
        self.fine_theta = self.fine_theta[keep]
        self.fine_w = self.fine_w[keep]
        self.fine_x = mesh.physical_points(self.fine_rho, self.fine_theta)

    def node_window(self):
        """Values of the near-field window at the mesh nodes."""
        mesh = self.mesh
        dth = (mesh.theta[None, :] - self.theta_y + np.pi) % _TWO_PI - np.pi
        b = np.broadcast_to(_bump(dth / self.theta_half),
                            (mesh.n_r, mesh.m_theta))
        return b.ravel()


def _near_field_for(mesh: DomainMesh, y, width_cols=5, width_phys=1.2,
                    levels=26):
    """Return a _NearField when the target is close to mesh nodes, else None."""
    rho, theta = mesh.mesh_coords(y)
    rho_y, theta_y = float(rho[0]), float(theta[0])
    r_s = float(mesh.curve.radial_profile(np.atleast_1d(theta_y))[0])
    span = mesh.r_trunc - r_s
    # radial clearance of the target from the meshed region
    d_phys = 0.0
    if rho_y < 0.0:
        d_phys = -rho_y * span
    elif rho_y > 1.0:
        d_phys = (rho_y - 1.0) * span
    if d_phys > 0.5:
        return None
    return _NearField(mesh, y, rho_y, theta_y, width_cols=width_cols,
                      width_phys=width_phys, levels=levels)


def newtonian_potential(mesh: DomainMesh, g_nodes, targets, *, g_fn=None,
                        want_gradient=False, width_cols=5, width_phys=1.2,
                        levels=26):
    """Newtonian potential int P(x - y) g(x) dx over the mesh, with gradient.

    ``g_nodes`` are nodal density values; near the target the density is
    interpolated from them unless ``g_fn(points)`` is supplied.
    Returns values (m,), or (values, gradients (m, 2)) if requested.
    """
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    g_nodes = None if g_nodes is None else np.asarray(g_nodes, dtype=float)
    vals = np.empty(pts.shape[0])
    grads = np.empty((pts.shape[0], 2)) if want_gradient else None
    for i, y in enumerate(pts):
        nf = _near_field_for(mesh, y, width_cols=width_cols,
                             width_phys=width_phys, levels=levels)
        if nf is None:
            win = np.zeros(mesh.n_nodes)
        else:
            win = nf.node_window()
        far_mask = win < 1.0
        xf = mesh.points[far_mask]
        wf = mesh.weights[far_mask] * (1.0 - win[far_mask])
        gf = (g_fn(xf) if g_fn is not None else g_nodes[far_mask])
        if g_fn is None:
            gf = g_nodes[far_mask]
        vals[i] = np.sum(wf * _kernel_value(xf, y) * gf)
        if want_gradient:
            grads[i] = (wf * gf) @ _kernel_grad_y(xf, y)
        if nf is not None and nf.fine_x.shape[0]:
            if g_fn is not None:
                g_fine = g_fn(nf.fine_x)
            else:
                idx, wts = mesh.interpolation(nf.fine_rho, nf.fine_theta)
                g_fine = np.sum(g_nodes[idx] * wts, axis=1)
            z = nf.fine_x - y
            r2 = z[:, 0] ** 2 + z[:, 1] ** 2
            ok = r2 > 0.0
            vals[i] += np.sum(nf.fine_w[ok] * g_fine[ok]
                              * np.log(r2[ok]) / (2.0 * _TWO_PI))
            if want_gradient:
                gk = -z[ok] / (_TWO_PI * r2[ok, None])
                grads[i] += (nf.fine_w[ok] * g_fine[ok]) @ gk
    if want_gradient:
        return vals, grads
    return vals


def domain_rows(mesh: DomainMesh, targets, kernel_fn, *, width_cols=5,
                width_phys=1.2, levels=26, near_targets=None):
    """Assemble matrix rows of a volume operator acting on nodal densities.

    ``kernel_fn(x_points, y)`` returns the full integrand factor (kernel
    times any analytic source-point factors) at source points ``x_points``
    for target ``y``; it must tolerate coincident points only when masked
    out by the near-field window (they never reach it).
    """
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    rows = np.zeros((pts.shape[0], mesh.n_nodes))
    for i, y in enumerate(pts):
        if near_targets is not None and not near_targets[i]:
            nf = None
        else:
            nf = _near_field_for(mesh, y, width_cols=width_cols,
                                 width_phys=width_phys, levels=levels)
        if nf is None:
            rows[i] = mesh.weights * kernel_fn(mesh.points, y)
            continue
        win = nf.node_window()
        far_mask = win < 1.0
        rows[i, far_mask] = (mesh.weights[far_mask] * (1.0 - win[far_mask])
                             * kernel_fn(mesh.points[far_mask], y))
        if nf.fine_x.shape[0]:
            z = nf.fine_x - y
            ok = (z[:, 0] ** 2 + z[:, 1] ** 2) > 0.0
            kv = nf.fine_w[ok] * kernel_fn(nf.fine_x[ok], y)
            idx, wts = mesh.interpolation(nf.fine_rho[ok], nf.fine_theta[ok])
            np.add.at(rows[i], idx.ravel(), (kv[:, None] * wts).ravel())
    return rows
