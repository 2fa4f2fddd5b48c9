"""Parametrix-based potentials for the variable-coefficient operator
div(a grad u).

The parametrix divides the Laplace fundamental solution by the
coefficient at the source point,

    P(x, y) = P_L(x - y) / a(x),

so every variable-coefficient potential reduces to a constant-coefficient
one acting on a rescaled density, plus boundary corrections involving the
normal derivative of ln a:

    volume:        Q rho       = Q_L(rho / a)
    single layer:  V rho       = V_L(rho / a)
    double layer:  W tau       = W_L tau - V_L(tau d(ln a)/dn)
    adjoint layer: W' rho      = a W'_L(rho / a)
    hypersingular: Lhat rho    = a L_L rho
    one-sided:     L(+/-) rho  = Lhat rho - a T(+/-)_L V_L(rho d(ln a)/dn)

(the _L suffix marks the Laplace operators from laplace.py).  Applying
div(a grad .) to the parametrix leaves the remainder kernel

    R(x, y) = -lap(ln a)(x) P_L(x - y) - grad(ln a)(x) . grad_x P_L(x - y),

whose integral operator is compact because grad a decays; its rows vanish
at source nodes outside the coefficient support.
"""

from __future__ import annotations

import numpy as np

from . import laplace
from .coefficient import CoefficientField
from .geometry import BoundaryGrid, DomainMesh

_TWO_PI = 2.0 * np.pi


def parametrix(field: CoefficientField, x, y):
    """P(x, y) = P_L(x - y) / a(x) for source x and target y."""
    xx = np.atleast_2d(np.asarray(x, dtype=float))
    val = laplace._kernel_value(xx, np.asarray(y, dtype=float))
    a, _, _ = field.eval(xx)
    out = val / a
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def _boundary_data(field: CoefficientField, grid: BoundaryGrid):
    a, _, _ = field.eval(grid.points)
    dln = field.normal_log_derivative(grid.points, grid.normals)
    return a, dln


# ---------------------------------------------------------------------------
# volume potential and remainder

def volume_potential(mesh: DomainMesh, field: CoefficientField, targets, *,
                     rho_nodes=None, rho_fn=None, want_gradient=False,
                     **quad_opts):
    """Parametrix volume potential (and target gradient) at given points."""
    if rho_fn is not None:
        a_fn = lambda p: rho_fn(p) / field.eval(p)[0]
        return laplace.newtonian_potential(mesh, None, targets, g_fn=a_fn,
                                           want_gradient=want_gradient,
                                           **quad_opts)
    a_nodes, _, _ = field.eval(mesh.points)
    g = np.asarray(rho_nodes, dtype=float) / a_nodes
    return laplace.newtonian_potential(mesh, g, targets,
                                       want_gradient=want_gradient, **quad_opts)


def volume_rows(mesh: DomainMesh, field: CoefficientField, targets,
                **quad_opts):
    """Matrix rows of the volume potential acting on nodal densities."""
    a_nodes, _, _ = field.eval(mesh.points)
    rows = laplace.domain_rows(mesh, targets, laplace._kernel_value, **quad_opts)
    return rows / a_nodes[None, :]


def remainder_kernel(field: CoefficientField, x, y):
    """R(x, y) for source points x (m, 2) and a single target y.

    Coincident points are safe when the coefficient log-derivatives are
    negligible there (the kernel factor vanishes outside the support);
    the evaluation is genuinely singular otherwise and raises.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    gl = field.grad_log(x)
    ll = field.laplacian_log(x)
    z = x - y
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    out = np.zeros(x.shape[0])
    ok = r2 > 0.0
    out[ok] = (-ll[ok] * np.log(r2[ok]) / (2.0 * _TWO_PI)
               - (gl[ok, 0] * z[ok, 0] + gl[ok, 1] * z[ok, 1])
               / (_TWO_PI * r2[ok]))
    if np.any(~ok):
        bad = ~ok & ((np.abs(gl).max(axis=1) > 1e-8) | (np.abs(ll) > 1e-8))
        if np.any(bad):
            from .errors import SingularEvaluationError
            raise SingularEvaluationError(
                "remainder kernel evaluated at a coincident point inside "
                "the coefficient support")
    return out


def _near_mask_for_support(field: CoefficientField, targets, clearance=1.0):
    """Targets needing local quadrature: those near the coefficient support."""
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    if not np.isfinite(field.support_radius):
        return None
    r = np.hypot(pts[:, 0], pts[:, 1])
    return r <= field.support_radius + clearance


def remainder_rows(mesh: DomainMesh, field: CoefficientField, targets,
                   **quad_opts):
    """Matrix rows of the remainder operator acting on nodal densities."""
    if field.is_constant:
        pts = np.atleast_2d(np.asarray(targets, dtype=float))
        return np.zeros((pts.shape[0], mesh.n_nodes))
    near = _near_mask_for_support(field, targets)
    return laplace.domain_rows(
        mesh, targets, lambda x, y: remainder_kernel(field, x, y),
        near_targets=near, **quad_opts)


def remainder_apply(mesh: DomainMesh, field: CoefficientField, targets, *,
                    rho_nodes=None, rho_fn=None, **quad_opts):
    """Remainder potential of an analytic or nodal density at given targets."""
    if field.is_constant:
        pts = np.atleast_2d(np.asarray(targets, dtype=float))
        return np.zeros(pts.shape[0])
    if rho_fn is None:
        return remainder_rows(mesh, field, targets, **quad_opts) \
            @ np.asarray(rho_nodes, dtype=float)
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.empty(pts.shape[0])
    near = _near_mask_for_support(field, targets)
    for i, y in enumerate(pts):
        g_fn = lambda p: remainder_kernel(field, p, y) * rho_fn(p)
        if near is not None and not near[i]:
            out[i] = np.sum(mesh.weights * g_fn(mesh.points))
            continue
        nf = laplace._near_field_for(mesh, y, **quad_opts)
        if nf is None:
            out[i] = np.sum(mesh.weights * g_fn(mesh.points))
            continue
        win = nf.node_window()
        far = win < 1.0
        out[i] = np.sum(mesh.weights[far] * (1.0 - win[far])
                        * g_fn(mesh.points[far]))
        if nf.fine_x.shape[0]:
            out[i] += np.sum(nf.fine_w * g_fn(nf.fine_x))
    return out


def remainder_split(mesh: DomainMesh, rows: np.ndarray, r_split: float):
    """Split remainder rows into a core part (sources inside radius r_split,
    smoothly cut off by 2 r_split) and the complementary tail part.

    The cutoff scales columns, so the two parts add back exactly.
    """
    r = np.hypot(mesh.points[:, 0], mesh.points[:, 1])
    s = np.clip((r - r_split) / r_split, 0.0, 1.0)
    chi = 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)
    return rows * chi[None, :], rows * (1.0 - chi)[None, :], chi


# ---------------------------------------------------------------------------
# boundary operators (direct values on S)

def single_layer_boundary(grid: BoundaryGrid, field: CoefficientField):
    a, _ = _boundary_data(field, grid)
    return laplace.single_layer_matrix(grid) / a[None, :]


def double_layer_boundary(grid: BoundaryGrid, field: CoefficientField):
    a, dln = _boundary_data(field, grid)
    return (laplace.double_layer_matrix(grid)
            - laplace.single_layer_matrix(grid) * dln[None, :])


def adjoint_double_layer_boundary(grid: BoundaryGrid, field: CoefficientField):
    a, _ = _boundary_data(field, grid)
    return a[:, None] * laplace.adjoint_double_layer_matrix(grid) / a[None, :]


def hypersingular_boundary(grid: BoundaryGrid, field: CoefficientField):
    """Two-sided part Lhat = a L_L (equal one-sided limits when a is flat)."""
    a, _ = _boundary_data(field, grid)
    return a[:, None] * laplace.hypersingular_matrix(grid)


def hypersingular_trace(grid: BoundaryGrid, field: CoefficientField, side=+1):
    """One-sided hypersingular trace L(+/-); side=+1 is the exterior limit."""
    a, dln = _boundary_data(field, grid)
    t_v = (0.5 * side * np.eye(grid.n)
           + laplace.adjoint_double_layer_matrix(grid))
    return hypersingular_boundary(grid, field) \
        - a[:, None] * (t_v * dln[None, :])


# ---------------------------------------------------------------------------
# off-boundary layer potentials

def single_layer_offboundary(grid: BoundaryGrid, field: CoefficientField,
                             density, targets, density_fn=None):
    a, _ = _boundary_data(field, grid)
    if density_fn is not None:
        fn = lambda t: density_fn(t) / field.eval(grid.curve.position(t))[0]
        return laplace.layer_potential_offboundary(grid, density / a, "single",
                                                   targets, density_fn=fn)
    return laplace.layer_potential_offboundary(grid, np.asarray(density) / a,
                                               "single", targets)


def double_layer_offboundary(grid: BoundaryGrid, field: CoefficientField,
                             density, targets, density_fn=None):
    a, dln = _boundary_data(field, grid)
    density = np.asarray(density, dtype=float)
    if density_fn is not None:
        def corr_fn(t):
            pts = grid.curve.position(t)
            _, tang, nrm, _ = grid.curve.evaluate(t)
            return density_fn(t) * field.normal_log_derivative(pts, nrm)
        w_part = laplace.layer_potential_offboundary(
            grid, density, "double", targets, density_fn=density_fn)
        v_part = laplace.layer_potential_offboundary(
            grid, density * dln, "single", targets, density_fn=corr_fn)
    else:
        w_part = laplace.layer_potential_offboundary(grid, density, "double",
                                                     targets)
        v_part = laplace.layer_potential_offboundary(grid, density * dln,
                                                     "single", targets)
    return w_part - v_part


def single_layer_rows_offboundary(grid: BoundaryGrid, field: CoefficientField,
                                  targets):
    a, _ = _boundary_data(field, grid)
    return laplace.layer_rows_offboundary(grid, "single", targets) / a[None, :]


def double_layer_rows_offboundary(grid: BoundaryGrid, field: CoefficientField,
                                  targets):
    a, dln = _boundary_data(field, grid)
    return (laplace.layer_rows_offboundary(grid, "double", targets)
            - laplace.layer_rows_offboundary(grid, "single", targets)
            * dln[None, :])


def conormal_derivative(field: CoefficientField, points, normals, gradients):
    """T u = a n . grad u from pointwise gradient samples."""
    a, _, _ = field.eval(points)
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    gradients = np.atleast_2d(np.asarray(gradients, dtype=float))
    return a * np.sum(normals * gradients, axis=1)
