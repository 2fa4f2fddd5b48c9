"""Manufactured solutions and numerical checks of the identities the
solver is built on: representation (third Green) identity, trace form,
second Green identity on the truncated domain, equivalence of the solved
densities with the exact solution, remainder split decay, and the
conditioning behaviour of the assembled system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import laplace, parametrix
from .coefficient import CoefficientField, make_coefficient, weight
from .errors import UnknownCatalogError, VerificationError
from .geometry import boundary_grid, domain_mesh, make_curve
from .system import DirichletProblem, assemble_system, solve

_TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# manufactured cases

@dataclass
class ManufacturedCase:
    """Exact exterior solution with all data the solver consumes."""

    name: str
    curve: object
    field: CoefficientField
    exact_u: object          # u(points)
    exact_grad: object       # grad u(points)
    source: object           # f = div(a grad u), closed form
    dirichlet: object        # phi0(t) on the curve parameter
    psi_exact: object        # T+ u(t) on the curve parameter
    decay_class: str
    r_trunc: float

    def problem(self):
        return DirichletProblem(self.curve, self.field, self.source,
                                self.dirichlet, name=self.name)

    def validate(self, *, n_points=20, seed=1234, tol=1e-6):
        """Cross-check the closed-form data against finite differences.

        Verifies f = div(a grad u) at random exterior points, the decay of
        u, and the mean-zero properties of f and psi.
        """
        rng = np.random.default_rng(seed)
        r = rng.uniform(1.5, 4.0, n_points)
        th = rng.uniform(0.0, _TWO_PI, n_points)
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        h = 5e-4
        e1 = np.array([h, 0.0])
        e2 = np.array([0.0, h])
        u0 = self.exact_u(pts)
        lap_u = (self.exact_u(pts + e1) + self.exact_u(pts - e1)
                 + self.exact_u(pts + e2) + self.exact_u(pts - e2)
                 - 4.0 * u0) / h ** 2
        grad_u = np.stack(
            [(self.exact_u(pts + e1) - self.exact_u(pts - e1)) / (2 * h),
             (self.exact_u(pts + e2) - self.exact_u(pts - e2)) / (2 * h)],
            axis=1)
        a, ga, _ = self.field.eval(pts)
        au_fd = a * lap_u + np.sum(ga * grad_u, axis=1)
        f = self.source(pts)
        scale = max(float(np.abs(f).max()), 1.0)
        fd_err = float(np.abs(au_fd - f).max()) / scale
        if fd_err > tol:
            raise VerificationError(
                f"closed-form source disagrees with finite differences "
                f"({fd_err:.2e} relative)")
        far = np.array([[50.0, 0.0], [0.0, 80.0], [-120.0, 7.0]])
        if np.abs(self.exact_u(far)).max() > 0.1:
            raise VerificationError("exact solution does not decay")
        grid = boundary_grid(self.curve, 64)
        mesh = domain_mesh(self.curve, self.r_trunc, 4 * np.pi / 64,
                           m_theta=64)
        f_mean = float(np.sum(mesh.weights * self.source(mesh.points)))
        psi_mean = float(np.sum(grid.weights * self.psi_exact(grid.t)))
        if abs(f_mean) > 1e-6 or abs(psi_mean) > 1e-10:
            raise VerificationError(
                f"mean-zero check failed: <f,1> = {f_mean:.2e}, "
                f"<psi,1> = {psi_mean:.2e}")
        return {"fd_residual": fd_err, "f_mean": f_mean, "psi_mean": psi_mean}


def _dipole_u(pts):
    r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    return pts[:, 0] / r2


def _dipole_grad(pts):
    r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    return np.stack([(r2 - 2.0 * pts[:, 0] ** 2) / r2 ** 2,
                     -2.0 * pts[:, 0] * pts[:, 1] / r2 ** 2], axis=1)


def manufactured_case(name, **params) -> ManufacturedCase:
    """Catalog of exact exterior solutions on the unit circle.

    "laplace-dipole": a = 1 and the decaying harmonic dipole u = x1/|x|^2,
    so f = 0 and the conormal density is cos(t).  "bump-dipole": the same
    u with the gaussian-bump coefficient, f = grad a . grad u in closed
    form.  "zero": everything identically zero.
    """
    curve = make_curve("circle", radius=1.0)
    if name == "laplace-dipole":
        field = make_coefficient("constant", value=1.0)
        return ManufacturedCase(
            name=name, curve=curve, field=field,
            exact_u=_dipole_u, exact_grad=_dipole_grad,
            source=lambda p: np.zeros(p.shape[0]),
            dirichlet=np.cos, psi_exact=np.cos,
            decay_class="O(1/r)", r_trunc=params.pop("r_trunc", 3.0))
    if name == "bump-dipole":
        beta = params.pop("beta", 1.0)
        sigma = params.pop("sigma", 1.0)
        field = make_coefficient("gaussian_bump", beta=beta, sigma=sigma)

        def source(p):
            _, ga, _ = field.eval(p)
            return np.sum(ga * _dipole_grad(p), axis=1)

        a_s = 1.0 + beta * np.exp(-1.0 / sigma ** 2)
        return ManufacturedCase(
            name=name, curve=curve, field=field,
            exact_u=_dipole_u, exact_grad=_dipole_grad, source=source,
            dirichlet=np.cos, psi_exact=lambda t: a_s * np.cos(t),
            decay_class="O(1/r)", r_trunc=params.pop("r_trunc", 6.0))
    if name == "zero":
        field = make_coefficient("constant", value=1.0)
        zfun = lambda p: np.zeros(np.atleast_2d(p).shape[0])
        return ManufacturedCase(
            name=name, curve=curve, field=field,
            exact_u=zfun, exact_grad=lambda p: np.zeros_like(np.atleast_2d(p)),
            source=zfun, dirichlet=np.zeros_like,
            psi_exact=np.zeros_like,
            decay_class="zero", r_trunc=params.pop("r_trunc", 3.0))
    raise UnknownCatalogError(f"unknown manufactured case {name!r}")


def default_probes(n_probes=10, r_min=1.2, r_max=4.0, seed=7):
    """Deterministic exterior probe points, spread in radius and angle."""
    rng = np.random.default_rng(seed)
    r = np.linspace(r_min, r_max, n_probes)
    th = rng.uniform(0.0, _TWO_PI, n_probes)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


# ---------------------------------------------------------------------------
# Green identities

def green_identity_residuals(case: ManufacturedCase, points, *, n=64,
                             h=None, r_trunc=None):
    """Residual of the representation identity built from exact data.

    Checks u + R u - V (T+ u) + W (gamma+ u) = (volume potential of f) at
    the given exterior points, plus its trace form on the boundary nodes,
    and reports the flux balance between f and the conormal density.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = boundary_grid(case.curve, n)
    r_t = case.r_trunc if r_trunc is None else r_trunc
    mesh = domain_mesh(case.curve, r_t, 4 * np.pi / n if h is None else h,
                       m_theta=n)
    psi = case.psi_exact(grid.t)
    phi = case.dirichlet(grid.t)
    interior = (case.exact_u(pts)
                + parametrix.remainder_apply(mesh, case.field, pts,
                                             rho_fn=case.exact_u)
                - parametrix.single_layer_offboundary(
                    grid, case.field, psi, pts, density_fn=case.psi_exact)
                + parametrix.double_layer_offboundary(
                    grid, case.field, phi, pts, density_fn=case.dirichlet)
                - parametrix.volume_potential(mesh, case.field, pts,
                                              rho_fn=case.source))
    trace = (0.5 * phi
             + parametrix.remainder_apply(mesh, case.field, grid.points,
                                          rho_fn=case.exact_u)
             - parametrix.single_layer_boundary(grid, case.field) @ psi
             + parametrix.double_layer_boundary(grid, case.field) @ phi
             - parametrix.volume_potential(mesh, case.field, grid.points,
                                           rho_fn=case.source))
    flux = (float(np.sum(mesh.weights * case.source(mesh.points)))
            - float(np.sum(grid.weights * psi)))
    return {
        "interior_residuals": interior,
        "max_interior_residual": float(np.abs(interior).max()),
        "trace_residuals": trace,
        "max_trace_residual": float(np.abs(trace).max()),
        "flux_balance": flux,
        "n": n,
        "r_trunc": r_t,
    }


def second_green_identity(case: ManufacturedCase, *, field=None, n=64,
                          r_trunc=None, n_ring=720):
    """Second Green identity for the pair (u, quadrupole) on the truncated
    domain; the outer-ring boundary term is reported, not assumed zero.

    The second member v = (x1^2 - x2^2)/|x|^4 is harmonic and decays like
    |x|^-2, so every term is individually nonzero for a generic coefficient.
    ``field`` may override the case coefficient (the catalog solutions are
    harmonic, so their source under any coefficient is grad a . grad u);
    an off-center coefficient makes the identity non-trivial.
    """
    field = case.field if field is None else field

    def v_fn(p):
        r2 = p[:, 0] ** 2 + p[:, 1] ** 2
        return (p[:, 0] ** 2 - p[:, 1] ** 2) / r2 ** 2

    def grad_v(p):
        r2 = p[:, 0] ** 2 + p[:, 1] ** 2
        q = p[:, 0] ** 2 - p[:, 1] ** 2
        g = np.empty_like(p)
        g[:, 0] = 2.0 * p[:, 0] / r2 ** 2 - 4.0 * q * p[:, 0] / r2 ** 3
        g[:, 1] = -2.0 * p[:, 1] / r2 ** 2 - 4.0 * q * p[:, 1] / r2 ** 3
        return g

    def av_fn(p):
        # v is harmonic, so its source reduces to grad a . grad v
        _, ga, _ = field.eval(p)
        return np.sum(ga * grad_v(p), axis=1)

    def f_u(p):
        _, ga, _ = field.eval(p)
        return np.sum(ga * case.exact_grad(p), axis=1)

    grid = boundary_grid(case.curve, n)
    r_t = case.r_trunc if r_trunc is None else r_trunc
    mesh = domain_mesh(case.curve, r_t, 4 * np.pi / n, m_theta=n)
    u = case.exact_u
    lhs = float(np.sum(mesh.weights * (v_fn(mesh.points) * f_u(mesh.points)
                                       - u(mesh.points) * av_fn(mesh.points))))
    t_u = parametrix.conormal_derivative(field, grid.points, grid.normals,
                                         case.exact_grad(grid.points))
    t_v = parametrix.conormal_derivative(field, grid.points, grid.normals,
                                         grad_v(grid.points))
    s_term = float(np.sum(grid.weights * (v_fn(grid.points) * t_u
                                          - u(grid.points) * t_v)))
    th = _TWO_PI * np.arange(n_ring) / n_ring
    ring = r_t * np.stack([np.cos(th), np.sin(th)], axis=1)
    nu = ring / r_t  # outward
    a_r, _, _ = field.eval(ring)
    ring_term = float(np.sum((_TWO_PI * r_t / n_ring) * a_r
                             * (v_fn(ring) * np.sum(nu * case.exact_grad(ring), axis=1)
                                - u(ring) * np.sum(nu * grad_v(ring), axis=1))))
    return {
        "lhs": lhs,
        "boundary_term": s_term,
        "outer_ring_term": ring_term,
        "residual": lhs - s_term - ring_term,
    }


def _is_radial(field):
    g = field.gradient(np.array([[0.0, 1.7]]))
    return abs(g[0, 0]) < 1e-14


# ---------------------------------------------------------------------------
# jump relations

def _extrapolate_to_boundary(grid, field, density_fn, kind, side, *,
                             eps0=0.08, n_levels=6):
    """Richardson-extrapolated one-sided limit of a layer potential.

    side=+1 approaches from the unbounded side (against the normal, which
    points into the bounded complement), side=-1 from the bounded side.
    """
    eps = eps0 * 0.5 ** np.arange(n_levels)
    vals = np.empty((n_levels, grid.n))
    for k, e in enumerate(eps):
        targets = grid.points - side * e * grid.normals
        if kind == "single":
            vals[k] = parametrix.single_layer_offboundary(
                grid, field, density_fn(grid.t), targets,
                density_fn=density_fn)
        elif kind == "double":
            vals[k] = parametrix.double_layer_offboundary(
                grid, field, density_fn(grid.t), targets,
                density_fn=density_fn)
        else:
            raise VerificationError(f"unknown layer kind {kind!r}")
    vander = np.vander(eps, n_levels)
    coeffs = np.linalg.solve(vander, vals)
    return coeffs[-1]


def jump_relation_check(grid, field, density_fn, *, eps0=0.08, n_levels=6):
    """Max deviation of the extrapolated one-sided traces from the direct
    boundary operators, for the single and double layer on both sides."""
    rho = density_fn(grid.t)
    v_direct = parametrix.single_layer_boundary(grid, field) @ rho
    w_direct = parametrix.double_layer_boundary(grid, field) @ rho
    out = {}
    for side, tag in ((+1, "exterior"), (-1, "interior")):
        v_lim = _extrapolate_to_boundary(grid, field, density_fn, "single",
                                         side, eps0=eps0, n_levels=n_levels)
        w_lim = _extrapolate_to_boundary(grid, field, density_fn, "double",
                                         side, eps0=eps0, n_levels=n_levels)
        out[f"single_{tag}"] = float(np.abs(v_lim - v_direct).max())
        expected = -side * 0.5 * rho + w_direct
        out[f"double_{tag}"] = float(np.abs(w_lim - expected).max())
    return out


# ---------------------------------------------------------------------------
# equivalence of the solved system with the exact solution

def equivalence_check(case: ManufacturedCase, solution, *, n_check=5,
                      fd_step=None):
    """Compare solved densities with the exact ones and probe the PDE.

    Reports the discrete L2(S) error of psi, the weighted L2 mesh error of
    u, and the residual of div(a grad u) = f evaluated by five-point
    finite differences of the reconstructed field at interior check
    points (a code path independent of the assembly quadratures).
    """
    sysm = solution.system
    grid, mesh = sysm.grid, sysm.mesh
    psi_ex = case.psi_exact(grid.t)
    dpsi = solution.psi - psi_ex
    scale_psi = np.sqrt(np.sum(grid.weights * psi_ex ** 2))
    err_psi = float(np.sqrt(np.sum(grid.weights * dpsi ** 2))
                    / max(scale_psi, 1e-300))
    if sysm.n_dom:
        pts = mesh.points[sysm.dom_idx]
        w = mesh.weights[sysm.dom_idx] / weight(pts) ** 2
        ue = case.exact_u(pts)
        scale_u = np.sqrt(np.sum(w * ue ** 2))
        err_u = float(np.sqrt(np.sum(w * (solution.u_dom - ue) ** 2))
                      / max(scale_u, 1e-300))
    else:
        probes = default_probes()
        ue = case.exact_u(probes)
        err_u = float(np.abs(solution.evaluate(probes) - ue).max()
                      / max(np.abs(ue).max(), 1e-300))
    h_fd = (0.5 * mesh.h) if fd_step is None else fd_step
    checks = default_probes(n_check, r_min=1.5, r_max=3.0, seed=11)
    e1 = np.array([h_fd, 0.0])
    e2 = np.array([0.0, h_fd])
    stack = np.concatenate([checks, checks + e1, checks - e1,
                            checks + e2, checks - e2])
    vals = solution.evaluate(stack).reshape(5, n_check)
    lap = (vals[1] + vals[2] + vals[3] + vals[4] - 4 * vals[0]) / h_fd ** 2
    gx = (vals[1] - vals[2]) / (2 * h_fd)
    gy = (vals[3] - vals[4]) / (2 * h_fd)
    a, ga, _ = case.field.eval(checks)
    pde_res = a * lap + ga[:, 0] * gx + ga[:, 1] * gy - case.source(checks)
    return {
        "err_psi": err_psi,
        "err_u": err_u,
        "pde_residual": float(np.abs(pde_res).max()),
        "psi_mean": float(np.sum(grid.weights * solution.psi)),
        "multiplier": solution.multiplier,
    }


def convergence_study(case: ManufacturedCase, n_values, *, solver="lu"):
    """Solve the case over tied refinements; returns per-level dict rows
    with errors and observed orders (CSV columns N, h, err_u, err_psi,
    order)."""
    rows = []
    for n in n_values:
        grid = boundary_grid(case.curve, n)
        h = 4 * np.pi / n
        mesh = domain_mesh(case.curve, case.r_trunc, h, m_theta=n)
        sysm = assemble_system(case.problem(), grid, mesh)
        sol = solve(sysm, method=solver)
        chk = equivalence_check(case, sol)
        order = np.nan
        if rows:
            prev = rows[-1]
            if chk["err_u"] > 0 and prev["err_u"] > 0:
                order = float(np.log2(prev["err_u"] / chk["err_u"])
                              / np.log2(n / prev["N"]))
        rows.append({"N": n, "h": h, "err_u": chk["err_u"],
                     "err_psi": chk["err_psi"], "order": order,
                     "psi_mean": chk["psi_mean"],
                     "multiplier": chk["multiplier"]})
    return rows


# ---------------------------------------------------------------------------
# remainder split decay

def _weighted_operator_norm(rows, mesh, idx, seed=0, iterations=20):
    """Operator norm in the weighted discrete L2 norm via power iteration
    on the normal operator."""
    w = mesh.weights[idx]
    om = weight(mesh.points[idx])
    d = np.sqrt(w) / om
    b = (d[:, None] * rows[np.ix_(idx, idx)]) / d[None, :]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(b.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        v = b.T @ (b @ v)
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            return 0.0
        v /= nrm
        est = np.sqrt(nrm)
    return float(est)


def gaussian_tail_factor(field: CoefficientField, r, n_samples=20001,
                         r_max=50.0):
    """sup over |x| >= r of omega2(x) |grad a(x)|, sampled radially."""
    s = np.linspace(r, r_max, n_samples)
    pts = np.stack([s, np.zeros_like(s)], axis=1)
    if not _is_radial(field):
        # fall back to a dense angular scan
        th = np.linspace(0.0, _TWO_PI, 180, endpoint=False)
        best = 0.0
        for tt in th:
            p = np.stack([s * np.cos(tt), s * np.sin(tt)], axis=1)
            g = field.gradient(p)
            best = max(best, float(np.max(weight(p) * np.hypot(g[:, 0], g[:, 1]))))
        return best
    g = field.gradient(pts)
    return float(np.max(weight(pts) * np.hypot(g[:, 0], g[:, 1])))


def remainder_norm(field: CoefficientField, mesh, *, rows=None, seed=0):
    """Weighted-norm estimate of the discrete remainder operator on the
    full mesh (identically zero for a constant coefficient)."""
    if rows is None:
        rows = parametrix.remainder_rows(mesh, field, mesh.points)
    return _weighted_operator_norm(rows, mesh, np.arange(mesh.n_nodes),
                                   seed=seed)


def split_decay_study(field: CoefficientField, mesh, radii, *, seed=0,
                      rows=None):
    """Estimate the tail-part operator norm of the remainder for growing
    split radii and compare against the weighted coefficient-tail factor."""
    radii = list(radii)
    if any(b >= c for b, c in zip(radii, radii[1:])):
        raise VerificationError("split radii must be strictly increasing")
    idx = np.arange(mesh.n_nodes)
    rows_full = rows if rows is not None \
        else parametrix.remainder_rows(mesh, field, mesh.points)
    out = []
    for r in radii:
        core, tail, _ = parametrix.remainder_split(mesh, rows_full, r)
        norm_s = _weighted_operator_norm(tail, mesh, idx, seed=seed)
        factor = gaussian_tail_factor(field, r)
        add_err = float(np.abs(core + tail - rows_full).max())
        out.append({"r": r, "norm_tail": norm_s, "factor": factor,
                    "additivity_error": add_err})
    finite = [row for row in out if row["factor"] > 0]
    c_fit = max((row["norm_tail"] / row["factor"] for row in finite),
                default=0.0)
    for row in out:
        row["fitted_C"] = c_fit
        row["bound_ok"] = row["norm_tail"] <= c_fit * row["factor"] + 1e-15
    return out


# ---------------------------------------------------------------------------
# conditioning

def sobolev_scaling_matrix(n, p):
    """Matrix of the Fourier multiplier (1 + k^2)^p on n periodic nodes."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    mult = (1.0 + k ** 2) ** p
    f = np.fft.fft(np.eye(n), axis=0)
    return np.real(np.fft.ifft(mult[:, None] * f, axis=0))


def fourier_symbol_check(grid):
    """Distance of the raw single-layer spectrum on the circle from the
    symbol 1/(2 n): max over n = 1..N/2-1 of the paired singular values."""
    v = laplace.single_layer_matrix(grid)
    sv = np.sort(np.linalg.svd(v, compute_uv=False))[::-1]
    n_half = grid.n // 2
    target = np.repeat(1.0 / (2.0 * np.arange(1, n_half)), 2)
    return float(np.abs(sv[: target.size] - target).max())


def weighted_system_condition(system):
    """Condition number after symmetric Sobolev rescaling of the boundary
    rows and the conormal-density columns (order +-1/4)."""
    nd, nb = system.n_dom, system.n_bnd
    s = sobolev_scaling_matrix(nb, 0.25)
    m = system.matrix.copy()
    m[nd:nd + nb, :] = s @ m[nd:nd + nb, :]
    m[:, nd:nd + nb] = m[:, nd:nd + nb] @ s
    return float(np.linalg.cond(m))


def single_layer_sigma_min(v_matrix, weights):
    """Smallest singular value of the Sobolev-rescaled single-layer matrix
    restricted to discretely mean-zero densities."""
    nb = v_matrix.shape[0]
    s = sobolev_scaling_matrix(nb, 0.25)
    v_w = s @ v_matrix @ s
    q = scipy.linalg.null_space(np.asarray(weights)[None, :] @ s)
    sv = np.linalg.svd(v_w @ q, compute_uv=False)
    return float(sv.min())


def restricted_single_layer_sigma_min(system):
    """Smallest singular value of the system's rescaled single-layer block
    restricted to discretely mean-zero densities."""
    return single_layer_sigma_min(system.v_matrix, system.grid.weights)


def conditioning_study(problem_factory, n_values, *, mesh_factory=None):
    """Assemble the system across boundary resolutions and record the
    rescaled condition number and single-layer sigma_min (CSV columns
    N, cond_M, sigma_min_V)."""
    rows = []
    for n in n_values:
        problem, grid, mesh = problem_factory(n)
        sysm = assemble_system(problem, grid, mesh)
        rows.append({
            "N": n,
            "cond_M": weighted_system_condition(sysm),
            "sigma_min_V": restricted_single_layer_sigma_min(sysm),
        })
    for prev, cur in zip(rows, rows[1:]):
        cur["cond_ratio"] = cur["cond_M"] / prev["cond_M"]
    rows[0]["cond_ratio"] = np.nan
    return rows
