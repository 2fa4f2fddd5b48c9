"""Assembly and solution of the coupled boundary-domain system.

Unknowns are the solution values u at the domain mesh nodes that lie
inside the coefficient support (outside it the remainder kernel vanishes
and u is recovered by evaluation), the conormal density psi at the
boundary nodes, and one Lagrange multiplier tied to the zero-mean flux
constraint on psi.  The block layout is

    [ I + R_dd   -V_db    0 ] [ u   ]   [ F0 at domain nodes        ]
    [   R_bd     -V_bb    1 ] [ psi ] = [ trace F0 - phi0           ]
    [    0        w^T     0 ] [ lam ]   [ 0                         ]

with F0 = (volume potential of f) - (double layer of phi0).  The
multiplier vanishes in exact arithmetic whenever the data satisfy the
compatibility condition; its computed size is reported as a diagnostic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import laplace, parametrix
from .coefficient import CoefficientField
from .errors import AssemblyError, CompatibilityError, SolverSingularError
from .geometry import BoundaryGrid, DomainMesh


@dataclass
class DirichletProblem:
    """Exterior Dirichlet problem data.

    ``source(points)`` is the volume right-hand side f, ``dirichlet(t)``
    the boundary data as a function of the curve parameter.
    """

    curve: object
    field: CoefficientField
    source: object
    dirichlet: object
    name: str = "problem"

    def check_compatibility(self, mesh: DomainMesh, tol=1e-6):
        """Discrete zero-mean requirement on f; returns the integral."""
        f = self.source(mesh.points)
        total = float(np.sum(mesh.weights * f))
        scale = float(np.sum(mesh.weights * np.abs(f)))
        if abs(total) > tol * max(scale, 1.0):
            raise CompatibilityError(
                f"volume source has nonzero mean {total:.3e} "
                f"(tolerance {tol:.1e} relative to {max(scale, 1.0):.3e})")
        return total


@dataclass
class BdieSystem:
    """Assembled discrete system plus everything needed to evaluate u."""

    problem: DirichletProblem
    grid: BoundaryGrid
    mesh: DomainMesh
    dom_idx: np.ndarray            # mesh node indices carrying u unknowns
    matrix: np.ndarray
    rhs: np.ndarray
    f0_dom: np.ndarray
    f0_trace: np.ndarray
    v_matrix: np.ndarray           # boundary single layer (direct value)
    quad_opts: dict = dc_field(default_factory=dict)

    @property
    def n_dom(self):
        return self.dom_idx.shape[0]

    @property
    def n_bnd(self):
        return self.grid.n

    def preconditioner_matrix(self):
        """System with the remainder blocks dropped (boundary-only coupling)."""
        m0 = self.matrix.copy()
        nd = self.n_dom
        m0[:nd, :nd] = np.eye(nd)
        m0[nd:nd + self.n_bnd, :nd] = 0.0
        return m0


@dataclass
class BdieSolution:
    """Solved densities and reconstruction of u anywhere in the domain."""

    system: BdieSystem
    u_dom: np.ndarray
    psi: np.ndarray
    multiplier: float
    solver: str
    iterations: int
    residual: float

    def evaluate(self, targets):
        """u(y) = F0(y) - (R u)(y) + (V psi)(y) at off-boundary targets."""
        sys_ = self.system
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        f0 = assemble_f0(sys_.problem, sys_.grid, sys_.mesh, targets,
                         **sys_.quad_opts)
        r_rows = parametrix.remainder_rows(sys_.mesh, sys_.problem.field,
                                           targets, **sys_.quad_opts)
        v_rows = parametrix.single_layer_rows_offboundary(
            sys_.grid, sys_.problem.field, targets)
        return f0 - r_rows[:, sys_.dom_idx] @ self.u_dom + v_rows @ self.psi

    def boundary_trace(self):
        """gamma+ u at the boundary nodes (the imposed Dirichlet data)."""
        return self.system.problem.dirichlet(self.system.grid.t)

    def u_mesh(self):
        """u at every mesh node: solved values inside the coefficient
        support, reconstruction elsewhere."""
        out = np.empty(self.system.mesh.n_nodes)
        out[self.system.dom_idx] = self.u_dom
        rest = np.setdiff1d(np.arange(self.system.mesh.n_nodes),
                            self.system.dom_idx)
        if rest.size:
            out[rest] = self.evaluate(self.system.mesh.points[rest])
        return out


def assemble_f0(problem: DirichletProblem, grid: BoundaryGrid,
                mesh: DomainMesh, targets, **quad_opts):
    """F0(y) = volume potential of f minus double layer of phi0."""
    pf = parametrix.volume_potential(mesh, problem.field, targets,
                                     rho_fn=problem.source, **quad_opts)
    w = parametrix.double_layer_offboundary(
        grid, problem.field, problem.dirichlet(grid.t), targets,
        density_fn=problem.dirichlet)
    return pf - w


def assemble_f0_trace(problem: DirichletProblem, grid: BoundaryGrid,
                      mesh: DomainMesh, **quad_opts):
    """gamma+ F0 at the boundary nodes, via the double-layer jump relation."""
    pf = parametrix.volume_potential(mesh, problem.field, grid.points,
                                     rho_fn=problem.source, **quad_opts)
    phi = problem.dirichlet(grid.t)
    w_direct = parametrix.double_layer_boundary(grid, problem.field) @ phi
    return pf - (-0.5 * phi + w_direct)


def _domain_indices(mesh: DomainMesh, field: CoefficientField,
                    force_domain_rows):
    if field.is_constant:
        if force_domain_rows:
            return np.arange(mesh.n_nodes)
        return np.zeros(0, dtype=int)
    if not np.isfinite(field.support_radius):
        return np.arange(mesh.n_nodes)
    r = np.hypot(mesh.points[:, 0], mesh.points[:, 1])
    return np.nonzero(r <= field.support_radius)[0]


def assemble_system(problem: DirichletProblem, grid: BoundaryGrid,
                    mesh: DomainMesh, *, force_domain_rows=False,
                    compatibility_tol=1e-6, **quad_opts) -> BdieSystem:
    """Build the dense block system for the given discretization."""
    if grid.curve is not mesh.curve:
        raise AssemblyError("boundary grid and domain mesh use different curves")
    problem.check_compatibility(mesh, tol=compatibility_tol)
    field = problem.field
    dom_idx = _domain_indices(mesh, field, force_domain_rows)
    nd, nb = dom_idx.shape[0], grid.n
    n_tot = nd + nb + 1
    mat = np.zeros((n_tot, n_tot))
    rhs = np.zeros(n_tot)

    dom_pts = mesh.points[dom_idx]
    if nd:
        r_dd = parametrix.remainder_rows(mesh, field, dom_pts, **quad_opts)
        mat[:nd, :nd] = np.eye(nd) + r_dd[:, dom_idx]
        mat[:nd, nd:nd + nb] = -parametrix.single_layer_rows_offboundary(
            grid, field, dom_pts)
        r_bd = parametrix.remainder_rows(mesh, field, grid.points, **quad_opts)
        mat[nd:nd + nb, :nd] = r_bd[:, dom_idx]
    v_mat = parametrix.single_layer_boundary(grid, field)
    mat[nd:nd + nb, nd:nd + nb] = -v_mat
    mat[nd:nd + nb, nd + nb] = 1.0
    mat[nd + nb, nd:nd + nb] = grid.weights

    f0_trace = assemble_f0_trace(problem, grid, mesh, **quad_opts)
    phi = problem.dirichlet(grid.t)
    rhs[nd:nd + nb] = f0_trace - phi
    f0_dom = np.zeros(0)
    if nd:
        f0_dom = assemble_f0(problem, grid, mesh, dom_pts, **quad_opts)
        rhs[:nd] = f0_dom
    return BdieSystem(problem=problem, grid=grid, mesh=mesh, dom_idx=dom_idx,
                      matrix=mat, rhs=rhs, f0_dom=f0_dom, f0_trace=f0_trace,
                      v_matrix=v_mat, quad_opts=dict(quad_opts))


def solve(system: BdieSystem, *, method="lu", gmres_tol=1e-12,
          gmres_maxiter=400) -> BdieSolution:
    """Solve the assembled system with a direct or preconditioned
    iterative method."""
    nd, nb = system.n_dom, system.n_bnd
    mat, rhs = system.matrix, system.rhs
    iterations = 0
    if method == "lu":
        try:
            with warnings.catch_warnings():
                # singularity is detected below via the factor diagonal
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(mat)
        except scipy.linalg.LinAlgError as exc:
            raise SolverSingularError(str(exc)) from None
        diag = np.abs(np.diag(lu))
        if diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise SolverSingularError(
                "system matrix is singular to working precision")
        x = scipy.linalg.lu_solve((lu, piv), rhs)
    elif method == "gmres":
        m0 = system.preconditioner_matrix()
        try:
            lu0 = scipy.linalg.lu_factor(m0)
        except scipy.linalg.LinAlgError as exc:
            raise SolverSingularError(str(exc)) from None
        prec = scipy.sparse.linalg.LinearOperator(
            mat.shape, matvec=lambda v: scipy.linalg.lu_solve(lu0, v))
        counter = {"n": 0}

        def cb(_):
            counter["n"] += 1

        x, info = scipy.sparse.linalg.gmres(
            mat, rhs, M=prec, rtol=gmres_tol, atol=0.0, maxiter=gmres_maxiter,
            restart=200, callback=cb, callback_type="pr_norm")
        if info != 0:
            raise SolverSingularError(
                f"gmres failed to converge (info={info})")
        iterations = counter["n"]
    else:
        raise AssemblyError(f"unknown solver method {method!r}")
    residual = float(np.linalg.norm(mat @ x - rhs)
                     / max(np.linalg.norm(rhs), 1e-300))
    return BdieSolution(system=system, u_dom=x[:nd], psi=x[nd:nd + nb],
                        multiplier=float(x[nd + nb]), solver=method,
                        iterations=iterations, residual=residual)
