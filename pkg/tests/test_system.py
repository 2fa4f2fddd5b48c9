import numpy as np
import pytest
from numpy.testing import assert_allclose

from bdie2d.coefficient import make_coefficient
from bdie2d.errors import (AssemblyError, CompatibilityError,
                           SolverSingularError)
from bdie2d.geometry import boundary_grid, domain_mesh, make_curve
from bdie2d.system import DirichletProblem, assemble_system, solve
from bdie2d.verification import manufactured_case


@pytest.fixture(scope="module")
def laplace_case():
    return manufactured_case("laplace-dipole")


@pytest.fixture(scope="module")
def laplace_solution(laplace_case):
    case = laplace_case
    grid = boundary_grid(case.curve, 64)
    mesh = domain_mesh(case.curve, case.r_trunc, 4 * np.pi / 64, m_theta=64)
    sysm = assemble_system(case.problem(), grid, mesh)
    return sysm, solve(sysm)


def test_constant_coefficient_has_no_domain_unknowns(laplace_solution):
    sysm, sol = laplace_solution
    assert sysm.n_dom == 0
    assert abs(sol.multiplier) <= 1e-12


def test_constant_coefficient_recovers_conormal_density(laplace_solution):
    sysm, sol = laplace_solution
    assert_allclose(sol.psi, np.cos(sysm.grid.t), atol=1e-12)


def test_solution_evaluation_matches_exact_field(laplace_solution,
                                                 laplace_case):
    _, sol = laplace_solution
    probes = np.array([[2.0, 0.0], [0.7, 1.6], [-3.0, 0.5]])
    assert_allclose(sol.evaluate(probes), laplace_case.exact_u(probes),
                    atol=1e-12)


def test_forced_domain_rows_keep_remainder_blocks_zero(laplace_case):
    case = laplace_case
    grid = boundary_grid(case.curve, 32)
    mesh = domain_mesh(case.curve, case.r_trunc, 4 * np.pi / 16, m_theta=16)
    sysm = assemble_system(case.problem(), grid, mesh,
                           force_domain_rows=True)
    nd = sysm.n_dom
    assert nd == mesh.n_nodes
    assert np.abs(sysm.matrix[:nd, :nd] - np.eye(nd)).max() == 0.0
    assert np.abs(sysm.matrix[nd:nd + grid.n, :nd]).max() == 0.0
    sol = solve(sysm)
    assert_allclose(sol.psi, np.cos(grid.t), atol=1e-10)
    assert_allclose(sol.u_dom, case.exact_u(mesh.points), atol=1e-10)


def test_nonzero_mean_source_rejected(laplace_case):
    case = laplace_case
    problem = DirichletProblem(
        case.curve, case.field,
        lambda p: np.exp(-(p[:, 0] - 1.5) ** 2 - p[:, 1] ** 2),
        case.dirichlet)
    grid = boundary_grid(case.curve, 32)
    mesh = domain_mesh(case.curve, 3.0, 4 * np.pi / 32, m_theta=32)
    with pytest.raises(CompatibilityError):
        assemble_system(problem, grid, mesh)


def test_curve_mismatch_rejected(laplace_case):
    grid = boundary_grid(make_curve("circle"), 32)
    mesh = domain_mesh(make_curve("circle"), 3.0, 4 * np.pi / 32)
    with pytest.raises(AssemblyError):
        assemble_system(laplace_case.problem(), grid, mesh)


def test_unknown_solver_method_rejected(laplace_solution):
    sysm, _ = laplace_solution
    with pytest.raises(AssemblyError):
        solve(sysm, method="cholesky")


def test_singular_matrix_detected(laplace_solution):
    import copy

    sysm, _ = laplace_solution
    broken = copy.copy(sysm)
    broken.matrix = sysm.matrix.copy()
    broken.matrix[3, :] = 0.0
    with pytest.raises(SolverSingularError):
        solve(broken)


@pytest.fixture(scope="module")
def bump_solution():
    case = manufactured_case("bump-dipole")
    grid = boundary_grid(case.curve, 32)
    mesh = domain_mesh(case.curve, case.r_trunc, 4 * np.pi / 32, m_theta=32)
    sysm = assemble_system(case.problem(), grid, mesh)
    return case, sysm, solve(sysm)


def test_variable_coefficient_solve_accuracy(bump_solution):
    case, sysm, sol = bump_solution
    psi_ex = case.psi_exact(sysm.grid.t)
    rel = np.sqrt(np.sum(sysm.grid.weights * (sol.psi - psi_ex) ** 2)
                  / np.sum(sysm.grid.weights * psi_ex ** 2))
    assert rel <= 1e-3
    assert abs(sol.multiplier) <= 1e-8


def test_solved_density_has_zero_mean(bump_solution):
    _, sysm, sol = bump_solution
    mean = np.sum(sysm.grid.weights * sol.psi)
    norm = np.sqrt(np.sum(sysm.grid.weights * sol.psi ** 2))
    assert abs(mean) <= 1e-10 * norm


def test_u_mesh_reconstruction(bump_solution):
    case, sysm, sol = bump_solution
    u_all = sol.u_mesh()
    exact = case.exact_u(sysm.mesh.points)
    assert np.abs(u_all - exact).max() <= 1e-2
    r = np.hypot(sysm.mesh.points[:, 0], sysm.mesh.points[:, 1])
    far = r > 2.0
    assert np.abs(u_all[far] - exact[far]).max() <= 1e-3


def test_gmres_matches_direct_solver(bump_solution):
    _, sysm, sol_lu = bump_solution
    sol_gm = solve(sysm, method="gmres")
    assert sol_gm.iterations > 0
    assert_allclose(sol_gm.psi, sol_lu.psi, atol=1e-9)
    assert_allclose(sol_gm.u_dom, sol_lu.u_dom, atol=1e-9)
