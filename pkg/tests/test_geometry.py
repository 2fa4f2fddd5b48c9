import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import ellipe

from bdie2d.errors import (DiscretizationError, GeometryError,
                           UnknownCatalogError)
from bdie2d.geometry import boundary_grid, domain_mesh, make_curve


def test_circle_grid_length():
    grid = boundary_grid(make_curve("circle"), 64)
    assert_allclose(grid.length, 2 * np.pi, rtol=1e-14)


def test_circle_radius_scaling():
    grid = boundary_grid(make_curve("circle", radius=2.5), 64)
    assert_allclose(grid.length, 5 * np.pi, rtol=1e-14)
    assert_allclose(np.hypot(grid.points[:, 0], grid.points[:, 1]), 2.5)


def test_ellipse_perimeter():
    a, b = 2.0, 1.0
    grid = boundary_grid(make_curve("ellipse", a=a, b=b), 256)
    exact = 4 * a * ellipe(1 - (b / a) ** 2)
    assert_allclose(grid.length, exact, rtol=1e-12)


@pytest.mark.parametrize("name,params", [
    ("circle", {}),
    ("ellipse", {"a": 2.0, "b": 1.0}),
    ("star", {"alpha": 0.2, "k": 5}),
])
def test_normals_point_into_bounded_complement(name, params):
    curve = make_curve(name, **params)
    grid = boundary_grid(curve, 64)
    inside = grid.points + 0.05 * grid.normals
    assert np.all(curve.is_inside_bounded(inside))
    outside = grid.points - 0.05 * grid.normals
    assert not np.any(curve.is_inside_bounded(outside))


def test_boundary_grid_rejects_bad_n():
    curve = make_curve("circle")
    with pytest.raises(DiscretizationError):
        boundary_grid(curve, 33)
    with pytest.raises(DiscretizationError):
        boundary_grid(curve, 4)


def test_unknown_curve_raises():
    with pytest.raises(UnknownCatalogError):
        make_curve("triangle")
    with pytest.raises(UnknownCatalogError):
        make_curve("circle", wiggle=3)


def test_degenerate_curves_raise():
    with pytest.raises(GeometryError):
        make_curve("circle", radius=-1.0)
    with pytest.raises(GeometryError):
        make_curve("ellipse", a=0.0, b=1.0)
    with pytest.raises(GeometryError):
        make_curve("star", alpha=1.2)


def test_mesh_weights_integrate_annulus_area():
    curve = make_curve("circle")
    mesh = domain_mesh(curve, 3.0, 0.1)
    assert_allclose(mesh.weights.sum(), np.pi * (9.0 - 1.0), rtol=1e-12)


def test_mesh_weights_ellipse():
    curve = make_curve("ellipse", a=2.0, b=1.0)
    mesh = domain_mesh(curve, 4.0, 0.1)
    assert_allclose(mesh.weights.sum(), np.pi * 16.0 - np.pi * 2.0,
                    rtol=1e-10)


def test_mesh_quadrature_converges_on_smooth_integrand():
    curve = make_curve("circle")

    def f(p):
        r2 = p[:, 0] ** 2 + p[:, 1] ** 2
        return np.exp(-r2) * (1.0 + 0.3 * p[:, 0])

    # closed form: 2*pi * int_1^R exp(-r^2) r dr (odd part integrates out)
    exact = np.pi * (np.exp(-1.0) - np.exp(-16.0))
    vals = []
    for h in (0.4, 0.2, 0.1):
        mesh = domain_mesh(curve, 4.0, h)
        vals.append(abs(np.sum(mesh.weights * f(mesh.points)) - exact))
    assert vals[-1] <= 1e-9
    assert vals[0] > vals[-1]


def test_mesh_interpolation_reproduces_nodal_field():
    curve = make_curve("circle")
    mesh = domain_mesh(curve, 3.0, 0.2, m_theta=64)

    def f(p):
        return np.cos(p[:, 0]) * np.exp(-0.2 * p[:, 1])

    nodes = f(mesh.points)
    rng = np.random.default_rng(3)
    rho = rng.uniform(0.05, 0.95, 200)
    theta = rng.uniform(0.0, 2 * np.pi, 200)
    idx, wts = mesh.interpolation(rho, theta)
    approx = np.sum(nodes[idx] * wts, axis=1)
    r = 1.0 + 2.0 * rho
    pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    assert np.abs(approx - f(pts)).max() <= 5e-4


def test_truncation_radius_must_exceed_circumradius():
    with pytest.raises(GeometryError):
        domain_mesh(make_curve("circle"), 0.5, 0.1)
    with pytest.raises(GeometryError):
        domain_mesh(make_curve("ellipse", a=2.0, b=1.0), 1.5, 0.1)


def test_explicit_panel_count_guards_inner_node_distance():
    with pytest.raises(DiscretizationError):
        domain_mesh(make_curve("circle"), 3.0, 0.5, n_panels=200)
