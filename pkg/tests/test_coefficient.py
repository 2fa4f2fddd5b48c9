import numpy as np
import pytest
from numpy.testing import assert_allclose

from bdie2d.coefficient import (check_conditions, make_coefficient, weight)
from bdie2d.errors import CoefficientError, UnknownCatalogError
from bdie2d.geometry import domain_mesh, make_curve


def test_weight_closed_form():
    pts = np.array([[0.0, 0.0], [3.0, 4.0]])
    r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    assert_allclose(weight(pts), np.sqrt(1.0 + r2) * np.log(2.0 + r2))


def test_constant_field():
    field = make_coefficient("constant", value=2.0)
    assert field.is_constant
    a, g, lap = field.eval(np.array([[1.0, 2.0], [3.0, -1.0]]))
    assert_allclose(a, 2.0)
    assert_allclose(g, 0.0)
    assert_allclose(lap, 0.0)
    assert field.support_radius == 0.0


@pytest.mark.parametrize("name,params", [
    ("gaussian_bump", {"beta": 1.0, "sigma": 1.0}),
    ("gaussian_bump", {"beta": 0.7, "sigma": 1.3, "center": (0.5, -0.2)}),
    ("compact_bump", {"beta": 0.5, "sigma": 0.8, "center": (1.5, 0.0)}),
])
def test_derivatives_match_finite_differences(name, params):
    field = make_coefficient(name, **params)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-2.0, 2.0, (40, 2))
    h = 1e-5
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    a, g, lap = field.eval(pts)
    ap1, _, _ = field.eval(pts + e1)
    am1, _, _ = field.eval(pts - e1)
    ap2, _, _ = field.eval(pts + e2)
    am2, _, _ = field.eval(pts - e2)
    assert_allclose(g[:, 0], (ap1 - am1) / (2 * h), atol=1e-7)
    assert_allclose(g[:, 1], (ap2 - am2) / (2 * h), atol=1e-7)
    assert_allclose(lap, (ap1 + am1 + ap2 + am2 - 4 * a) / h ** 2, atol=1e-4)


def test_gaussian_bump_values_and_support():
    field = make_coefficient("gaussian_bump", beta=1.0, sigma=1.0)
    a, _, _ = field.eval(np.zeros((1, 2)))
    assert_allclose(a[0], 2.0)
    assert np.isfinite(field.support_radius)
    far = np.array([[field.support_radius + 1.0, 0.0]])
    _, g, _ = field.eval(far)
    assert weight(far)[0] * np.hypot(*g[0]) <= 1e-8
    assert field.c1 <= 1.0 <= field.c2


def test_compact_bump_is_one_outside_support():
    field = make_coefficient("compact_bump", beta=0.5, sigma=0.8,
                             center=(1.5, 0.0))
    outside = np.array([[3.0, 0.0], [0.0, 2.0], [-4.0, 1.0]])
    a, g, lap = field.eval(outside)
    assert_allclose(a, 1.0)
    assert_allclose(g, 0.0)
    assert_allclose(lap, 0.0)
    assert_allclose(field.support_radius, 2.3)


def test_nonpositive_coefficient_rejected():
    field = make_coefficient("constant", value=1.0)
    with pytest.raises(CoefficientError):
        make_coefficient("constant", value=-1.0)
    # declared bounds must be consistent
    from bdie2d.coefficient import CoefficientField
    with pytest.raises(CoefficientError):
        CoefficientField(field.value, field.gradient, field.laplacian,
                         c1=2.0, c2=1.0)


def test_unknown_coefficient_raises():
    with pytest.raises(UnknownCatalogError):
        make_coefficient("sine_wave")


def test_grad_log_and_laplacian_log_identities():
    field = make_coefficient("gaussian_bump", beta=1.0, sigma=1.0)
    pts = np.array([[0.5, 0.3], [1.2, -0.7]])
    a, g, lap = field.eval(pts)
    assert_allclose(field.grad_log(pts), g / a[:, None])
    assert_allclose(field.laplacian_log(pts),
                    lap / a - np.sum(g * g, axis=1) / a ** 2)


def test_normal_log_derivative():
    field = make_coefficient("gaussian_bump", beta=1.0, sigma=1.0)
    pts = np.array([[1.0, 0.0]])
    normals = np.array([[-1.0, 0.0]])
    a, g, _ = field.eval(pts)
    assert_allclose(field.normal_log_derivative(pts, normals),
                    -g[0, 0] / a[0])


def test_condition_report_for_decaying_coefficient():
    field = make_coefficient("gaussian_bump", beta=1.0, sigma=1.0)
    mesh = domain_mesh(make_curve("circle"), 6.0, 0.2)
    report = check_conditions(field, mesh)
    assert report.passed
    d = report.as_dict()
    assert d["decay_ok"] and d["bounds_ok"]
    assert d["sup_weighted_gradient"] > 0


def test_condition_report_flags_slow_decay():
    field = make_coefficient("gaussian_bump", beta=1.0, sigma=4.0)
    mesh = domain_mesh(make_curve("circle"), 3.0, 0.2)
    report = check_conditions(field, mesh)
    assert not report.decay_ok
    assert not report.passed
