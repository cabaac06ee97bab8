import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yamabe_lab.geometry import (
    DomainError,
    Grading,
    Model,
    PositivityError,
    RadialField,
    RadialGrid,
    apply_tridiagonal,
    conformal_calculus,
    conformal_scalar_curvature,
    distance_laplacian_defect,
    make_geometry,
    radial_derivative,
    radial_drift,
    radial_laplacian,
    tridiagonal_operator,
)


def test_geometry_validation():
    with pytest.raises(DomainError):
        make_geometry(2, 0, "sphere_tube")
    with pytest.raises(DomainError):
        make_geometry(4, 4, "sphere_tube")
    g = make_geometry(6, 2, "flat_tube")
    assert g.eta == 1 and g.borderline and not g.complete_side
    assert make_geometry(3, 1, Model.SPHERE_TUBE).complete_side


def test_domains_and_poles():
    s30 = make_geometry(3, 0, "sphere_tube")
    assert s30.upper == pytest.approx(math.pi) and s30.pole_codim == 3
    s41 = make_geometry(4, 1, "sphere_tube")
    assert s41.upper == pytest.approx(math.pi / 2) and s41.pole_codim == 2
    assert make_geometry(4, 1, "flat_tube").pole is None


def test_radial_drift_values():
    assert radial_drift(make_geometry(3, 0, "sphere_tube"), math.pi / 4) == pytest.approx(2.0)
    assert radial_drift(make_geometry(5, 1, "flat_tube"), 0.5) == pytest.approx(6.0)
    with pytest.raises(DomainError):
        radial_drift(make_geometry(4, 1, "sphere_tube"), 2.0)


def test_distance_laplacian_defect():
    g = make_geometry(5, 1, "sphere_tube")
    r = np.array([1e-3, 1e-2, 0.1])
    d = distance_laplacian_defect(g, r)
    # series: -(m-n-1) r^2/3 - n r^2
    assert np.allclose(d / r**2, -(3 / 3 + 1), rtol=1e-2)
    assert distance_laplacian_defect(make_geometry(5, 1, "flat_tube"), 0.3) == 0.0
    with pytest.raises(DomainError):
        distance_laplacian_defect(g, 1.2)


def test_grid_invariants():
    with pytest.raises(DomainError):
        RadialGrid.uniform(0.0, 1.0, 20)
    with pytest.raises(DomainError):
        RadialGrid.uniform(0.1, 1.0, 10)
    g = RadialGrid.geometric(1e-6, 1.0, 1.1)
    assert g.grading is Grading.GEOMETRIC
    assert np.allclose(g.nodes[1:] / g.nodes[:-1], g.ratio)
    capped = RadialGrid.geometric(1e-4, math.pi, 1.05, h_max=0.01, pole=True)
    assert np.max(np.diff(capped.nodes)) <= 0.01 + 1e-12
    assert capped.r_max == pytest.approx(math.pi)


@pytest.mark.parametrize(
    "grid",
    [
        RadialGrid.uniform(0.1, 1.0, 21),
        RadialGrid.geometric(1e-3, 1.0, 1.2),
        RadialGrid.geometric(1e-3, 1.0, 1.2, h_max=0.05),
    ],
)
def test_refinement_keeps_coarse_nodes(grid):
    fine = grid.refined()
    assert fine.size == 2 * grid.size - 1
    assert np.array_equal(fine.nodes[::2], grid.nodes)


def test_trapezoid_weights_integrate_linear():
    g = RadialGrid.geometric(0.01, 2.0, 1.1)
    assert np.sum(g.trapezoid_weights() * g.nodes) == pytest.approx((4 - 1e-4) / 2)


def test_field_rejects_bad_values():
    g = RadialGrid.uniform(0.1, 1, 20)
    with pytest.raises(DomainError):
        RadialField(g, np.ones(19))
    with pytest.raises(DomainError):
        RadialField(g, np.full(20, np.nan))


def test_laplacian_exact_on_quadratics():
    g = make_geometry(5, 1, "flat_tube")
    grid = RadialGrid.geometric(0.01, 1.0, 1.07)
    lap = radial_laplacian(g, RadialField.sample(grid, lambda r: r**2))
    # f'' + 3/r f' = 2 + 6
    assert np.allclose(lap.values, 8.0, atol=1e-11)


def test_sphere_laplacian_second_order_with_axis_and_pole():
    g = make_geometry(3, 0, "sphere_tube")
    errs = []
    for num in (50, 100, 200):
        grid = RadialGrid.staggered(math.pi, num, pole=True)
        f = RadialField.sample(grid, np.cos)
        lap = radial_laplacian(g, f, inner="axis")
        errs.append(np.max(np.abs(lap.values + 3 * np.cos(grid.nodes))))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_conformal_curvature_of_round_factor():
    # sphere metric as a conformal factor over flat R^3 around the axis: U = (2/(1+r^2))^(1/2)
    g = make_geometry(3, 0, "flat_tube", r_max=2.0)
    grid = RadialGrid.staggered(2.0, 800)
    U = RadialField.sample(grid, lambda r: (2 / (1 + r**2)) ** 0.5)
    R = conformal_scalar_curvature(g, U, inner="axis")
    assert np.max(np.abs(R.values[2:-2] - 6.0)) < 1e-3


def test_conformal_curvature_rejects_nonpositive():
    g = make_geometry(3, 0, "flat_tube")
    grid = RadialGrid.uniform(0.1, 1, 20)
    with pytest.raises(PositivityError):
        conformal_scalar_curvature(g, RadialField(grid, np.zeros(20)))


def test_conformal_calculus_constant_factor():
    g = make_geometry(4, 0, "flat_tube")
    grid = RadialGrid.uniform(0.1, 1.0, 200)
    u = RadialField(grid, np.full(grid.size, 4.0))
    f = RadialField.sample(grid, lambda r: r**2)
    gradsq, lap = conformal_calculus(g, u, f)
    assert np.allclose(gradsq.values, (2 * grid.nodes) ** 2 / 4)
    assert np.allclose(lap.values, (2 + 3 * 2) / 4)


def test_radial_derivative_exact_on_quadratics():
    grid = RadialGrid.geometric(0.1, 2.0, 1.15)
    d = radial_derivative(RadialField.sample(grid, lambda r: 3 * r**2 - r))
    assert np.allclose(d.values, 6 * grid.nodes - 1, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.01, 1.3), st.floats(-3, 3), st.floats(-3, 3))
def test_operator_annihilates_constants_and_is_monotone(ratio, b0, b1):
    nodes = RadialGrid.geometric(1e-3, 1.0, ratio).nodes
    drift = b0 / nodes + b1
    sub, diag, sup = tridiagonal_operator(nodes, drift, inner="mirror", outer="mirror")
    assert np.allclose(apply_tridiagonal((sub, diag, sup), np.ones(nodes.size)), 0, atol=1e-6 * np.abs(diag).max())
    assert np.all(sub >= 0) and np.all(sup >= 0) and np.all(diag <= 0)
