import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fueterlab.blowup import (
    BallGrid,
    BallMap,
    axisymmetric_map,
    density_estimate,
    homogeneity_defect,
    monotonicity_profile,
    rescale,
    veronese,
)
from fueterlab.spheregrid import SphereGrid
from fueterlab.suites import green_map, linear_map
from fueterlab.targets import DomainError, get_target

FLAT = get_target("flat")


def radial_projection(x):
    u = x / np.linalg.norm(x, axis=-1, keepdims=True)
    return np.concatenate([np.zeros(x.shape[:-1] + (1,)), u], -1)


@pytest.fixture(scope="module")
def ball():
    return BallGrid.geometric(SphereGrid(16, order=8), 1.0, 5)


def test_geometric_edges_and_volume(ball):
    assert ball.edges[0] == 0.0
    assert np.allclose(ball.edges[2:] / ball.edges[1:-1], 2.0)
    assert ball.integrate(np.ones(ball.shape)) == pytest.approx(4 * np.pi / 3, rel=1e-6)
    assert ball.integrate(np.ones(ball.shape), 0.5) == pytest.approx(np.pi / 6, rel=1e-6)


def test_linear_map_profile_is_quadratic_with_equality(ball):
    prof = monotonicity_profile(BallMap.from_function(ball, linear_map, FLAT))
    # |df|^2 = 1 + 1 + 4 everywhere, so N(r) = 8 pi r^2
    assert np.abs(prof.values / (8 * np.pi * prof.radii**2) - 1).max() < 1e-5
    assert prof.max_relative_defect < 1e-6
    assert prof.is_nondecreasing()
    assert prof.to_csv().splitlines()[0] == "r,N,D,defect"


def test_green_map_off_centre_satisfies_the_equality():
    g = BallGrid(SphereGrid(16), [0.0, 0.1, 0.2, 0.3, 0.4], order=8, center=(1.0, 0.0, 0.0))
    prof = monotonicity_profile(BallMap.from_function(g, green_map, FLAT))
    assert prof.max_relative_defect < 1e-4
    assert len(prof.pairs) == 6


def test_profile_needs_a_full_ball():
    g = BallGrid(SphereGrid(8), [0.5, 1.0], order=4)
    with pytest.raises(DomainError):
        monotonicity_profile(BallMap.from_function(g, linear_map, FLAT))


def test_density_of_a_smooth_map_vanishes_at_second_order(ball):
    est = density_estimate(BallMap.from_function(ball, linear_map, FLAT))
    assert abs(est.theta) < 1e-12
    assert est.order == pytest.approx(2.0, abs=1e-6)
    assert est.flags == []


def test_homogeneous_map_has_constant_density(ball):
    f = BallMap.from_function(ball, radial_projection, FLAT)
    assert homogeneity_defect(f) < 1e-12
    est = density_estimate(f)
    # |d(x/|x|)|^2 = 2 / rho^2, so N(r) = 8 pi for every r
    assert est.theta == pytest.approx(8 * np.pi, rel=1e-5)
    assert est.order is None


@settings(max_examples=3, deadline=None)
@given(st.floats(0.2, 0.8), st.lists(st.floats(-0.1, 0.1), min_size=3, max_size=3))
def test_rescale_of_a_linear_map_is_affine(r, x):
    g = BallGrid.geometric(SphereGrid(16, order=8), 1.0, 3)
    out = rescale(BallMap.from_function(g, linear_map, FLAT), x, r)
    expect = linear_map(np.asarray(x) + r * out.grid.points)
    assert np.abs(out.values - expect).max() < 1e-4


def test_rescale_rejects_bad_arguments(ball):
    f = BallMap.from_function(ball, linear_map, FLAT)
    with pytest.raises(ValueError):
        rescale(f, [0, 0, 0], 0.0)
    with pytest.raises(DomainError):
        rescale(f, [2.0, 0, 0], 0.5)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0.1, 10))
def test_veronese_is_even_with_constant_norm(v, scale):
    v = np.asarray(v)
    if np.linalg.norm(v) < 1e-3:
        return
    x = v / np.linalg.norm(v)
    assert np.allclose(veronese(x, scale), veronese(-x, scale))
    assert np.linalg.norm(veronese(x, scale)) == pytest.approx(scale / np.sqrt(2))


def test_axisymmetric_bolt_map():
    _, rep = axisymmetric_map(SphereGrid(32, order=8))
    assert rep.containment
    assert rep.antipodal_max == 0.0
    assert rep.tension_max < 1e-4
    assert rep.energy_over_bolt_area == pytest.approx(2.0, rel=1e-8)
    assert rep.theta == pytest.approx(rep.theta_closed_form, rel=1e-8)
    assert rep.theta > 0
