import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fueterlab.atiyah_hitchin import (
    AHProfile,
    ah_profile,
    closed_form_coefficients,
    near_bolt_series,
)
from fueterlab.numerics import (
    BallQuadrature,
    Grid3,
    corrected_midpoint_weights,
    fd_partial,
    fd_weights,
    integrate_ball,
    integrate_torus,
    rk_integrate,
)


@pytest.fixture(scope="module")
def profile():
    return ah_profile()


# ---- finite differences and quadrature ---------------------------------------------

@pytest.mark.parametrize("order", [2, 4])
def test_fd_stencils_are_antisymmetric_and_consistent(order):
    w = fd_weights(order)
    assert sum(w.values()) == pytest.approx(0.0, abs=1e-15)
    assert sum(k * c for k, c in w.items()) == pytest.approx(1.0)
    for k, c in w.items():
        assert w[-k] == pytest.approx(-c)


@pytest.mark.parametrize("order,expected", [(2, 4.0), (4, 16.0)])
def test_fd_partial_convergence_rate(order, expected):
    errs = []
    for n in (16, 32):
        g = Grid3(n, 2 * np.pi)
        X = g.coords()
        f = np.sin(X[..., 1]) * np.cos(2 * X[..., 2])
        df = fd_partial(f, 1, order=order, spacing=g.h)
        errs.append(np.abs(df - np.cos(X[..., 1]) * np.cos(2 * X[..., 2])).max())
    assert errs[0] / errs[1] == pytest.approx(expected, rel=0.1)


def test_torus_integration_of_trigonometric_fields():
    g = Grid3(12, 3.0)
    X = g.coords()
    assert integrate_torus(np.ones(g.shape), g) == pytest.approx(27.0)
    wave = np.sin(2 * np.pi * X[..., 0] / 3.0) ** 2
    assert integrate_torus(wave, g) == pytest.approx(13.5)


@given(st.integers(0, 5), st.floats(-2, 2), st.floats(0.1, 3))
def test_corrected_midpoint_is_exact_on_low_degree_polynomials(deg, a, width):
    b = a + width
    n = 40
    w = corrected_midpoint_weights(n, a, b)
    x = a + (np.arange(n) + 0.5) * (b - a) / n
    exact = (b ** (deg + 1) - a ** (deg + 1)) / (deg + 1)
    assert np.dot(w, x**deg) == pytest.approx(exact, rel=1e-10, abs=1e-10)


def test_ball_quadrature_volume_and_second_moment():
    q = BallQuadrature((0.1, -0.2, 0.3), (0.5, 1.0))
    vol = integrate_ball(lambda x: np.ones(len(x)), q)
    assert vol == pytest.approx(4 * np.pi / 3 * np.array([0.125, 1.0]))
    c = np.array([0.1, -0.2, 0.3])
    mom = integrate_ball(lambda x: np.sum((x - c) ** 2, axis=-1), q)
    assert mom[-1] == pytest.approx(4 * np.pi / 5)


def test_rk_integrate_matches_exponential():
    traj = rk_integrate(lambda t, y: -2.0 * y, [1.0], (0.0, 3.0), tol=1e-12)
    assert traj.y[-1, 0] == pytest.approx(np.exp(-6.0), rel=1e-9)
    assert traj.sol(1.5)[0] == pytest.approx(np.exp(-3.0), rel=1e-8)


# ---- Atiyah-Hitchin profile ---------------------------------------------------------

def test_profile_invariants(profile):
    assert profile.first_integral_drift() <= 1e-8
    assert profile.ode_residual() <= 1e-8
    assert profile.vanishing_coefficient() == "c"
    assert np.all(np.diff(profile.r) > 0)
    assert profile.alf_deviation() <= 0.01


@pytest.mark.parametrize("eta", [4.0, 5.0, 10.0, 30.0])
def test_profile_matches_elliptic_closed_form(profile, eta):
    a, b, c = closed_form_coefficients(eta)
    y = profile.trajectory.sol(eta)
    assert y[:3] == pytest.approx([a, b, c], rel=1e-7)


def test_near_bolt_series_starts_the_integration(profile):
    a, b, c = near_bolt_series(1e-3)
    assert c == pytest.approx(profile.c[0], rel=1e-6)
    assert a == pytest.approx(np.pi, rel=1e-3)
    assert b == pytest.approx(-np.pi, rel=1e-3)


def test_bolt_area_is_two_pi_cubed(profile):
    assert profile.bolt_area() == pytest.approx(2 * np.pi**3)


def test_profile_table_round_trip(profile, tmp_path):
    path = tmp_path / "ah.txt"
    profile.save(path)
    table = AHProfile.read_table(path)
    assert np.allclose(table["eta"], profile.eta)
    assert np.allclose(table["r"], profile.r)
