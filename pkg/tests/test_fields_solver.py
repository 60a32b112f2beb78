import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from fueterlab.fields3d import (
    ContainmentError,
    Section3,
    concentration_scan,
    energy_bound_check,
    energy_identity_report,
    flat_linear_fueter,
    fueter_residual,
    lambda_sign_self_test,
    random_smooth_section,
)
from fueterlab.numerics import Grid3
from fueterlab.solver import (
    FueterSolver,
    discrete_gradient,
    kernel_projection,
    linear_oracle,
    residual_functional,
    solve_fueter,
)
from fueterlab.targets import get_target

FLAT = get_target("flat")
TN = get_target("taubnut")
slow = settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def test_linear_example_is_fueter_with_energy_equal_to_minus_lambda():
    s = flat_linear_fueter(Grid3(16), 2.0)
    assert np.abs(fueter_residual(s)).max() == 0.0
    rep = energy_identity_report(s)
    assert rep.fueter_norm2 == 0.0
    assert 0.5 * rep.grad_norm2 == pytest.approx(-rep.lambda_integral, rel=1e-12)


@slow
@given(st.integers(0, 2**31 - 1))
def test_energy_identity_on_random_taubnut_sections(seed):
    rep = energy_identity_report(random_smooth_section(Grid3(16), TN, seed))
    assert rep.relative_defect < 1e-3
    assert rep.algebraic_defect < 1e-10


@slow
@given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_flat_operator_is_linear(seed, a, b):
    g = Grid3(8)
    u = random_smooth_section(g, FLAT, seed)
    v = random_smooth_section(g, FLAT, seed + 1)
    w = u.with_values(a * u.values + b * v.values)
    assert np.allclose(fueter_residual(w), a * fueter_residual(u) + b * fueter_residual(v), atol=1e-12)


def test_lambda_sign_self_test_agrees_with_convention():
    assert lambda_sign_self_test(random_smooth_section(Grid3(16), TN, 5)) == 1


def test_energy_bound_rejects_images_outside_the_radius_ball():
    s = flat_linear_fueter(Grid3(8), 1.0)
    r = float(FLAT.radius(s.values).max())
    assert energy_bound_check(s, 1.01 * r).ratio > 0
    with pytest.raises(ContainmentError):
        energy_bound_check(s, 0.5 * r)


def test_concentration_scan_flags_nothing_on_a_constant_section():
    s = Section3.constant(Grid3(8), [0.1, 0.2, 0.3, 0.4], FLAT)
    rep = concentration_scan(s, [0.1, 0.2])
    assert rep.flagged.size == 0
    assert np.all(rep.values == 0)


# ---- spectral oracle and solver ---------------------------------------------------

def test_oracle_inverts_the_flat_operator_up_to_constants():
    u = random_smooth_section(Grid3(16), FLAT, 3)
    v = linear_oracle(fueter_residual(u), init=u)
    assert np.abs(v.values - u.values).max() < 1e-13


def test_kernel_projection_of_smooth_section_is_its_mean():
    u = random_smooth_section(Grid3(16), FLAT, 4)
    k = kernel_projection(u)
    assert np.abs(k.values - u.values.mean(axis=(0, 1, 2))).max() < 1e-14


@pytest.mark.parametrize("target", [FLAT, TN], ids=["flat", "taubnut"])
def test_discrete_gradient_matches_central_differences(target):
    s = random_smooth_section(Grid3(8), target, 6)
    v = np.random.default_rng(6).normal(size=s.values.shape)
    eps = 1e-6
    fd = (residual_functional(s.with_values(s.values + eps * v))
          - residual_functional(s.with_values(s.values - eps * v))) / (2 * eps)
    an = np.sum(discrete_gradient(s) * v)
    assert fd == pytest.approx(an, rel=1e-5)


def test_flat_descent_reaches_the_kernel_projection():
    init = random_smooth_section(Grid3(16), FLAT, 7, amplitude=0.05)
    out, log = solve_fueter(init, tol=1e-12)
    assert log.residuals[-1] <= 1e-12
    assert np.all(np.diff(log.residuals) <= 0)
    assert np.abs(out.values - kernel_projection(init).values).max() < 1e-5


def test_estimator_interface():
    est = FueterSolver(tol=1e-10)
    assert clone(est).get_params() == est.get_params()
    init = random_smooth_section(Grid3(8), FLAT, 8, amplitude=0.05)
    est.fit(init)
    assert est.converged_
    assert est.score(est.section_) >= -1e-10
    assert est.score(est.section_) > est.score(init)
