import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fueterlab.fields3d import flat_linear_fueter, random_smooth_section
from fueterlab.fueter4d import (
    Grid4,
    SelfDualFrame,
    cylinder_reduction,
    energy_identity4,
    fueter4_residual,
    random_section4,
    trajectory_residual,
)
from fueterlab.numerics import Grid3
from fueterlab.targets import get_target

seeds = st.integers(0, 2**31 - 1)


def test_self_dual_frame_relations():
    frame = SelfDualFrame()
    assert all(v == 0.0 for v in frame.relation_errors().values())
    assert frame.iota_sign in (1.0, -1.0)
    assert np.allclose(frame.gram(), np.eye(3))


@settings(max_examples=4, deadline=None)
@given(seeds, st.sampled_from(["flat", "taubnut"]))
def test_pointwise_identity_holds_with_a_quarter(seed, tid):
    rep = energy_identity4(random_section4(Grid4(8), get_target(tid), seed), coefficient=0.25)
    assert rep.algebraic_defect < 1e-12
    # the global fit mixes quadrature with the exact Stokes value, so it carries discretisation error
    assert rep.fitted_coefficient == pytest.approx(0.25, abs=1e-5)
    assert rep.relative_defect < 1e-5


def test_periodic_flat_lambda_integral_vanishes():
    rep = energy_identity4(random_section4(Grid4(8), get_target("flat"), 3))
    assert rep.lambda_stokes == 0.0
    assert abs(rep.lambda_integral) < 1e-12 * rep.grad_norm2


def test_lift_of_a_fueter_section_is_fueter():
    s4, rep = cylinder_reduction(flat_linear_fueter(Grid3(8)))
    assert rep.fueter3_rms == 0.0 and rep.fueter4_rms == 0.0
    assert np.abs(fueter4_residual(s4)).max() == 0.0


@settings(max_examples=4, deadline=None)
@given(seeds, st.sampled_from(["flat", "taubnut"]))
def test_cylinder_reduction_preserves_the_residual(seed, tid):
    _, rep = cylinder_reduction(random_smooth_section(Grid3(8), get_target(tid), seed))
    assert rep.ratio == pytest.approx(1.0, abs=1e-6)
    assert rep.evolution_vs_fueter3 < 1e-12


def test_trajectory_of_a_stationary_solution():
    s = flat_linear_fueter(Grid3(8))
    rep = trajectory_residual([s, s, s, s], 0.1, f_minus=s)
    assert rep.residual_sup.shape == (2,)
    assert rep.residual_sup.max() == 0.0
    assert rep.endpoint_minus == 0.0 and rep.endpoint_plus is None


def test_trajectory_arguments_are_validated():
    s = flat_linear_fueter(Grid3(8))
    with pytest.raises(ValueError):
        trajectory_residual([s, s], 0.1)
    with pytest.raises(ValueError):
        trajectory_residual([s, s, s], 0.0)
    with pytest.raises(ValueError):
        trajectory_residual([s, s, flat_linear_fueter(Grid3(10))], 0.1)
