import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fueterlab.spheregrid import SphereGrid
from fueterlab.spheremaps import Convention, SphereMap, random_sphere_map, triholo_residual
from fueterlab.targets import get_target
from fueterlab.twistor import (
    StepTooSmallError,
    TwistorPoint,
    battery_csv,
    dbar_j2_defect,
    lift,
    nijenhuis_battery,
    nijenhuis_sample,
    stereo,
    stereo_inverse,
    twistor_op_at,
)

FLAT = get_target("flat")
TN = get_target("taubnut")
coord = st.floats(-2, 2, allow_nan=False)


def random_point(rng):
    x = rng.normal(size=3)
    return TwistorPoint(x / np.linalg.norm(x), rng.normal(size=4))


@given(st.integers(0, 2**31 - 1), st.sampled_from(["J1", "J2"]))
def test_structures_square_to_minus_one(seed, flavor):
    J = twistor_op_at(flavor, random_point(np.random.default_rng(seed)))
    assert np.abs(J @ J + np.eye(6)).max() < 1e-12


@given(coord, coord, st.sampled_from(["north", "south"]))
def test_stereographic_round_trip(a, b, chart):
    z = np.array([a, b])
    x = stereo_inverse(z, chart)
    assert np.linalg.norm(x) == pytest.approx(1.0)
    assert np.allclose(stereo(x, chart), z, atol=1e-12)


def test_nijenhuis_tensor_is_antisymmetric_and_tensorial():
    rng = np.random.default_rng(0)
    tp = random_point(rng)
    v, w = rng.normal(size=6), rng.normal(size=6)
    n_vw = nijenhuis_sample("J2", tp, v, w)
    assert np.allclose(nijenhuis_sample("J2", tp, w, v), -n_vw, atol=1e-12)
    # changing how v, w are extended off the point must not change N
    A = rng.normal(size=(6, 6))
    other = nijenhuis_sample("J2", tp, v, w, extension=(A @ v, A @ w))
    assert np.allclose(other, n_vw, atol=1e-8)


@pytest.mark.parametrize("target", [FLAT, TN], ids=["flat", "taubnut"])
def test_first_structure_is_integrable_and_second_is_not(target):
    rows1 = nijenhuis_battery("J1", np.random.default_rng(1), 10, target=target)
    rows2 = nijenhuis_battery("J2", np.random.default_rng(1), 10, target=target)
    assert max(r[2] for r in rows1) <= 1e-6
    assert max(r[2] for r in rows2) >= 0.1


def test_battery_csv_layout():
    rows = nijenhuis_battery("J1", np.random.default_rng(2), 3)
    lines = battery_csv("J1", rows).strip().splitlines()
    assert lines[0] == "flavor,x1,x2,x3,p1,p2,p3,p4,normN"
    assert len(lines) == 4 and all(l.startswith("J1,") for l in lines[1:])


def test_too_small_step_is_rejected():
    rng = np.random.default_rng(3)
    with pytest.raises(StepTooSmallError):
        nijenhuis_sample("J1", random_point(rng), rng.normal(size=6), rng.normal(size=6), step=1e-7)


# ---- lifts ---------------------------------------------------------------------

def test_lift_then_project_is_the_identity():
    f = random_sphere_map(SphereGrid(8), FLAT, 4)
    assert np.array_equal(lift(f).project(), f.values)
    assert np.allclose(np.linalg.norm(lift(f).x, axis=-1), 1.0)


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["flat", "taubnut"]))
def test_lift_defect_transfers_the_triholomorphic_residual(seed, tid):
    f = random_sphere_map(SphereGrid(16), get_target(tid), seed).with_convention(Convention.from_tag("-left"))
    rep = dbar_j2_defect(lift(f))
    assert np.abs(rep.difference).max() <= 1e-10
    assert np.abs(rep.sphere_part).max() <= 1e-10
    assert np.abs(rep.target_part - triholo_residual(f)).max() <= 1e-10


def test_constant_map_has_vanishing_lift_defect():
    f = SphereMap.from_function(SphereGrid(8), lambda x: np.zeros(x.shape[:-1] + (4,)) + 0.3, FLAT)
    rep = dbar_j2_defect(lift(f))
    assert np.abs(rep.target_part).max() == 0.0
    assert np.abs(rep.comparison).max() == 0.0
    assert np.abs(rep.sphere_part).max() < 1e-14
