import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fueterlab.spheregrid import SphereGrid, stencil_weights
from fueterlab.spheremaps import (
    Convention,
    PreconditionError,
    SphereMap,
    bolt_sphere_map,
    conforming_jet2,
    convention_scan,
    directions26,
    double_linearity_nullspace,
    jet_conformality_defect,
    jet_tension_identity,
    map_area,
    map_energy,
    random_sphere_map,
    rigidity_check,
    stokes_pairings,
    tension_field,
    triholo_residual,
    triholomorphic_jet1,
)
from fueterlab.targets import get_target, left_matrix

FLAT = get_target("flat")
TN = get_target("taubnut")
seeds = st.integers(0, 2**31 - 1)


def inclusion(x):
    return np.concatenate([np.zeros(x.shape[:-1] + (1,)), x], axis=-1)


@pytest.fixture(scope="module")
def grids():
    return {(m, o): SphereGrid(m, o) for m in (16, 32) for o in (4, 8)}


# ---- grid ------------------------------------------------------------------------

@given(st.integers(1, 4), st.lists(st.integers(-4, 4), min_size=5, max_size=5, unique=True))
def test_stencil_weights_differentiate_polynomials_exactly(deriv, offsets):
    offsets = sorted(offsets)
    w = stencil_weights(offsets, deriv)
    for p in range(len(offsets)):
        exact = math.factorial(deriv) if p == deriv else 0.0
        assert np.dot(w, np.array(offsets, float) ** p) == pytest.approx(exact, abs=1e-9)


def test_sphere_integrals(grids):
    g = grids[(32, 4)]
    x = g.points
    assert g.integrate(np.ones(x.shape[:-1])) == pytest.approx(4 * np.pi, rel=1e-9)
    assert g.integrate(x[..., 0] ** 2) == pytest.approx(4 * np.pi / 3, rel=1e-8)
    assert abs(g.integrate(x[..., 0] * x[..., 1])) < 1e-12


@pytest.mark.parametrize("order,rate", [(4, 8.0), (8, 100.0)])
def test_laplacian_converges_on_a_degree_two_harmonic(grids, order, rate):
    errs = []
    for m in (16, 32):
        x = grids[(m, order)].points
        xy = x[..., 0] * x[..., 1]
        errs.append(np.abs(grids[(m, order)].laplacian(xy) + 6 * xy).max())
    assert errs[0] / errs[1] > rate


# ---- maps ------------------------------------------------------------------------

def test_inclusion_is_a_conformal_harmonic_triholomorphic_map(grids):
    f = SphereMap.from_function(grids[(32, 8)], inclusion, FLAT)
    assert np.abs(triholo_residual(f)).max() < 1e-7
    assert np.abs(tension_field(f) + 2 * f.values).max() < 1e-5
    assert map_area(f) == pytest.approx(4 * np.pi, rel=1e-8)
    assert map_energy(f) == pytest.approx(map_area(f), rel=1e-8)


def test_convention_scan_picks_one_equivalence_class(grids):
    scan = convention_scan(inclusion, grids[(16, 4)], FLAT)
    good = {k for k, v in scan.items() if v < 1e-3}
    assert good == {"+left", "-right"}
    for tag in scan:
        assert Convention.from_tag(tag).tag == tag


def test_directions26_are_distinct_unit_vectors():
    d = directions26()
    assert d.shape == (26, 3)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert len({tuple(np.round(v, 12)) for v in d}) == 26


@settings(max_examples=5, deadline=None)
@given(seeds)
def test_pairings_vanish_for_random_maps_into_taubnut(seed):
    f = random_sphere_map(SphereGrid(32), TN, seed)
    assert max(abs(r.pairing) for r in stokes_pairings(f, directions26())) < 1e-6


def test_bolt_map_pairing_is_nonzero_and_stable():
    eh = get_target("eguchi-hanson")
    p = [stokes_pairings(bolt_sphere_map(SphereGrid(m), eh), [[0, 0, 1]])[0].pairing for m in (16, 32)]
    assert abs(p[1]) > 1.0
    assert p[0] == pytest.approx(p[1], rel=1e-2)


# ---- jets ------------------------------------------------------------------------

@given(seeds)
def test_conforming_two_jets_are_harmonic(seed):
    rng = np.random.default_rng(seed)
    assert jet_tension_identity(conforming_jet2(rng, FLAT, rng.normal(size=4))) <= 1e-12


@given(seeds)
def test_triholomorphic_one_jets_are_conformal(seed):
    rng = np.random.default_rng(seed)
    lengths, angle = jet_conformality_defect(triholomorphic_jet1(rng, FLAT, rng.normal(size=4)))
    assert lengths <= 1e-12 and angle <= 1e-12


@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_double_linearity_has_trivial_kernel_for_distinct_structures(c):
    u, v = np.array(c[:3]), np.array(c[3:])
    if np.linalg.norm(u) < 1e-3 or np.linalg.norm(v) < 1e-3:
        return
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    I, I0 = (left_matrix(np.r_[0.0, w]) for w in (u, v))
    dim, smin, _ = double_linearity_nullspace(I, I0)
    if np.linalg.norm(u - v) > 1e-2:
        assert dim == 0 and smin > 1e-4
    assert double_linearity_nullspace(I, I)[0] == 4


def test_rigidity_check_requires_double_linearity():
    rng = np.random.default_rng(1)
    jet = triholomorphic_jet1(rng, FLAT, np.zeros(4))
    I0 = left_matrix([0, 0, 0, 1.0])
    with pytest.raises(PreconditionError):
        rigidity_check(jet, I0)
    zero = dataclasses.replace(jet, df=np.zeros_like(jet.df))
    assert rigidity_check(zero, I0) == 0.0
