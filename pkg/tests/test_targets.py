import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fueterlab.targets import (
    CONVENTIONS,
    DomainError,
    UnsupportedError,
    get_target,
    left_matrix,
    primitive_defect,
    primitive_growth,
    qmul,
    relation_defects,
    right_matrix,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
quats = arrays(float, 4, elements=finite)


def tn_points(rng, n):
    x = rng.uniform(-3, 3, size=(n, 3))
    x = x[np.linalg.norm(x, axis=1) > 0.3]
    theta = rng.uniform(0, 2 * np.pi, size=(len(x), 1))
    return np.hstack([x, theta])


# ---- quaternion algebra -------------------------------------------------------

def test_quaternion_units():
    i, j, k = np.eye(4)[1:]
    assert np.allclose(qmul(i, j), k)
    assert np.allclose(qmul(j, k), i)
    assert np.allclose(qmul(k, i), j)
    assert np.allclose(qmul(i, i), [-1, 0, 0, 0])


@given(quats, quats)
def test_left_and_right_matrices_represent_multiplication(p, q):
    pq = np.asarray(qmul(p, q))
    assert np.allclose(left_matrix(p) @ q, pq, atol=1e-9)
    assert np.allclose(right_matrix(q) @ p, pq, atol=1e-9)


@given(quats, quats)
def test_quaternion_norm_is_multiplicative(p, q):
    assert np.isclose(np.linalg.norm(qmul(p, q)), np.linalg.norm(p) * np.linalg.norm(q), atol=1e-9)


# ---- flat target ------------------------------------------------------------

def test_flat_structures_are_left_multiplication():
    flat = get_target("flat")
    p = np.zeros((1, 4))
    I = flat.structures(p)[0]
    for a in range(3):
        assert np.allclose(I[a], left_matrix(np.eye(4)[a + 1]))


def test_kahler_form_convention_is_I_transpose_g():
    tn = get_target("taubnut")
    p = tn_points(np.random.default_rng(0), 5)
    g, I, w = tn.metric(p), tn.structures(p), tn.kahler_forms(p)
    assert np.allclose(w, np.swapaxes(I, -1, -2) @ g[:, None], atol=1e-12)
    assert CONVENTIONS["kahler_from_structure"] == "omega = I^T g"


# ---- Taub-NUT oracles ---------------------------------------------------------

def test_taubnut_metric_against_gibbons_hawking_closed_form():
    tn = get_target("taubnut")
    p = tn_points(np.random.default_rng(1), 20)
    rho = np.linalg.norm(p[:, :3], axis=1)
    V = 1 + tn.mass / rho
    g = tn.metric(p)
    assert np.allclose(np.linalg.det(g), V**2, rtol=1e-12)
    assert np.allclose(g[:, 3, 3], 1 / V, rtol=1e-12)


def test_taubnut_radius_derivative_is_sqrt_V():
    tn = get_target("taubnut")
    u = np.array([0.6, 0.0, 0.8])
    for rho in (0.2, 1.0, 7.5):
        h = 1e-5
        pts = np.array([np.r_[(rho + s * h) * u, 0.0] for s in (-1, 1)])
        r = tn.radius(pts)
        assert np.isclose((r[1] - r[0]) / (2 * h), np.sqrt(1 + tn.mass / rho), rtol=1e-8)


def test_taubnut_relations_and_primitives():
    tn = get_target("taubnut")
    p = tn_points(np.random.default_rng(2), 200)
    rel = relation_defects(tn, p)
    assert max(rel["square"], rel["product"], rel["compatibility"]) < 1e-11
    assert rel["closedness"] < 1e-9
    assert primitive_defect(tn, p).max() < 1e-6


def test_primitive_growth_is_stable_under_radius_doubling():
    tn = get_target("taubnut")
    g1 = primitive_growth(tn, 50.0, np.random.default_rng(3))
    g2 = primitive_growth(tn, 100.0, np.random.default_rng(3))
    assert abs(g2 / g1 - 1) < 0.05


def test_taubnut_rejects_points_on_the_dirac_string():
    tn = get_target("taubnut")
    with pytest.raises(DomainError):
        tn.check_domain(np.array([[0.0, 0.0, -1.0, 0.0]]))


# ---- Eguchi-Hanson ---------------------------------------------------------------

def test_eguchi_hanson_relations_hold_but_primitives_are_unsupported():
    eh = get_target("eguchi-hanson")
    rng = np.random.default_rng(4)
    p = tn_points(rng, 100)
    p = p[np.min([np.linalg.norm(p[:, :3] - c, axis=1) for c in ([0, 0, 1], [0, 0, -1])], axis=0) > 0.3]
    rel = relation_defects(eh, p)
    assert rel["square"] < 1e-10 and rel["closedness"] < 1e-9
    with pytest.raises(UnsupportedError):
        primitive_defect(eh, p)


def test_unknown_target_is_rejected():
    with pytest.raises(KeyError):
        get_target("k3")
