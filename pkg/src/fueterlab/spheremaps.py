"""Maps from the round 2-sphere into a target, and pointwise jet algebra.

A map carries a convention tag ``(sigma, mult)``. The tri-holomorphic residual is
``d_1 f + sigma I(x) d_2 f`` in the oriented frame ``(e_1, e_2 = x cross e_1)``,
where ``I(x) = x_1 I + x_2 J + x_3 K``. On the flat target ``mult`` selects
left or right quaternion multiplication as the triple.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .spheregrid import SphereGrid
from .targets import FlatH, Target, UnsupportedError, right_matrix

__all__ = [
    "Convention",
    "SphereMap",
    "Jet1",
    "Jet2",
    "PreconditionError",
    "structure_field",
    "triholo_residual",
    "conformality_defect",
    "tension_field",
    "map_energy",
    "map_area",
    "stokes_pairing",
    "stokes_pairings",
    "jet_tension_identity",
    "conforming_jet2",
    "triholomorphic_jet1",
    "jet_conformality_defect",
    "double_linearity_nullspace",
    "rigidity_check",
    "directions26",
    "convention_scan",
    "random_sphere_map",
    "bolt_sphere_map",
]


class PreconditionError(ValueError):
    """Input violates the stated hypotheses of an operation."""


@dataclass(frozen=True)
class Convention:
    sigma: int = 1
    mult: str = "left"

    def __post_init__(self):
        if self.sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")
        if self.mult not in ("left", "right"):
            raise ValueError("mult must be 'left' or 'right'")

    @property
    def tag(self) -> str:
        return f"{'+' if self.sigma > 0 else '-'}{self.mult}"

    @classmethod
    def from_tag(cls, tag: str) -> "Convention":
        sign = {"+": 1, "-": -1}[tag[0]]
        return cls(sign, tag[1:])

    @classmethod
    def all(cls):
        return [cls(s, m) for s in (1, -1) for m in ("left", "right")]


def _triple(target: Target, p, conv: Convention):
    if conv.mult == "right":
        if not isinstance(target, FlatH):
            raise UnsupportedError("right-multiplication triple exists only on the flat target")
        R = np.stack([right_matrix(e) for e in np.eye(4)[1:]])
        return np.broadcast_to(R, np.shape(p)[:-1] + (3, 4, 4))
    return target.structures(p)


def structure_field(target: Target, p, x, conv: Convention = Convention()):
    """``I(x)`` at target points ``p`` for unit vectors ``x`` (broadcast)."""
    return np.einsum("...a,...aij->...ij", x, _triple(target, p, conv))


class SphereMap:
    """Node values ``(6, m, m, 4)`` of a map ``S^2 -> target``."""

    def __init__(self, grid: SphereGrid, values, target: Target,
                 convention: Convention = Convention(), *, tear_threshold: float | None = None):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape + (4,):
            raise ValueError(f"values must have shape {grid.shape + (4,)}, got {values.shape}")
        if target.target_id != "ah":
            target.check_domain(values)
        self.grid = grid
        self.values = values
        self.target = target
        self.convention = convention
        if tear_threshold is not None:
            d = self.derivatives()
            jump = float(np.abs(d).max()) * grid.dxi
            if jump > tear_threshold:
                raise ValueError(f"map tears: node jump {jump:.3g} exceeds {tear_threshold:g}")

    @classmethod
    def from_function(cls, grid: SphereGrid, fun, target: Target, convention=Convention(), **kw):
        return cls(grid, fun(grid.points), target, convention, **kw)

    def with_convention(self, conv: Convention) -> "SphereMap":
        return SphereMap(self.grid, self.values, self.target, conv)

    def derivatives(self) -> np.ndarray:
        """``(d_1 f, d_2 f)`` in the oriented orthonormal frame, shape ``(2, 6, m, m, 4)``."""
        return self.grid.frame_derivatives(self.values, self.target.chart_difference)

    def __repr__(self):
        return (f"SphereMap(m={self.grid.m}, target={self.target.target_id!r}, "
                f"convention={self.convention.tag!r})")


def triholo_residual(f: SphereMap) -> np.ndarray:
    d1, d2 = f.derivatives()
    I = structure_field(f.target, f.values, f.grid.points, f.convention)
    return d1 + f.convention.sigma * np.einsum("...ij,...j->...i", I, d2)


def _g(target, p, u, v):
    G = target.metric(p)
    return np.einsum("...i,...ij,...j->...", u, G, v)


def conformality_defect(f: SphereMap) -> tuple[np.ndarray, np.ndarray]:
    d1, d2 = f.derivatives()
    n1 = np.sqrt(_g(f.target, f.values, d1, d1))
    n2 = np.sqrt(_g(f.target, f.values, d2, d2))
    return np.abs(n1 - n2), np.abs(_g(f.target, f.values, d1, d2))


def tension_field(f: SphereMap) -> np.ndarray:
    """``trace nabla df`` over the round sphere, in chart components."""
    lap = f.grid.laplacian(f.values, f.target.chart_difference)
    if f.target.constant_structures:
        return lap
    d = f.derivatives()
    Gam = f.target.christoffel(f.values)
    return lap + sum(np.einsum("...kij,...i,...j->...k", Gam, d[a], d[a]) for a in range(2))


def map_energy(f: SphereMap) -> float:
    d1, d2 = f.derivatives()
    dens = _g(f.target, f.values, d1, d1) + _g(f.target, f.values, d2, d2)
    return 0.5 * float(f.grid.integrate(dens))


def map_area(f: SphereMap) -> float:
    d1, d2 = f.derivatives()
    a = _g(f.target, f.values, d1, d1)
    b = _g(f.target, f.values, d2, d2)
    c = _g(f.target, f.values, d1, d2)
    return float(f.grid.integrate(np.sqrt(np.maximum(a * b - c * c, 0.0))))


@dataclass
class PairingReport:
    direction: tuple
    pairing: float
    exact_form: float | None  # integral of d(f* alpha_u) computed in panel coordinates
    m: int


def stokes_pairing(f: SphereMap, u) -> PairingReport:
    """``int_{S^2} f^* omega_u`` together with the coordinate integral of ``d(f^* alpha_u)``."""
    return stokes_pairings(f, np.atleast_2d(u))[0]


def stokes_pairings(f: SphereMap, directions) -> list[PairingReport]:
    """Batch version of :func:`stokes_pairing` sharing one derivative pass."""
    U = np.atleast_2d(np.asarray(directions, dtype=float))
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    if not f.target.closed_form:
        raise UnsupportedError(f"{f.target.target_id}: Kähler forms unavailable")
    d1, d2 = f.derivatives()
    om = f.target.kahler_forms(f.values)
    dens = np.einsum("...i,...aij,...j->...a", d1, om, d2)
    pair = f.grid.integrate(dens) @ U.T
    exact = [None] * len(U)
    if f.target.has_permuting_action:
        al = f.target.primitives(f.values)  # (..., 3, 4)
        fx, fy = f.grid.panel_derivatives(f.values, f.target.chart_difference)
        ax = np.einsum("...ai,...i->...a", al, fx)
        ay = np.einsum("...ai,...i->...a", al, fy)
        curl = f.grid.panel_derivatives(ay)[0] - f.grid.panel_derivatives(ax)[1]
        w1 = _line_weights(f.grid)
        per_panel = np.einsum("i,j,pija->pa", w1, w1, curl)
        exact = list((f.grid.orientation @ per_panel) @ U.T)
    return [PairingReport(tuple(u.tolist()), float(p), None if e is None else float(e), f.grid.m)
            for u, p, e in zip(U, pair, exact)]


def _line_weights(grid):
    from .numerics import corrected_midpoint_weights

    return corrected_midpoint_weights(grid.m, -np.pi / 4, np.pi / 4)


def directions26() -> np.ndarray:
    """The 26 normalised nonzero vectors with entries in ``{-1, 0, 1}``."""
    v = np.array([d for d in itertools.product((-1, 0, 1), repeat=3) if any(d)], dtype=float)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def convention_scan(f_values_fun, grid: SphereGrid, target: Target | None = None,
                    tol: float = 1e-8) -> dict[str, float]:
    """Sup-norm tri-holomorphic residual of one map under all four conventions."""
    target = target or FlatH()
    out = {}
    for conv in Convention.all():
        try:
            fm = SphereMap.from_function(grid, f_values_fun, target, conv)
            out[conv.tag] = float(np.abs(triholo_residual(fm)).max())
        except UnsupportedError:
            continue
    return out


# -- jets ---------------------------------------------------------------------

@dataclass(frozen=True)
class Jet1:
    """First-order data at ``x`` in S^2: frame ``(v, x cross v)`` and ``df`` on it."""

    x: np.ndarray
    v: np.ndarray
    df: np.ndarray  # (2, 4): df(v), df(jv)
    point: np.ndarray  # target point
    target: Target

    def __post_init__(self):
        x = np.asarray(self.x, float)
        v = np.asarray(self.v, float)
        if abs(np.linalg.norm(x) - 1) > 1e-12 or abs(np.linalg.norm(v) - 1) > 1e-12:
            raise PreconditionError("x and v must be unit vectors")
        if abs(x @ v) > 1e-12:
            raise PreconditionError("v must be tangent at x")

    @property
    def jv(self):
        return np.cross(self.x, self.v)


@dataclass(frozen=True)
class Jet2(Jet1):
    """Adds ``hess[a, b] = nabla df(e_a, e_b)`` (symmetric), shape ``(2, 2, 4)``."""

    hess: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        H = np.asarray(self.hess, float)
        if H.shape != (2, 2, 4):
            raise PreconditionError("hess must have shape (2, 2, 4)")
        if np.abs(H[0, 1] - H[1, 0]).max() > 1e-12 * max(1.0, np.abs(H).max()):
            raise PreconditionError("second fundamental data must be symmetric")


def _I_at(jet: Jet1, conv: Convention):
    return conv.sigma * structure_field(jet.target, jet.point, jet.x, conv)


def _gnorm(target, p, w):
    return float(np.sqrt(max(_g(target, p, w, w), 0.0)))


def triholomorphic_jet1(rng, target: Target, point, conv: Convention = Convention()) -> Jet1:
    """Random ``Jet1`` with ``df(jv) = sigma I(x) df(v)``."""
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    v = np.cross(x, rng.normal(size=3))
    v /= np.linalg.norm(v)
    jet = Jet1(x, v, np.zeros((2, 4)), np.asarray(point, float), target)
    I = _I_at(jet, conv)
    a = rng.normal(size=4)
    return Jet1(x, v, np.stack([a, I @ a]), jet.point, target)


def conforming_jet2(rng, target: Target, point, conv: Convention = Convention()) -> Jet2:
    """Random ``Jet2`` satisfying ``nabla df(w, jv) = I(x) nabla df(w, v)``."""
    j1 = triholomorphic_jet1(rng, target, point, conv)
    I = _I_at(j1, conv)
    P = rng.normal(size=4)
    B12 = I @ P
    H = np.stack([np.stack([P, B12]), np.stack([B12, I @ B12])])
    return Jet2(j1.x, j1.v, j1.df, j1.point, target, H)


def jet_conformality_defect(jet: Jet1) -> tuple[float, float]:
    a, b = jet.df
    t, p = jet.target, jet.point
    return abs(_gnorm(t, p, a) - _gnorm(t, p, b)), abs(float(_g(t, p, a, b)))


def jet_tension_identity(jet: Jet2, conv: Convention = Convention(), strict: bool = True,
                         rtol: float = 1e-10) -> float:
    """``|nabla df(e_1, e_1) + nabla df(e_2, e_2)|_g`` for a conforming jet.

    With ``strict`` the jet must satisfy the linearity relations; otherwise the
    trace is returned regardless (useful as a non-vacuity witness).
    """
    I = _I_at(jet, conv)
    H = np.asarray(jet.hess)
    if strict:
        scale = max(1.0, np.abs(H).max(), np.abs(jet.df).max())
        rel = max(np.abs(H[0, 1] - I @ H[0, 0]).max(), np.abs(H[1, 1] - I @ H[1, 0]).max(),
                  np.abs(jet.df[1] - I @ jet.df[0]).max())
        if rel > rtol * scale:
            raise PreconditionError(f"jet violates the tri-holomorphic relations by {rel:.3g}")
    return _gnorm(jet.target, jet.point, H[0, 0] + H[1, 1])


def double_linearity_nullspace(I, I0, tol: float = 1e-10):
    """Null space of ``df -> (df j - I df, df j - I0 df)`` on ``Hom(R^2, R^4)``.

    Returns ``(dimension, smallest singular value, basis)``; ``df`` is stored as
    the 8-vector ``(df(e1), df(e2))``.
    """
    I = np.asarray(I, float)
    I0 = np.asarray(I0, float)
    Id = np.eye(4)
    # rows: df(e2) - S df(e1) = 0 and -df(e1) - S df(e2) = 0 for S in (I, I0)
    blocks = []
    for S in (I, I0):
        blocks.append(np.hstack([-S, Id]))
        blocks.append(np.hstack([-Id, -S]))
    C = np.vstack(blocks)
    _, sv, Vt = np.linalg.svd(C)
    dim = int(np.sum(sv <= tol * max(1.0, sv[0])))
    basis = Vt[len(sv) - dim:] if dim else np.zeros((0, 8))
    return dim, float(sv[-1]), basis


def rigidity_check(jet: Jet1, I0, conv: Convention = Convention(), rtol: float = 1e-10) -> float:
    """For ``df`` that is both ``I(x)``- and ``I0``-linear, confirm ``df = 0``."""
    I = _I_at(jet, conv)
    I0 = np.asarray(I0, float)
    if np.abs(I - I0).max() <= 1e-12 * max(1.0, np.abs(I0).max()):
        raise PreconditionError("I(x) equals I0: the rigidity hypothesis fails")
    a, b = jet.df
    scale = max(1.0, np.abs(jet.df).max())
    for S in (I, I0):
        if np.abs(b - S @ a).max() > rtol * scale:
            raise PreconditionError("df is not linear for both structures")
    norm = float(np.linalg.norm(jet.df))
    if norm > 1e-12 * scale:
        raise AssertionError(f"doubly linear differential has norm {norm:.3g}")
    return norm


# -- sample maps ----------------------------------------------------------------

def random_sphere_map(grid: SphereGrid, target: Target, rng, base=None, scale: float = 1.0) -> SphereMap:
    """Quadratic polynomial map with random coefficients about ``base``."""
    rng = np.random.default_rng(rng)
    if base is None:
        base = np.zeros(4) if target.target_id == "flat" else np.array([1.0, 0.8, 1.2, 1.0])
    A = rng.normal(size=(4, 3)) * 0.3 * scale
    B = rng.normal(size=(4, 3, 3)) * 0.2 * scale
    P = grid.points
    vals = np.asarray(base, float) + P @ A.T + np.einsum("kij,...i,...j->...k", B, P, P)
    return SphereMap(grid, target.wrap(vals), target)


def bolt_sphere_map(grid: SphereGrid, target: Target) -> SphereMap:
    """Degree-one parametrisation of the Eguchi–Hanson bolt by the round sphere."""
    if target.target_id != "eguchi-hanson":
        raise ValueError("the bolt map needs the Eguchi-Hanson target")
    P = grid.points
    fib = np.mod(2 * target.mass * np.arctan2(P[..., 1], P[..., 0]), target.periods[3])
    z = np.zeros_like(fib)
    return SphereMap(grid, np.stack([z, z, target.half_separation * P[..., 2], fib], -1), target)
