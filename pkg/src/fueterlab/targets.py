"""Model hyperkähler targets.

Every evaluator is vectorised over leading axes: points have shape ``(..., 4)``
and tensors come back as ``(..., 4, 4)``. The closed-form evaluators are
written with complex-analytic operations only so that derivatives can be taken
by complex step (see :func:`chart_jacobian`).

Conventions (all signs live in ``CONVENTIONS``):

* ``omega_u(v, w) = g(I_u v, w)``, so the coordinate matrix of ``omega_u`` is
  ``I_u.T @ g``.
* Permuting fields are normalised so that ``L_{v_1} omega_2 = +omega_3``
  (cyclically); the primitives ``alpha_i = iota_{v_{i+1}} omega_{i+2}`` then
  satisfy ``d alpha_i = omega_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CONVENTIONS",
    "DomainError",
    "UnsupportedError",
    "ChartPoint",
    "Target",
    "FlatH",
    "TaubNUT",
    "EguchiHanson",
    "get_target",
    "TARGET_IDS",
    "qmul",
    "left_matrix",
    "right_matrix",
    "chart_jacobian",
    "metric_at",
    "complex_triple_at",
    "kahler_primitive_at",
    "radius_at",
    "primitive_defect",
    "relation_defects",
    "primitive_growth",
]

CONVENTIONS = {
    "table_version": 1,
    # omega_u(v, w) = g(I_u v, w)
    "kahler_from_structure": "omega = I^T g",
    # flat H: I_a = left multiplication by i, j, k; action q -> p q p^-1
    "flat_structures": "left",
    "flat_action_sign": -1.0,  # v_a(q) = sign * (e_a q - q e_a) / 2
    # Gibbons-Hawking: omega_a = e^a ^ e^0 + e^b ^ e^c, e^0 = V^-1/2 (dtheta + A), dA = *dV
    "gh_kahler": "e^a^e^0 + e^b^e^c",
    "gh_action_sign": -1.0,  # xi_a = sign * (e_a x x)
    "gh_fiber_shift_sign": 1.0,  # h_a = -iota_xi A + sign * m x_a / rho
    "lie_sign": +1,  # L_{v_1} omega_2 = +omega_3
    "twistor_sphere_j": "v -> x cross v",  # J1 = (j, I(x)) integrable, J2 = (j, -I(x))
    "iota_sign": -1.0,  # iota_i = sign * [Omega^i(e_mu, e_nu)], so iota_1 iota_2 = iota_3
}


class DomainError(ValueError):
    """A point lies outside the chart domain."""


class UnsupportedError(NotImplementedError):
    """The target does not provide the requested structure."""


@dataclass(frozen=True)
class ChartPoint:
    target_id: str
    chart_id: str
    coords: tuple[float, float, float, float]

    def __post_init__(self):
        c = tuple(float(x) for x in self.coords)
        if len(c) != 4:
            raise ValueError("a chart point has exactly 4 coordinates")
        object.__setattr__(self, "coords", c)

    def array(self) -> np.ndarray:
        return np.asarray(self.coords)


# -- quaternions -------------------------------------------------------------

def qmul(p, q):
    """Hamilton product of quaternion arrays ``(..., 4)`` (real part first)."""
    p = np.asarray(p)
    q = np.asarray(q)
    p0, p1, p2, p3 = np.moveaxis(p, -1, 0)
    q0, q1, q2, q3 = np.moveaxis(q, -1, 0)
    return np.stack([
        p0 * q0 - p1 * q1 - p2 * q2 - p3 * q3,
        p0 * q1 + p1 * q0 + p2 * q3 - p3 * q2,
        p0 * q2 - p1 * q3 + p2 * q0 + p3 * q1,
        p0 * q3 + p1 * q2 - p2 * q1 + p3 * q0,
    ], axis=-1)


def left_matrix(a) -> np.ndarray:
    """Matrix of ``q -> a q``."""
    a = np.asarray(a, dtype=float)
    return np.moveaxis(qmul(a[..., None, :], np.eye(4)), -1, -2)


def right_matrix(a) -> np.ndarray:
    """Matrix of ``q -> q a``."""
    a = np.asarray(a, dtype=float)
    return np.moveaxis(qmul(np.eye(4), a[..., None, :]), -1, -2)


_UNITS = np.eye(4)[1:]


def chart_jacobian(fun, points, step: float = 1e-30) -> np.ndarray:
    """Complex-step derivative of ``fun`` along each chart coordinate.

    Returns an array whose last axis indexes the coordinate, i.e. shape
    ``fun(points).shape + (4,)``.
    """
    points = np.asarray(points, dtype=float)
    out = []
    for k in range(points.shape[-1]):
        z = points.astype(complex)
        z[..., k] += 1j * step
        out.append(np.imag(fun(z)) / step)
    return np.stack(out, axis=-1)


class Target:
    """Base class: metric, complex triple, Kähler forms, permuting frame."""

    target_id = "abstract"
    chart_id = "default"
    periods = (0.0, 0.0, 0.0, 0.0)  # 0 = not periodic
    has_permuting_action = False
    closed_form = True
    constant_structures = False  # metric and triple independent of the point

    # required overrides
    def _domain_mask(self, p: np.ndarray) -> np.ndarray:
        return np.ones(p.shape[:-1], dtype=bool)

    domain_description = "all of R^4"

    def metric(self, p):
        raise UnsupportedError(f"{self.target_id}: metric not available")

    def structures(self, p):
        raise UnsupportedError(f"{self.target_id}: complex structures not available")

    def permuting_fields(self, p):
        raise UnsupportedError(f"{self.target_id} has no permuting SO(3) action")

    def radius(self, p):
        raise UnsupportedError(f"{self.target_id}: no radius function")

    # shared machinery
    def in_domain(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return self._domain_mask(p) & np.all(np.isfinite(p), axis=-1)

    def check_domain(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != 4:
            raise ValueError(f"chart points need 4 coordinates, got shape {p.shape}")
        ok = self.in_domain(p)
        if not np.all(ok):
            bad = np.argwhere(~ok)
            first = tuple(int(i) for i in bad[0]) if p.ndim > 1 else ()
            raise DomainError(
                f"{self.target_id}/{self.chart_id}: {len(bad)} point(s) violate the chart "
                f"predicate ({self.domain_description}); first at index {first}: "
                f"{p[first].tolist()}"
            )
        return p

    def kahler_forms(self, p):
        """Coordinate matrices of omega_1..3, shape ``(..., 3, 4, 4)``."""
        G = self.metric(p)
        I = self.structures(p)
        return np.swapaxes(I, -1, -2) @ G[..., None, :, :]

    def structure(self, p, u):
        """``u_1 I + u_2 J + u_3 K`` for unit ``u`` (broadcast over leading axes)."""
        I = self.structures(p)
        return np.einsum("...a,...aij->...ij", np.asarray(u), I)

    def kahler(self, p, u):
        om = self.kahler_forms(p)
        return np.einsum("...a,...aij->...ij", np.asarray(u), om)

    def primitives(self, p):
        """Covectors alpha_i = iota_{v_{i+1}} omega_{i+2}, shape ``(..., 3, 4)``."""
        v = self.permuting_fields(p)
        om = self.kahler_forms(p)
        out = []
        for i in range(3):
            out.append(np.einsum("...k,...kj->...j", v[..., (i + 1) % 3, :],
                                 om[..., (i + 2) % 3, :, :]))
        return np.stack(out, axis=-2)

    def metric_derivative(self, p):
        """``dG[..., i, j, k] = d g_ij / d p_k``."""
        return chart_jacobian(self.metric, p)

    def christoffel(self, p):
        """Christoffel symbols ``Gamma[..., k, i, j]`` of the target metric."""
        G = self.metric(p)
        dG = self.metric_derivative(p)
        Ginv = np.linalg.inv(G)
        # Gamma_{lij} = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
        low = 0.5 * (np.einsum("...lji->...lij", dG) + np.einsum("...lij->...lij", dG)
                     - np.einsum("...ijl->...lij", dG))
        return np.einsum("...kl,...lij->...kij", Ginv, low)

    def wrap(self, p):
        """Reduce periodic coordinates into ``[0, period)``."""
        p = np.array(p, dtype=float, copy=True)
        for k, per in enumerate(self.periods):
            if per:
                p[..., k] = np.mod(p[..., k], per)
        return p

    def chart_difference(self, p, q):
        """``p - q`` with periodic coordinates taken to the nearest representative."""
        d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
        for k, per in enumerate(self.periods):
            if per:
                d[..., k] -= per * np.round(d[..., k] / per)
        return d

    def __repr__(self):
        return f"{type(self).__name__}()"


class FlatH(Target):
    """Quaternions with the Euclidean metric and left-multiplication triple.

    The permuting action is conjugation ``q -> p q p^-1`` by unit quaternions.
    """

    target_id = "flat"
    chart_id = "quaternion"
    has_permuting_action = True
    constant_structures = True

    def metric(self, p):
        p = np.asarray(p)
        return np.broadcast_to(np.eye(4), p.shape[:-1] + (4, 4)).astype(p.dtype)

    def structures(self, p):
        p = np.asarray(p)
        L = np.stack([left_matrix(e) for e in _UNITS])
        return np.broadcast_to(L, p.shape[:-1] + (3, 4, 4)).astype(p.dtype)

    def permuting_fields(self, p):
        p = np.asarray(p)
        s = CONVENTIONS["flat_action_sign"]
        out = []
        for e in _UNITS:
            e = e.astype(p.dtype)
            out.append(0.5 * s * (qmul(e, p) - qmul(p, e)))
        return np.stack(out, axis=-2)

    def radius(self, p):
        p = np.asarray(p, dtype=float)
        return np.sqrt(np.sum(p**2, axis=-1))


class _GibbonsHawking(Target):
    """Shared Gibbons-Hawking machinery; chart ``(x1, x2, x3, theta)``."""

    chart_id = "gibbons-hawking"
    mass = 0.5

    @property
    def periods(self):
        return (0.0, 0.0, 0.0, 4 * np.pi * self.mass)

    def potential(self, x):
        raise NotImplementedError

    def connection(self, x):
        """Components ``(A1, A2, A3)`` with dA = *dV."""
        raise NotImplementedError

    def coframe(self, p):
        """Orthonormal coframe rows ``(e^1, e^2, e^3, e^0)`` in chart components."""
        p = np.asarray(p)
        x = p[..., :3]
        V = self.potential(x)
        A = self.connection(x)
        sq = np.sqrt(V)
        E = np.zeros(p.shape[:-1] + (4, 4), dtype=p.dtype)
        for a in range(3):
            E[..., a, a] = sq
        E[..., 3, :3] = A / sq[..., None]
        E[..., 3, 3] = 1.0 / sq
        return E

    def metric(self, p):
        E = self.coframe(p)
        return np.swapaxes(E, -1, -2) @ E

    _FRAME_W = None

    @classmethod
    def _frame_forms(cls):
        if cls._FRAME_W is None:
            W = np.zeros((3, 4, 4))
            for a, (b, c) in enumerate([(1, 2), (2, 0), (0, 1)]):
                # e^a ^ e^0 + e^b ^ e^c ; frame index 3 is e^0
                W[a, a, 3], W[a, 3, a] = 1.0, -1.0
                W[a, b, c], W[a, c, b] = 1.0, -1.0
            cls._FRAME_W = W
        return cls._FRAME_W

    def kahler_forms(self, p):
        E = self.coframe(p)
        W = self._frame_forms().astype(E.dtype)
        Et = np.swapaxes(E, -1, -2)
        return Et[..., None, :, :] @ W @ E[..., None, :, :]

    def structures(self, p):
        E = self.coframe(p)
        Einv = np.linalg.inv(E) if not np.iscomplexobj(E) else _inv4(E)
        # frame metric is the identity, so I_frame = W^T
        Ifr = np.swapaxes(self._frame_forms(), -1, -2).astype(E.dtype)
        return Einv[..., None, :, :] @ Ifr @ E[..., None, :, :]


def _inv4(E):
    # complex-safe inverse for stacks of 4x4 (np.linalg.inv handles complex too)
    return np.linalg.inv(E)


class TaubNUT(_GibbonsHawking):
    """Taub-NUT with ``V = 1 + m / rho``, ``m = 1/2``; Dirac string on the negative x3 axis."""

    target_id = "taubnut"
    has_permuting_action = True
    nut_exclusion = 1e-3
    string_exclusion = 1e-9
    domain_description = "|x| >= 1e-3 and off the Dirac string x1 = x2 = 0, x3 < 0"

    def _domain_mask(self, p):
        x = p[..., :3]
        rho = np.sqrt(np.sum(x**2, axis=-1))
        return (rho >= self.nut_exclusion) & (rho + x[..., 2] > self.string_exclusion * np.maximum(rho, 1.0))

    def potential(self, x):
        rho = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2 + x[..., 2] ** 2)
        return 1.0 + self.mass / rho

    def connection(self, x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        rho = np.sqrt(x1**2 + x2**2 + x3**2)
        k = -self.mass / (rho * (rho + x3))  # A = -m (1 - cos theta) dphi
        return np.stack([-k * x2, k * x1, 0.0 * x3], axis=-1)

    def permuting_fields(self, p):
        p = np.asarray(p)
        x = p[..., :3]
        rho = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2 + x[..., 2] ** 2)
        A = self.connection(x)
        s = CONVENTIONS["gh_action_sign"]
        c = CONVENTIONS["gh_fiber_shift_sign"]
        out = []
        for a in range(3):
            e = np.zeros(3)
            e[a] = 1.0
            xi = s * np.cross(e, x)
            h = -np.sum(xi * A, axis=-1) + c * s * self.mass * x[..., a] / rho
            out.append(np.concatenate([xi, h[..., None]], axis=-1))
        return np.stack(out, axis=-2)

    def primitive_asymptotic(self, p):
        """Large-|x| model ``alpha_i ~ x_i (dtheta + A) - x_{i+2} dx_{i+1}``, shape ``(..., 3, 4)``."""
        p = np.asarray(p)
        x = p[..., :3]
        theta = np.concatenate([self.connection(x), np.ones_like(x[..., :1])], axis=-1)
        out = []
        for i in range(3):
            lin = np.zeros_like(theta)
            lin[..., (i + 1) % 3] = -x[..., (i + 2) % 3]
            out.append(x[..., i, None] * theta + lin)
        return np.stack(out, axis=-2)

    def radius(self, p):
        """Geodesic distance to the NUT point, ``int_0^rho sqrt(V)``."""
        p = np.asarray(p, dtype=float)
        rho = np.sqrt(np.sum(p[..., :3] ** 2, axis=-1))
        m = self.mass
        return np.sqrt(rho * (rho + m)) + m * np.arcsinh(np.sqrt(rho / m))


class EguchiHanson(_GibbonsHawking):
    """Two-centre Gibbons-Hawking space with ``V = m/|x-p| + m/|x+p|``.

    Its Kähler class along the centre axis is non-trivial: the bolt (the
    circle fibration over the segment between the centres) is a holomorphic
    2-sphere of area ``8 pi m c``. Used as the non-exact contrast target.
    """

    target_id = "eguchi-hanson"
    mass = 0.5
    half_separation = 1.0
    centre_exclusion = 1e-6
    domain_description = "away from both centres and from the outward Dirac strings"

    def _centres(self):
        c = self.half_separation
        return np.array([0.0, 0.0, c]), np.array([0.0, 0.0, -c])

    def _domain_mask(self, p):
        x = p[..., :3]
        cp, cm = self._centres()
        dp = x - cp
        dm = x - cm
        rp = np.sqrt(np.sum(dp**2, axis=-1))
        rm = np.sqrt(np.sum(dm**2, axis=-1))
        tol = 1e-12
        return ((rp >= self.centre_exclusion) & (rm >= self.centre_exclusion)
                & (rp - dp[..., 2] > tol) & (rm + dm[..., 2] > tol))

    def potential(self, x):
        c = self.half_separation
        rp = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2 + (x[..., 2] - c) ** 2)
        rm = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2 + (x[..., 2] + c) ** 2)
        return self.mass / rp + self.mass / rm

    def connection(self, x):
        c = self.half_separation
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        zp, zm = x3 - c, x3 + c
        rp = np.sqrt(x1**2 + x2**2 + zp**2)
        rm = np.sqrt(x1**2 + x2**2 + zm**2)
        # m (1 + cos) dphi about +c (string up), -m (1 - cos) dphi about -c (string down)
        k = self.mass * (1.0 / (rp * (rp - zp)) - 1.0 / (rm * (rm + zm)))
        return np.stack([-k * x2, k * x1, 0.0 * x3], axis=-1)

    def bolt_area(self) -> float:
        return 8 * np.pi * self.mass * self.half_separation

    def radius(self, p):
        raise UnsupportedError("eguchi-hanson: no radius function is modelled")


def get_target(target_id: str) -> Target:
    """Instantiate a target by id."""
    if target_id in ("flat", "flat-h", "flatH"):
        return FlatH()
    if target_id in ("taubnut", "taub-nut"):
        return TaubNUT()
    if target_id in ("eguchi-hanson", "eh"):
        return EguchiHanson()
    if target_id in ("ah", "atiyah-hitchin"):
        from .atiyah_hitchin import AtiyahHitchin
        return AtiyahHitchin()
    raise KeyError(f"unknown target {target_id!r}; known: {', '.join(TARGET_IDS)}")


TARGET_IDS = ("flat", "taubnut", "eguchi-hanson", "ah")


def _coords(target: Target, p) -> np.ndarray:
    if isinstance(p, ChartPoint):
        if p.target_id != target.target_id:
            raise ValueError(f"point belongs to {p.target_id!r}, not {target.target_id!r}")
        p = p.array()
    return target.check_domain(np.asarray(p, dtype=float))


def metric_at(target: Target, p) -> np.ndarray:
    """Metric matrix at a chart point (or a stack of them)."""
    return target.metric(_coords(target, p))


def complex_triple_at(target: Target, p) -> np.ndarray:
    """``(I, J, K)`` stacked as ``(..., 3, 4, 4)``."""
    return target.structures(_coords(target, p))


def kahler_primitive_at(target: Target, p, i: int) -> tuple[np.ndarray, np.ndarray]:
    """``(omega_i, alpha_i)`` at ``p`` for ``i`` in ``{0, 1, 2}``."""
    if not target.has_permuting_action:
        raise UnsupportedError(f"{target.target_id} has no permuting frame")
    x = _coords(target, p)
    return target.kahler_forms(x)[..., i, :, :], target.primitives(x)[..., i, :]


def radius_at(target: Target, p) -> np.ndarray:
    return target.radius(_coords(target, p))


def _central_jacobian(fun, p, step):
    """Fourth-order central differences along each chart coordinate (last axis)."""
    p = np.asarray(p, dtype=float)
    out = []
    for k in range(p.shape[-1]):
        e = np.zeros(p.shape[-1])
        e[k] = step
        out.append((8 * (fun(p + e) - fun(p - e)) - (fun(p + 2 * e) - fun(p - 2 * e))) / (12 * step))
    return np.stack(out, axis=-1)


def primitive_defect(target: Target, p, step: float | None = 1e-3) -> np.ndarray:
    """``max |d alpha_i - omega_i|`` per point; ``step=None`` uses the complex step."""
    if not target.has_permuting_action:
        raise UnsupportedError(f"{target.target_id} has no permuting frame")
    p = target.check_domain(np.atleast_2d(np.asarray(p, dtype=float)))
    if step is None:
        Da = chart_jacobian(target.primitives, p)
    else:
        Da = _central_jacobian(target.primitives, p, step)
    # Da[..., i, j, k] = d_k alpha_{i, j}
    d = np.swapaxes(Da, -1, -2) - Da
    return np.abs(d - target.kahler_forms(p)).max(axis=(-3, -2, -1))


def relation_defects(target: Target, p) -> dict:
    """Largest violations of the quaternion relations, compatibility and closedness."""
    p = target.check_domain(np.atleast_2d(np.asarray(p, dtype=float)))
    I = target.structures(p)
    G = target.metric(p)
    eye = np.eye(4)
    sq = max(float(np.abs(I[:, a] @ I[:, a] + eye).max()) for a in range(3))
    prod = float(np.abs(I[:, 0] @ I[:, 1] - I[:, 2]).max())
    compat = max(float(np.abs(np.swapaxes(I[:, a], -1, -2) @ G @ I[:, a] - G).max()) for a in range(3))
    Dw = chart_jacobian(target.kahler_forms, p)  # [..., a, i, j, k] = d_k omega_a_ij
    closed = 0.0
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        c = Dw[..., j, k, i] + Dw[..., k, i, j] + Dw[..., i, j, k]
        closed = max(closed, float(np.abs(c).max()))
    return {"square": sq, "product": prod, "compatibility": compat, "closedness": closed}


def primitive_growth(target: Target, radius: float, rng, n: int = 200) -> float:
    """``sup |alpha_i|_g / (1 + r)`` over ``n`` points with ``|x| = radius``.

    The directions and fibre angles depend only on ``rng``, so two radii sampled
    with equal seeds probe the same rays.
    """
    if not target.has_permuting_action:
        raise UnsupportedError(f"{target.target_id} has no permuting frame")
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    if target.target_id == "flat":
        p = np.concatenate([radius * d, rng.normal(size=(n, 1))], axis=1)
        p *= radius / np.linalg.norm(p, axis=1, keepdims=True)
    else:
        p = np.concatenate([radius * d, rng.uniform(0, target.periods[3], (n, 1))], axis=1)
    p = target.check_domain(p)
    al = target.primitives(p)
    Gi = np.linalg.inv(target.metric(p))
    norms = np.sqrt(np.einsum("nai,nij,naj->na", al, Gi, al)).max(axis=1)
    return float(np.max(norms / (1 + target.radius(p))))
