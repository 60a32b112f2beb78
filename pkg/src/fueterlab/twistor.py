"""Product twistor space ``S^2 x X`` with the structures J1 and J2.

Product chart coordinates are ``y = (z1, z2, p1, .., p4)`` where ``z`` is a
stereographic coordinate on the sphere (chart ``"north"`` projects from
``(0, 0, 1)``, chart ``"south"`` from ``(0, 0, -1)``). On the sphere factor both
structures act by the rotation ``j v = x cross v`` pulled back to the chart; on
the target factor J1 acts by ``I(x)`` and J2 by ``-I(x)``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .spheremaps import SphereMap
from .targets import FlatH, Target, UnsupportedError
from .validation import check_unit_vectors

__all__ = [
    "TwistorPoint",
    "stereo_inverse",
    "stereo",
    "twistor_op_at",
    "twistor_op_chart",
    "nijenhuis_sample",
    "nijenhuis_battery",
    "LiftedMap",
    "lift",
    "dbar_j2_defect",
    "StepTooSmallError",
]

CHARTS = ("north", "south")


class StepTooSmallError(ValueError):
    """Finite-difference step below the cancellation threshold."""


@dataclass(frozen=True)
class TwistorPoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = check_unit_vectors(np.asarray(self.x, float), tol=1e-14)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", np.asarray(self.p, float))


def _pole(chart):
    if chart not in CHARTS:
        raise ValueError(f"unknown chart {chart!r}")
    return 1.0 if chart == "north" else -1.0


def stereo_inverse(z, chart: str = "north"):
    """Unit vector for chart coordinate ``z`` (complex-step safe)."""
    s = _pole(chart)
    z = np.asarray(z)
    r2 = z[..., 0] ** 2 + z[..., 1] ** 2
    return np.stack([2 * z[..., 0], 2 * z[..., 1], s * (r2 - 1)], -1) / (r2 + 1)[..., None]


def stereo(x, chart: str = "north"):
    s = _pole(chart)
    x = np.asarray(x, float)
    den = 1 - s * x[..., 2]
    if np.any(np.abs(den) < 1e-12):
        raise ValueError(f"point too close to the projection pole of chart {chart!r}")
    return x[..., :2] / den[..., None]


def _dx_dz(z, chart):
    z = np.asarray(z)
    out = []
    for k in range(2):
        zz = z.astype(complex)
        zz[..., k] += 1e-30j
        out.append(np.imag(stereo_inverse(zz, chart)) / 1e-30)
    return np.stack(out, -1)  # (..., 3, 2)


def _j_chart(z, chart):
    """Matrix of ``v -> x cross v`` in chart components at ``z``."""
    z = np.asarray(z)
    x = stereo_inverse(z, chart)
    D = _dx_dz(z, chart)
    jx = np.cross(x[..., None, :], np.swapaxes(D, -1, -2))  # images of the two chart vectors
    return np.linalg.pinv(D) @ np.swapaxes(jx, -1, -2)


def _target_block(target: Target, x, p, flavor):
    if not target.closed_form:
        raise UnsupportedError(f"{target.target_id}: no closed-form complex structures")
    sign = 1.0 if flavor == "J1" else -1.0
    return sign * np.einsum("...a,...aij->...ij", x, target.structures(p))


def twistor_op_chart(flavor: str, y, target: Target, chart: str = "north"):
    """Block matrix at product chart coordinates ``y`` (shape ``(..., 6)``)."""
    if flavor not in ("J1", "J2"):
        raise ValueError(f"flavor must be 'J1' or 'J2', got {flavor!r}")
    y = np.asarray(y, float)
    z, p = y[..., :2], y[..., 2:]
    x = stereo_inverse(z, chart)
    M = np.zeros(y.shape[:-1] + (6, 6))
    M[..., :2, :2] = _j_chart(z, chart)
    M[..., 2:, 2:] = _target_block(target, x, p, flavor)
    return M


def twistor_op_at(flavor: str, tp: TwistorPoint, target: Target | None = None,
                  chart: str | None = None):
    """``J1`` or ``J2`` at a twistor point, in the chart best conditioned for ``x``."""
    target = target or FlatH()
    if chart is None:
        chart = "north" if tp.x[2] <= 0 else "south"
    y = np.concatenate([stereo(tp.x, chart), tp.p])
    return twistor_op_chart(flavor, y, target, chart)


def _vector_field_derivative(F, y, step):
    """Jacobian of ``F`` at ``y`` by fourth-order central differences."""
    n = len(y)
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        cols.append((8 * (F(y + e) - F(y - e)) - (F(y + 2 * e) - F(y - 2 * e))) / (12 * step))
    return np.stack(cols, -1)


def nijenhuis_sample(flavor: str, tp: TwistorPoint, v, w, target: Target | None = None,
                     step: float = 1e-3, chart: str | None = None, extension=None,
                     min_step: float = 1e-6):
    """``N(v, w)`` at ``tp`` for extensions ``V(y) = v + A_v (y - y0)`` (constant by default).

    ``v, w`` are product chart vectors (length 6). ``extension = (A_v, A_w)`` adds
    linear parts; by tensoriality the result must not change.
    """
    if step < min_step:
        raise StepTooSmallError(f"step {step:g} is below the cancellation threshold {min_step:g}")
    target = target or FlatH()
    if chart is None:
        chart = "north" if tp.x[2] <= 0 else "south"
    y0 = np.concatenate([stereo(tp.x, chart), tp.p])
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    Av, Aw = extension if extension is not None else (np.zeros((6, 6)), np.zeros((6, 6)))
    J = lambda y: twistor_op_chart(flavor, y, target, chart)
    V = lambda y: v + Av @ (y - y0)
    W = lambda y: w + Aw @ (y - y0)
    JV = lambda y: J(y) @ V(y)
    JW = lambda y: J(y) @ W(y)

    def bracket(X, Y):
        return (_vector_field_derivative(Y, y0, step) @ X(y0)
                - _vector_field_derivative(X, y0, step) @ Y(y0))

    J0 = J(y0)
    return bracket(JV, JW) - J0 @ bracket(JV, W) - J0 @ bracket(V, JW) - bracket(V, W)


def nijenhuis_battery(flavor: str, rng, n: int = 200, target: Target | None = None,
                      step: float = 1e-3):
    """Random unit samples; returns rows ``(x, p, |N|)``."""
    target = target or FlatH()
    rows = []
    for _ in range(n):
        x = rng.normal(size=3)
        x /= np.linalg.norm(x)
        p = _random_target_point(rng, target)
        tp = TwistorPoint(x, p)
        v = rng.normal(size=6)
        w = rng.normal(size=6)
        N = nijenhuis_sample(flavor, tp, v / np.linalg.norm(v), w / np.linalg.norm(w),
                             target, step)
        rows.append((x, p, float(np.linalg.norm(N))))
    return rows


def battery_csv(flavor: str, rows) -> str:
    buf = io.StringIO()
    buf.write("flavor,x1,x2,x3,p1,p2,p3,p4,normN\n")
    for x, p, n in rows:
        vals = ",".join(f"{v:.17g}" for v in (*x, *p, n))
        buf.write(f"{flavor},{vals}\n")
    return buf.getvalue()


def _random_target_point(rng, target):
    if target.target_id == "flat":
        return rng.normal(size=4)
    for _ in range(1000):
        p = np.concatenate([rng.uniform(-2, 2, 3), rng.uniform(0, target.periods[3] or 1, 1)])
        if target.in_domain(p) and np.linalg.norm(p[:3]) > 0.3:
            return p
    raise RuntimeError("could not sample a target point")


@dataclass
class LiftedMap:
    """Graph ``x -> (x, f(x))`` of a sphere map, node-aligned with its grid."""

    source: SphereMap

    @property
    def x(self):
        return self.source.grid.points

    @property
    def p(self):
        return self.source.values

    def project(self) -> np.ndarray:
        return self.p

    def points(self):
        return np.concatenate([self.x, self.p], -1)


def lift(f: SphereMap) -> LiftedMap:
    return LiftedMap(f)


@dataclass
class DbarReport:
    sphere_part: np.ndarray  # (6, m, m, 3): ambient S^2 component of 2 dbar_J2 (lift)
    target_part: np.ndarray  # (6, m, m, 4)
    comparison: np.ndarray  # (6, m, m, 4): df(e1) - I(x) df(e2)
    difference: np.ndarray


def dbar_j2_defect(lifted: LiftedMap) -> DbarReport:
    """``2 dbar_{J2}`` of the lift on ``e_1`` next to ``(0, df - I(x) df j)``.

    The graph tangent is pulled back to product chart coordinates and ``J2`` is
    the block operator of :func:`twistor_op_chart`, evaluated in the chart
    farther from its pole. The sphere component is pushed forward again so it
    reads as an ambient vector.
    """
    f = lifted.source
    if not f.target.closed_form:
        raise UnsupportedError(f"{f.target.target_id}: no closed-form complex structures")
    # the S^2 factor of the graph is the identity, whose tangent is the frame itself
    e = f.grid.frame
    dp = f.grid.frame_derivatives(lifted.p, f.target.chart_difference)
    dL = [np.concatenate([e[..., a, :], dp[a]], -1) for a in (0, 1)]
    x = lifted.x
    sphere = np.empty(x.shape)
    target = np.empty(lifted.p.shape)
    for chart, mask in (("north", x[..., 2] <= 0), ("south", x[..., 2] > 0)):
        xs, ps = x[mask], lifted.p[mask]
        z = stereo(xs, chart)
        D = _dx_dz(z, chart)  # (k, 3, 2)
        Dp = np.linalg.pinv(D)
        dy = [np.concatenate([np.einsum("kij,kj->ki", Dp, dL[a][mask][:, :3]),
                              dL[a][mask][:, 3:]], -1) for a in (0, 1)]
        J = twistor_op_chart("J2", np.concatenate([z, ps], -1), f.target, chart)
        out = dy[0] + np.einsum("kij,kj->ki", J, dy[1])
        sphere[mask] = np.einsum("kij,kj->ki", D, out[:, :2])
        target[mask] = out[:, 2:]
    d1, d2 = f.derivatives()
    Ix = np.einsum("...a,...aij->...ij", x, f.target.structures(f.values))
    comparison = d1 - np.einsum("...ij,...j->...i", Ix, d2)
    return DbarReport(sphere, target, comparison, target - comparison)
