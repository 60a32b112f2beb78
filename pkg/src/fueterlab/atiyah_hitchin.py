"""Atiyah-Hitchin metric profile, bolt data, radius function, and a metric-only target.

The metric is ``f^2 deta^2 + a^2 s1^2 + b^2 s2^2 + c^2 s3^2`` in the gauge
``f = -b/eta``. With this gauge the system

    a' = f ((b - c)^2 - a^2) / (2 b c)     (and cyclically)

has the exact first integral ``b (c - a) / eta^2 = 1``. The bolt sits at
``eta = pi`` where ``c`` vanishes and ``a = -b = pi``; at large ``eta`` the
fibre coefficient ``a`` tends to 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ellipe, ellipkm1

from . import CONVENTION_TABLE_VERSION
from .numerics import OdeError, OdeTrajectory, rk_integrate
from .targets import DomainError, Target, UnsupportedError

__all__ = [
    "AHProfile",
    "ah_profile",
    "ah_rhs",
    "near_bolt_series",
    "closed_form_coefficients",
    "AtiyahHitchin",
    "BOLT_ETA",
    "ALF_LIMIT",
]

BOLT_ETA = np.pi
ALF_LIMIT = 2.0


def ah_rhs(eta, y):
    """Right-hand side for the state ``(a, b, c, r)``."""
    a, b, c = y[0], y[1], y[2]
    f = -b / eta
    return np.array([
        f * ((b - c) ** 2 - a**2) / (2 * b * c),
        f * ((c - a) ** 2 - b**2) / (2 * c * a),
        f * ((a - b) ** 2 - c**2) / (2 * a * b),
        f,
    ])


def first_integral(eta, a, b, c):
    return b * (c - a) / eta**2


def near_bolt_series(s):
    """Coefficients ``(a, b, c)`` at ``eta = pi + s`` from the bolt expansion."""
    pi = np.pi
    a = pi - s / 2 + s**2 / (2 * pi) - 3 * s**3 / (8 * pi**2) + 15 * s**4 / (64 * pi**3)
    b = -pi - s / 2 - s**2 / (4 * pi) + 3 * s**4 / (64 * pi**3)
    c = -2 * s + s**2 / (2 * pi) - 3 * s**5 / (16 * pi**4)
    return a, b, c


def _series_radius(s):
    val, _ = quad(lambda t: -near_bolt_series(t)[1] / (np.pi + t), 0.0, s,
                  epsabs=1e-16, epsrel=1e-14)
    return val


def closed_form_coefficients(eta):
    """Independent elliptic-integral evaluation of ``(a, b, c)`` at ``eta > pi``.

    With ``k = sin(beta/2)`` and complementary parameter ``p = 1 - k^2`` the radial
    variable is ``eta = 2 K(k)``; the products ``ab``, ``bc``, ``ca`` have closed
    forms in ``beta``.
    """
    eta = float(eta)
    if not np.pi < eta < 600.0:
        raise DomainError("closed form evaluated for pi < eta < 600")
    # eta = 2 ellipkm1(p) is decreasing in p; solve in log p
    g = lambda lp: 2 * ellipkm1(np.exp(lp)) - eta
    lp = brentq(g, -1380.0, -1e-300, xtol=1e-14, rtol=1e-15, maxiter=500)
    p = np.exp(lp)
    m = 1.0 - p
    k = np.sqrt(m)
    Kk, Ek = ellipkm1(p), ellipe(m)
    r = 2 * Kk
    cos_half = np.sqrt(p)
    sin_b = 2 * k * cos_half
    cos_b = 2 * p - 1
    dKdk = Ek / (k * p) - Kk / k
    rp = dKdk * cos_half
    ab = -r * rp * sin_b - 0.5 * r * r * (1 + cos_b)
    bc = -r * rp * sin_b + 0.5 * r * r * (1 - cos_b)
    ca = -r * rp * sin_b
    a = np.sqrt(ab * ca / bc)
    return a, ab / a, ca / a


@dataclass(frozen=True)
class AHProfile:
    """Tabulated Atiyah-Hitchin coefficients with dense interpolation."""

    eta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    f: np.ndarray
    r: np.ndarray
    tolerance: float
    trajectory: OdeTrajectory = field(repr=False)
    bolt_eta: float = BOLT_ETA
    bolt_scale: float = np.pi

    @property
    def eta_max(self) -> float:
        return float(self.eta[-1])

    def __call__(self, eta):
        """``(a, b, c, f, r)`` at ``eta`` (array-valued, inside the table)."""
        eta = np.asarray(eta, dtype=float)
        if np.any(eta < self.bolt_eta) or np.any(eta > self.eta_max):
            raise DomainError(f"eta outside the tabulated range [pi, {self.eta_max}]")
        out = np.empty(eta.shape + (5,))
        near = eta < self.eta[0]
        if np.any(near):
            s = eta[near] - np.pi
            a, b, c = near_bolt_series(s)
            out[near] = np.stack([a, b, c, -b / eta[near],
                                  np.vectorize(_series_radius)(s)], axis=-1)
        far = ~near
        if np.any(far):
            y = np.atleast_2d(self.trajectory(eta[far]).T)
            out[far, :3] = y[:, :3]
            out[far, 3] = -y[:, 1] / eta[far]
            out[far, 4] = y[:, 3]
        return out

    def radius(self, eta):
        return self(eta)[..., 4]

    def first_integral_drift(self) -> float:
        return float(np.max(np.abs(first_integral(self.eta, self.a, self.b, self.c) - 1.0)))

    def ode_residual(self, samples_per_step: int = 2) -> float:
        """Max ``|y' - F(y)|`` of the dense output at interior points of each step."""
        t = self.eta
        worst = 0.0
        for frac in np.linspace(0, 1, samples_per_step + 2)[1:-1]:
            tm = t[:-1] + frac * np.diff(t)
            dt = 1e-2 * np.diff(t)
            Y = self.trajectory
            yp = (8 * (Y(tm + dt) - Y(tm - dt)) - (Y(tm + 2 * dt) - Y(tm - 2 * dt))) / (12 * dt)
            y = self.trajectory(tm)
            F = ah_rhs(tm, y)
            scale = 1.0 + np.abs(F)
            worst = max(worst, float(np.max(np.abs(yp - F) / scale)))
        return worst

    def vanishing_coefficient(self) -> str:
        """Name of the coefficient that vanishes at the bolt."""
        vals = dict(zip("abc", near_bolt_series(0.0)))
        zero = [k for k, v in vals.items() if abs(v) < 1e-14]
        if len(zero) != 1:
            raise OdeError("expected exactly one coefficient to vanish at the bolt")
        return zero[0]

    def alf_deviation(self) -> float:
        """Relative distance of the fibre coefficient from its limit at the table end."""
        return float(abs(self.a[-1] / ALF_LIMIT - 1.0))

    def bolt_area(self) -> float:
        """Area of the RP^2 bolt with the induced metric ``pi^2`` times round."""
        return 2 * np.pi * self.bolt_scale**2

    def to_text(self) -> str:
        lines = [f"# AHProfile convention_table_version={CONVENTION_TABLE_VERSION} "
                 f"bolt_eta={self.bolt_eta!r} bolt_scale={self.bolt_scale!r} "
                 f"tolerance={self.tolerance!r}",
                 "eta a b c f r"]
        for row in zip(self.eta, self.a, self.b, self.c, self.f, self.r):
            lines.append(" ".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())

    @staticmethod
    def read_table(path) -> dict[str, np.ndarray]:
        with open(path, encoding="ascii") as fh:
            header = fh.readline()
            if not header.startswith("# AHProfile"):
                raise ValueError("not an AHProfile table")
            names = fh.readline().split()
            data = np.loadtxt(fh, ndmin=2)
        return {n: data[:, i] for i, n in enumerate(names)}


def ah_profile(tolerance: float = 1e-12, eta_max: float = 200.0,
               start_offset: float = 1e-3) -> AHProfile:
    """Integrate the profile outward from the bolt."""
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    if not eta_max > np.pi + start_offset:
        raise ValueError("eta_max must exceed the starting point")
    return _cached_profile(float(tolerance), float(eta_max), float(start_offset))


@lru_cache(maxsize=8)
def _cached_profile(tolerance, eta_max, start_offset):
    s0 = start_offset
    a0, b0, c0 = near_bolt_series(s0)
    y0 = [a0, b0, c0, _series_radius(s0)]
    try:
        traj = rk_integrate(ah_rhs, y0, (np.pi + s0, eta_max), tol=tolerance)
    except OdeError as exc:
        raise OdeError(f"Atiyah-Hitchin profile integration failed: {exc}") from exc
    eta = traj.t
    a, b, c, r = traj.y.T
    return AHProfile(eta=eta, a=a, b=b, c=c, f=-b / eta, r=r, tolerance=tolerance,
                     trajectory=traj)


def _sigma_matrix(th, ps):
    """Rows: left-invariant forms s1, s2, s3 in ``(dtheta, dphi, dpsi)`` components."""
    st, ct = np.sin(th), np.cos(th)
    sp, cp = np.sin(ps), np.cos(ps)
    z = np.zeros_like(th)
    return np.stack([
        np.stack([-sp, cp * st, z], -1),
        np.stack([cp, sp * st, z], -1),
        np.stack([z, ct, z + 1.0], -1),
    ], -2)


class AtiyahHitchin(Target):
    """Metric-only target.

    Charts: ``"euler"`` with coordinates ``(eta, theta, phi, psi)`` away from the
    bolt, and ``"bolt"`` with ``(eta, u1, u2, u3)`` where ``u`` is the bolt axis
    (a unit vector with its sign normalised) used for points of the bolt.
    """

    target_id = "ah"
    closed_form = False
    has_permuting_action = False

    def __init__(self, profile: AHProfile | None = None, chart: str = "euler"):
        if chart not in ("euler", "bolt"):
            raise ValueError(f"unknown Atiyah-Hitchin chart {chart!r}")
        self.profile = profile if profile is not None else ah_profile()
        self.chart_id = chart

    @property
    def domain_description(self):
        if self.chart_id == "euler":
            return f"pi < eta <= {self.profile.eta_max:g}, 0 < theta < pi"
        return "eta = pi and |u| = 1 with the first nonzero entry of u positive"

    def _domain_mask(self, p):
        eta = p[..., 0]
        if self.chart_id == "euler":
            th = p[..., 1]
            return ((eta > np.pi) & (eta <= self.profile.eta_max)
                    & (np.sin(th) > 1e-9) & (th > 0) & (th < np.pi))
        u = p[..., 1:]
        return (eta == np.pi) & (np.abs(np.sum(u**2, axis=-1) - 1.0) < 1e-12) & _normalised(u)

    def metric(self, p):
        if self.chart_id != "euler":
            raise UnsupportedError("the bolt chart carries no 4-dimensional metric")
        p = np.asarray(p, dtype=float)
        prof = self.profile(p[..., 0])
        a, b, c, f = (prof[..., k] for k in range(4))
        S = _sigma_matrix(p[..., 1], p[..., 3])
        coef = np.stack([a**2, b**2, c**2], -1)
        ang = np.einsum("...ki,...k,...kj->...ij", S, coef, S)
        G = np.zeros(p.shape[:-1] + (4, 4))
        G[..., 0, 0] = f**2
        G[..., 1:, 1:] = ang
        return G

    def structures(self, p):
        raise UnsupportedError(
            "Atiyah-Hitchin: no explicit complex structures are available for this target")

    def radius(self, p):
        p = np.asarray(p, dtype=float)
        eta = p[..., 0]
        if np.any(eta < np.pi) or np.any(eta > self.profile.eta_max):
            raise DomainError(f"eta outside [pi, {self.profile.eta_max:g}]")
        return self.profile.radius(eta)

    def bolt_metric(self, u, du):
        """Induced bolt metric ``pi^2 |du|^2`` for tangent ``du`` at axis ``u``."""
        return self.profile.bolt_scale**2 * np.sum(np.asarray(du) ** 2, axis=-1)

    def bolt_point(self, x):
        """Bolt-chart coordinates of the axis spanned by unit vectors ``x``."""
        x = np.asarray(x, dtype=float)
        u = normalise_axis(x)
        return np.concatenate([np.full(x.shape[:-1] + (1,), np.pi), u], axis=-1)

    def __repr__(self):
        return f"AtiyahHitchin(chart={self.chart_id!r})"


def normalise_axis(x):
    """Pick the representative of ``+-x`` whose first nonzero entry is positive."""
    x = np.asarray(x, dtype=float)
    sign = np.ones(x.shape[:-1])
    undecided = np.ones(x.shape[:-1], dtype=bool)
    for k in range(x.shape[-1]):
        xk = x[..., k]
        pick = undecided & (xk != 0)
        sign = np.where(pick, np.sign(xk), sign)
        undecided &= ~pick
    return x * sign[..., None]


def _normalised(u):
    return np.all(normalise_axis(u) == u, axis=-1)
