"""Shared discrete machinery: periodic differences, torus/ball quadrature, ODEs.

Everything here is pure; callers own their arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import RK45, OdeSolution

__all__ = [
    "Grid3",
    "PeriodicityError",
    "QuadratureError",
    "OdeError",
    "fd_partial",
    "fd_weights",
    "integrate_torus",
    "BallQuadrature",
    "integrate_ball",
    "OdeTrajectory",
    "rk_integrate",
    "corrected_midpoint_weights",
]


class PeriodicityError(ValueError):
    """Input to a periodic stencil does not look periodic."""


class QuadratureError(RuntimeError):
    """An integrand failed at a quadrature node."""


class OdeError(RuntimeError):
    """Adaptive integration broke down."""


@dataclass(frozen=True)
class Grid3:
    """Uniform periodic grid with ``n`` nodes per axis on a cube of side ``L``."""

    n: int
    L: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n, n, n, 3)``."""
        x = self.axis()
        return np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)


_STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((1, 8 / 12), (-1, -8 / 12), (2, -1 / 12), (-2, 1 / 12)),
}


def fd_weights(order: int) -> dict[int, float]:
    """Offsets and weights of the central first-derivative stencil (unit spacing)."""
    if order not in _STENCILS:
        raise ValueError(f"order must be 2 or 4, got {order!r}")
    return dict(_STENCILS[order])


def _check_periodic(field: np.ndarray, axis: int) -> None:
    f = np.moveaxis(np.asarray(field), axis, 0)
    if f.shape[0] < 3:
        raise PeriodicityError("need at least 3 nodes along a periodic axis")
    interior = np.abs(np.diff(f, axis=0)).max()
    wrap = np.abs(f[0] - f[-1]).max()
    scale = max(np.abs(f).max(), 1.0)
    if wrap > 3.0 * interior + 1e-12 * scale:
        raise PeriodicityError(
            f"wrap-around jump {wrap:.3g} exceeds 3x the largest interior step "
            f"{interior:.3g} along axis {axis}; field is not periodic"
        )


def fd_partial(field, axis: int, order: int = 4, spacing: float = 1.0,
               check_periodic: bool = True) -> np.ndarray:
    """Central-difference derivative of a periodic sampled field along ``axis``.

    Trailing (component) axes are carried along untouched.
    """
    field = np.asarray(field, dtype=float)
    weights = fd_weights(order)
    if check_periodic:
        _check_periodic(field, axis)
    out = np.zeros_like(field)
    for offset, w in weights.items():
        out += w * np.roll(field, -offset, axis=axis)
    return out / spacing


def integrate_torus(field, grid: Grid3) -> np.ndarray | float:
    """Midpoint (rectangle) rule over the periodic cube; sums the first three axes."""
    field = np.asarray(field, dtype=float)
    if field.shape[:3] != grid.shape:
        raise ValueError(f"field shape {field.shape[:3]} does not match grid {grid.shape}")
    return field.sum(axis=(0, 1, 2)) * grid.h**3


def corrected_midpoint_weights(n: int, a: float, b: float, r: int | None = None) -> np.ndarray:
    """Weights for ``n`` cell-centred nodes on ``[a, b]`` with endpoint corrections.

    The first and last ``r`` weights are adjusted (symmetrically) so that even
    monomials up to degree ``2r - 2`` about the midpoint are integrated exactly;
    odd ones are exact by symmetry. Interior weights stay equal to ``h``.
    """
    if r is None:
        r = 6 if n >= 32 else 4
    if n < 2 * r:
        raise ValueError(f"need n >= {2 * r} nodes for r={r}")
    t = (np.arange(n) + 0.5) / n * 2.0 - 1.0  # nodes on [-1, 1]
    base = np.full(n, 2.0 / n)
    idx = np.arange(r)
    # corrections c_k applied to node k and its mirror n-1-k
    A = np.empty((r, r))
    rhs = np.empty(r)
    for row in range(r):
        p = 2 * row
        exact = 2.0 / (p + 1)
        rhs[row] = exact - np.sum(base * t**p)
        A[row] = 2.0 * t[idx] ** p
    c = np.linalg.solve(A, rhs)
    w = base.copy()
    w[idx] += c
    w[n - 1 - idx] += c
    return w * (b - a) / 2.0


@dataclass(frozen=True)
class BallQuadrature:
    """Shell-product rule on nested balls (or an annulus) about ``center``.

    Each radial segment between consecutive entries of ``[inner] + radii`` gets
    ``n_radial`` Gauss-Legendre nodes; each shell carries Gauss-Legendre in
    ``cos(theta)`` times a uniform ``phi`` rule.
    """

    center: tuple[float, float, float]
    radii: tuple[float, ...]
    inner: float = 0.0
    n_radial: int = 8
    n_theta: int = 16
    n_phi: int = 32

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        edges = (self.inner,) + self.radii
        if self.inner < 0 or np.any(np.diff(edges) <= 0):
            raise ValueError("radii must be strictly increasing and exceed the inner radius")

    def angular_rule(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit directions ``(m, 3)`` and weights summing to ``4*pi``."""
        mu, wmu = np.polynomial.legendre.leggauss(self.n_theta)
        phi = (np.arange(self.n_phi) + 0.5) * 2 * np.pi / self.n_phi
        wphi = np.full(self.n_phi, 2 * np.pi / self.n_phi)
        MU, PHI = np.meshgrid(mu, phi, indexing="ij")
        s = np.sqrt(1 - MU**2)
        dirs = np.stack([s * np.cos(PHI), s * np.sin(PHI), MU], axis=-1).reshape(-1, 3)
        w = np.outer(wmu, wphi).ravel()
        return dirs, w

    def segments(self):
        """Yield ``(rho_nodes, rho_weights)`` for each radial segment."""
        x, wx = np.polynomial.legendre.leggauss(self.n_radial)
        edges = (self.inner,) + self.radii
        for lo, hi in zip(edges[:-1], edges[1:]):
            yield 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * wx

    def shell_weights(self, rho: float) -> np.ndarray:
        return self.angular_rule()[1] * rho**2


def integrate_ball(evaluator: Callable[[np.ndarray], np.ndarray],
                   quad: BallQuadrature) -> np.ndarray:
    """Cumulative integrals of ``evaluator`` over the balls (annuli) of ``quad``.

    Entry ``k`` is the integral from the inner radius out to ``quad.radii[k]``;
    annulus values follow by differencing.
    """
    if len(quad.radii) == 0:
        return np.zeros(0)
    dirs, wang = quad.angular_rule()
    c = np.asarray(quad.center)
    totals = []
    acc = 0.0
    for rho, wr in quad.segments():
        pts = c + rho[:, None, None] * dirs[None, :, :]
        flat = pts.reshape(-1, 3)
        vals = _safe_eval(evaluator, flat)
        vals = vals.reshape(len(rho), len(wang), *vals.shape[1:])
        w = (wr * rho**2)[:, None] * wang[None, :]
        acc = acc + np.tensordot(w, vals, axes=([0, 1], [0, 1]))
        totals.append(acc)
    return np.asarray(totals)


def _safe_eval(evaluator, pts: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(evaluator(pts), dtype=float)
    except Exception as exc:
        for p in pts:
            try:
                evaluator(p[None, :])
            except Exception:
                raise QuadratureError(f"integrand failed at node {p.tolist()}: {exc}") from exc
        raise
    bad = ~np.isfinite(vals.reshape(len(pts), -1)).all(axis=1)
    if bad.any():
        p = pts[np.argmax(bad)]
        raise QuadratureError(f"integrand is not finite at node {p.tolist()}")
    return vals


@dataclass
class OdeTrajectory:
    """Accepted steps of an adaptive run, with dense output over the span."""

    t: np.ndarray
    y: np.ndarray  # (len(t), dim)
    local_error: np.ndarray  # scaled error norm per accepted step (first entry 0)
    sol: OdeSolution = field(repr=False)

    def __call__(self, t):
        return self.sol(t)


def rk_integrate(fun: Callable[[float, np.ndarray], np.ndarray], y0: Sequence[float],
                 span: tuple[float, float], tol: float = 1e-10,
                 max_steps: int = 1_000_000) -> OdeTrajectory:
    """Dormand-Prince 5(4) with step control ``rtol = atol = tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    t0, t1 = span
    solver = RK45(fun, t0, y0, t1, rtol=tol, atol=tol)
    ts, ys, errs, interps = [t0], [y0.copy()], [0.0], []
    for _ in range(max_steps):
        if solver.status != "running":
            break
        y_prev = solver.y.copy()
        msg = solver.step()
        if solver.status == "failed":
            raise OdeError(f"step-size underflow near t={solver.t!r}: {msg}")
        h = solver.t - solver.t_old
        err = h * (solver.K.T @ solver.E)
        scale = tol + np.maximum(np.abs(y_prev), np.abs(solver.y)) * tol
        errs.append(float(np.sqrt(np.mean((err / scale) ** 2))))
        ts.append(solver.t)
        ys.append(solver.y.copy())
        interps.append(solver.dense_output())
        if not np.all(np.isfinite(solver.y)):
            raise OdeError(f"non-finite state at t={solver.t!r}")
    else:
        raise OdeError(f"step budget exhausted at t={solver.t!r}")
    ts = np.asarray(ts)
    sol = OdeSolution(ts, interps)
    return OdeTrajectory(ts, np.asarray(ys), np.asarray(errs), sol)
