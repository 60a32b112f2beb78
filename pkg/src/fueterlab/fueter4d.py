"""Four-dimensional Fueter operator on the flat 4-torus.

Coordinates are ``(x0, x1, x2, x3)`` with ``x0`` the cylinder (time) direction.
The self-dual frame is ``Omega^i = dx0 ^ dxi + dxj ^ dxk`` (cyclic); ``iota_i`` is
the skew endomorphism of the tangent space attached to ``Omega^i``, signed so
that ``iota_1 iota_2 = iota_3``. With this sign ``iota_i e_0 = e_i``, so the
``e_0`` column of the operator is the evolution residual ``d_0 f - sum I_i d_i f``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np

from .fields3d import FrameIdent, Section3, fueter_residual
from .numerics import fd_weights
from .targets import Target, UnsupportedError

__all__ = [
    "SelfDualFrame",
    "Grid4",
    "Section4",
    "fueter4_residual",
    "energy_identity4",
    "EnergyReport4",
    "cylinder_reduction",
    "CylinderReport",
    "trajectory_residual",
    "TrajectoryReport",
    "random_section4",
]

CHUNK = 32768


class SelfDualFrame:
    """Constant frame ``Omega^1, Omega^2, Omega^3`` and the endomorphisms ``iota_i``."""

    def __init__(self):
        A = np.zeros((3, 4, 4))
        for i in range(3):
            j, k = (i + 1) % 3 + 1, (i + 2) % 3 + 1
            a = i + 1
            A[i, 0, a], A[i, a, 0] = 1.0, -1.0
            A[i, j, k], A[i, k, j] = 1.0, -1.0
        self.omegas = A  # A[i, mu, nu] = Omega^i(e_mu, e_nu)
        sign = 1.0 if np.allclose(A[0] @ A[1], A[2]) else -1.0
        self.iota_sign = sign
        self.iotas = sign * A  # matrices acting on tangent vectors

    def gram(self) -> np.ndarray:
        """Inner products with ``|dx0 ^ dx1|^2 = 1/2``, under which the frame is orthonormal."""
        return 0.25 * np.einsum("imn,jmn->ij", self.omegas, self.omegas)

    def relation_errors(self) -> dict:
        I4 = np.eye(4)
        t = self.iotas
        return {
            "square": float(max(np.abs(t[i] @ t[i] + I4).max() for i in range(3))),
            "product": float(np.abs(t[0] @ t[1] - t[2]).max()),
            "gram": float(np.abs(self.gram() - np.eye(3)).max()),
            "time_column": float(max(np.abs(t[i][:, 0] - I4[i + 1]).max() for i in range(3))),
        }


@dataclass(frozen=True)
class Grid4:
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
    def shape(self):
        return (self.n,) * 4

    def coords(self) -> np.ndarray:
        x = np.arange(self.n) * self.h
        return np.stack(np.meshgrid(x, x, x, x, indexing="ij"), axis=-1)


class Section4:
    """Section of ``T^4 x X``; ``winding[mu]`` is the chart increment along axis ``mu``."""

    def __init__(self, grid: Grid4, values, target: Target, frame: FrameIdent | None = None,
                 winding=None, *, tear_threshold: float | None = 1.0):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape + (4,):
            raise ValueError(f"values must have shape {grid.shape + (4,)}, got {values.shape}")
        self.grid = grid
        self.values = values
        self.target = target
        self.frame = frame if frame is not None else FrameIdent()
        self.sd = SelfDualFrame()
        self.winding = np.zeros((4, 4)) if winding is None else np.array(winding, dtype=float)
        if self.winding.shape != (4, 4):
            raise ValueError("winding must have shape (4, 4)")
        target.check_domain(values)
        if tear_threshold is not None:
            P = self.periodic_part()
            for ax in range(4):
                jump = np.abs(target.chart_difference(np.roll(P, -1, axis=ax), P)).max()
                if jump > tear_threshold:
                    raise ValueError(f"section tears along axis {ax}: jump {jump:.3g}")

    def periodic_part(self):
        return self.values - self.grid.coords() @ self.winding / self.grid.L

    def derivative(self, axis: int, order: int = 4) -> np.ndarray:
        P = self.periodic_part()
        out = np.zeros_like(P)
        for off, w in fd_weights(order).items():
            out += w * self.target.chart_difference(np.roll(P, -off, axis=axis), P)
        return out / self.grid.h + self.winding[axis] / self.grid.L

    @cached_property
    def gradient(self) -> np.ndarray:
        """``(d_0 f, .., d_3 f)``, shape ``(4,) + grid.shape + (4,)``."""
        return np.stack([self.derivative(a) for a in range(4)])

    def __repr__(self):
        return f"Section4(n={self.grid.n}, L={self.grid.L}, target={self.target.target_id!r})"


def _node_mats(s: Section4, p):
    """Metric, rotated structures and Kähler forms, collapsed for constant targets."""
    if s.target.constant_structures:
        p = p[:1]
    G = s.target.metric(p)
    I = s.frame.structures(s.target, p)
    W = s.frame.kahler_forms(s.target, p)
    if s.target.constant_structures:
        return G[0], I[0], W[0]
    return G, I, W


def _densities(s: Section4):
    """Per-node ``|df|^2``, ``|F4|^2``, ``Lambda_4`` and ``F4``."""
    if not s.target.closed_form:
        raise UnsupportedError(f"{s.target.target_id}: complex structures unavailable")
    N = s.grid.n**4
    D = s.gradient.reshape(4, N, 4)
    P = s.values.reshape(N, 4)
    T = s.sd.iotas
    Om = s.sd.omegas
    grad = np.empty(N)
    fn = np.empty(N)
    lam = np.empty(N)
    F = np.empty((4, N, 4))
    for st in range(0, N, CHUNK):
        sl = slice(st, min(st + CHUNK, N))
        G, I, W = _node_mats(s, P[sl])
        d = D[:, sl]  # (mu, n, 4)
        # (d f o iota_i)(e_mu) = sum_nu iota_i[nu, mu] d_nu f
        comp = np.einsum("inm,nkc->imkc", T, d)
        if I.ndim == 3:
            rot = np.einsum("iab,imkb->mka", I, comp)
        else:
            rot = np.einsum("kiab,imkb->mka", I, comp)
        Fk = d - rot
        F[:, sl] = Fk
        if G.ndim == 2:
            grad[sl] = np.einsum("mka,ab,mkb->k", d, G, d)
            fn[sl] = np.einsum("mka,ab,mkb->k", Fk, G, Fk)
            lam[sl] = 0.5 * np.einsum("imn,mka,iab,nkb->k", Om, d, W, d)
        else:
            grad[sl] = np.einsum("mka,kab,mkb->k", d, G, d)
            fn[sl] = np.einsum("mka,kab,mkb->k", Fk, G, Fk)
            lam[sl] = 0.5 * np.einsum("imn,mka,kiab,nkb->k", Om, d, W, d)
    sh = s.grid.shape
    return grad.reshape(sh), fn.reshape(sh), lam.reshape(sh), np.moveaxis(F, 0, -2).reshape(sh + (4, 4))


def fueter4_residual(s: Section4) -> np.ndarray:
    """``df - sum I_i o df o iota_i`` per node, shape ``grid.shape + (4, 4)`` (column ``mu``, fibre)."""
    return _densities(s)[3]


@dataclass
class EnergyReport4:
    grad_norm2: float
    fueter_norm2: float
    half_fueter_norm2: float
    lambda_integral: float
    lambda_stokes: float | None
    coefficient: float
    defect: float
    relative_defect: float
    fitted_coefficient: float
    algebraic_defect: float  # pointwise, for the fitted-free coefficient 1/4
    n: int

    def to_dict(self):
        return asdict(self)


def _exact_lambda(s: Section4):
    """Stokes value of ``int Lambda_4``: zero for periodic sections into exact targets."""
    if np.any(s.winding):
        return None
    if s.target.target_id == "flat" or s.target.has_permuting_action:
        return 0.0
    return None


def energy_identity4(s: Section4, coefficient: float = 0.5) -> EnergyReport4:
    """Terms of ``||df||^2 = c ||F4 f||^2 - 2 int Lambda_4`` on one grid.

    The defect uses the Stokes value of ``int Lambda_4`` when available (it is
    then zero on the torus), otherwise the quadrature value.
    """
    grad, fn, lam, _ = _densities(s)
    vol = s.grid.h**4
    g2, f2, L = grad.sum() * vol, fn.sum() * vol, lam.sum() * vol
    Ls = _exact_lambda(s)
    Luse = L if Ls is None else Ls
    defect = abs(g2 - (coefficient * f2 - 2 * Luse))
    fitted = (g2 + 2 * Luse) / f2 if f2 > 0 else float("nan")
    alg = float(np.abs(grad - (0.25 * fn - 2 * lam)).max()) if grad.size else 0.0
    return EnergyReport4(
        grad_norm2=float(g2), fueter_norm2=float(f2), half_fueter_norm2=float(0.5 * f2),
        lambda_integral=float(L), lambda_stokes=Ls, coefficient=float(coefficient),
        defect=float(defect), relative_defect=float(defect / g2) if g2 > 0 else 0.0,
        fitted_coefficient=float(fitted), algebraic_defect=alg, n=s.grid.n,
    )


@dataclass
class CylinderReport:
    fueter3_rms: float
    fueter4_rms: float
    ratio: float  # (fueter4_rms / 2) / fueter3_rms; the columns of F4 are isometric images of F3
    evolution_rms: float
    evolution_vs_fueter3: float  # max |(d_t f - sum I_i d_i f) + F3 f|


def cylinder_reduction(s3: Section3) -> tuple[Section4, CylinderReport]:
    """Lift ``s3`` to a ``t``-invariant section on ``T^4`` and compare the residuals."""
    n, L = s3.grid.n, s3.grid.L
    g4 = Grid4(n, L)
    vals = np.broadcast_to(s3.values[None], g4.shape + (4,))
    W = np.zeros((4, 4))
    W[1:] = s3.winding
    s4 = Section4(g4, vals, s3.target, s3.frame, W, tear_threshold=None)
    F3 = fueter_residual(s3)
    F4 = fueter4_residual(s4)
    G3 = s3.target.metric(s3.values)
    r3 = float(np.sqrt(np.mean(np.einsum("...a,...ab,...b->...", F3, G3, F3))))
    G4 = G3[None]
    r4 = float(np.sqrt(np.mean(np.einsum("...ma,...ab,...mb->...", F4, G4, F4))))
    evo = F4[..., 0, :]
    re = float(np.sqrt(np.mean(np.einsum("...a,...ab,...b->...", evo, G4, evo))))
    ratio = (r4 / 2) / r3 if r3 > 0 else (1.0 if r4 == 0 else float("inf"))
    return s4, CylinderReport(r3, r4, ratio, re, float(np.abs(evo + F3[None]).max()))


@dataclass
class TrajectoryReport:
    residual_sup: np.ndarray  # per interior slice
    residual: list
    endpoint_minus: float | None
    endpoint_plus: float | None


def trajectory_residual(path, dt: float, f_minus: Section3 | None = None,
                        f_plus: Section3 | None = None) -> TrajectoryReport:
    """``(f_{k+1} - f_{k-1}) / (2 dt) - sum I(e_i) d_i f_k`` for every interior slice."""
    path = list(path)
    if len(path) < 3:
        raise ValueError("a trajectory needs at least three slices")
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = path[0].grid
    if any(p.grid != g for p in path):
        raise ValueError("all slices must share one grid")
    res = []
    for k in range(1, len(path) - 1):
        a, b = path[k + 1], path[k - 1]
        dtf = a.target.chart_difference(a.values, b.values) / (2 * dt)
        res.append(dtf - fueter_residual(path[k]))
    sup = np.array([float(np.abs(r).max()) for r in res])

    def dist(x, y):
        if y is None:
            return None
        return float(np.abs(x.target.chart_difference(x.values, y.values)).max())

    return TrajectoryReport(sup, res, dist(path[0], f_minus), dist(path[-1], f_plus))


def random_section4(grid: Grid4, target: Target, rng, *, base=None, amplitude=0.1,
                    kmax: int = 2, modes: int = 6) -> Section4:
    """Constant ``base`` plus random low Fourier modes in every chart coordinate."""
    rng = np.random.default_rng(rng)
    if base is None:
        base = {"flat": np.zeros(4), "taubnut": np.array([1.2, 0.7, 1.5, np.pi])}.get(
            target.target_id, np.array([0.3, 0.2, 0.0, 1.0]))
    x = grid.coords() * (2 * np.pi / grid.L)
    vals = np.broadcast_to(np.asarray(base, dtype=float), grid.shape + (4,)).copy()
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (4,))
    for c in range(4):
        for _ in range(modes):
            k = rng.integers(-kmax, kmax + 1, size=4)
            phase = rng.uniform(0, 2 * np.pi)
            vals[..., c] += amp[c] / modes * rng.normal() * np.cos(x @ k + phase)
    return Section4(grid, vals, target)
