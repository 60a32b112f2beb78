"""Sections over the flat 3-torus and the three-dimensional Fueter operator.

A section stores chart coordinates at the nodes of a :class:`Grid3`. Sections
may carry a constant *winding* ``W`` (shape ``(3, 4)``): the stored values are
``P(x) + x @ W / L`` with ``P`` periodic. Derivatives are taken of ``P`` with
wrap-aware differences in periodic chart coordinates, so both linear maps and
maps winding around a circle fibre are representable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .numerics import BallQuadrature, Grid3, fd_weights, integrate_torus
from .targets import DomainError, FlatH, Target, UnsupportedError, chart_jacobian, left_matrix

__all__ = [
    "FrameIdent",
    "Section3",
    "EnergyReport",
    "ConcentrationReport",
    "ContainmentError",
    "fueter_residual",
    "section_derivatives",
    "energy",
    "lambda_integral",
    "lambda_stokes",
    "energy_identity_report",
    "lambda_sign_self_test",
    "energy_bound_check",
    "concentration_scan",
    "random_smooth_section",
    "flat_linear_fueter",
]

CHUNK = 32768


class ContainmentError(DomainError):
    """A section leaves the prescribed compact set."""


@dataclass(frozen=True)
class FrameIdent:
    """Constant identification ``e_i -> I(e_i) = sum_a R[i, a] I_a`` with ``R`` in SO(3)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-12 or np.linalg.det(R) < 0:
            raise ValueError("rotation must be orthogonal with determinant +1 (keeps I1 I2 = I3)")
        object.__setattr__(self, "rotation", R)

    def structures(self, target: Target, p):
        return np.einsum("ia,...ajk->...ijk", self.rotation, target.structures(p))

    def kahler_forms(self, target: Target, p):
        return np.einsum("ia,...ajk->...ijk", self.rotation, target.kahler_forms(p))

    def primitives(self, target: Target, p):
        return np.einsum("ia,...aj->...ij", self.rotation, target.primitives(p))

    @classmethod
    def random(cls, rng) -> "FrameIdent":
        from scipy.spatial.transform import Rotation

        return cls(Rotation.random(random_state=rng).as_matrix())


class Section3:
    """Grid-sampled section of the trivial bundle ``T^3 x X``."""

    def __init__(self, grid: Grid3, values, target: Target, frame: FrameIdent | None = None,
                 winding=None, *, tear_threshold: float | None = 1.0):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape + (4,):
            raise ValueError(f"values must have shape {grid.shape + (4,)}, got {values.shape}")
        self.grid = grid
        self.values = values
        self.target = target
        self.frame = frame if frame is not None else FrameIdent()
        self.winding = np.zeros((3, 4)) if winding is None else np.array(winding, dtype=float)
        if self.winding.shape != (3, 4):
            raise ValueError("winding must have shape (3, 4)")
        target.check_domain(values)
        if tear_threshold is not None:
            jump = self.max_neighbour_jump()
            if jump > tear_threshold:
                raise DomainError(
                    f"section tears: neighbour jump {jump:.3g} exceeds threshold {tear_threshold:g}")

    # construction helpers
    @classmethod
    def from_function(cls, grid: Grid3, fun, target: Target, winding=None, **kw) -> "Section3":
        """Sample ``fun(x)`` with ``x`` of shape ``(n, n, n, 3)``."""
        return cls(grid, fun(grid.coords()), target, winding=winding, **kw)

    @classmethod
    def constant(cls, grid: Grid3, point, target: Target, **kw) -> "Section3":
        vals = np.broadcast_to(np.asarray(point, dtype=float), grid.shape + (4,))
        return cls(grid, vals, target, **kw)

    def with_values(self, values) -> "Section3":
        return Section3(self.grid, values, self.target, self.frame, self.winding,
                        tear_threshold=None)

    def copy(self) -> "Section3":
        return self.with_values(self.values.copy())

    # periodic structure
    def _linear_part(self) -> np.ndarray:
        return self.grid.coords() @ self.winding / self.grid.L

    def periodic_part(self) -> np.ndarray:
        return self.values - self._linear_part()

    def _diff(self, a, b):
        return self.target.chart_difference(a, b)

    def max_neighbour_jump(self) -> float:
        P = self.periodic_part()
        worst = 0.0
        for ax in range(3):
            d = self._diff(np.roll(P, -1, axis=ax), P)
            worst = max(worst, float(np.abs(d).max()))
        return worst

    def derivative(self, axis: int, order: int = 4) -> np.ndarray:
        P = self.periodic_part()
        out = np.zeros_like(P)
        for off, w in fd_weights(order).items():
            out += w * self._diff(np.roll(P, -off, axis=axis), P)
        return out / self.grid.h + self.winding[axis] / self.grid.L

    def __repr__(self):
        return (f"Section3(n={self.grid.n}, L={self.grid.L}, target={self.target.target_id!r}, "
                f"winding={'yes' if np.any(self.winding) else 'no'})")


def section_derivatives(s: Section3, order: int = 4) -> np.ndarray:
    """``d_i f`` stacked as ``(3, n, n, n, 4)``."""
    return np.stack([s.derivative(i, order) for i in range(3)])


def _chunks(total):
    for start in range(0, total, CHUNK):
        yield slice(start, min(start + CHUNK, total))


def _apply(M, v):
    """``M v`` for a constant ``(4, 4)`` or per-node ``(n, 4, 4)`` matrix."""
    if M.ndim == 2:
        return v @ M.T
    return np.matmul(M, v[..., None])[..., 0]


def _node_data(s: Section3, p, what):
    """Metric, rotated structures or forms at nodes; constant targets return one copy."""
    if s.target.constant_structures:
        p = p[:1]
    if what == "G":
        out = s.target.metric(p)
    elif what == "I":
        out = s.frame.structures(s.target, p)
    else:
        out = s.frame.kahler_forms(s.target, p)
    return out[0] if s.target.constant_structures else out


def _pointwise(s: Section3, D=None, need=("F", "grad", "lam")):
    """Per-node densities; all arrays flattened over nodes."""
    if D is None:
        D = section_derivatives(s)
    N = s.grid.n**3
    P = s.values.reshape(N, 4)
    Df = D.reshape(3, N, 4)
    out = {k: np.empty(N) for k in need if k != "F"}
    if "F" in need:
        out["F"] = np.empty((N, 4))
    for sl in _chunks(N):
        p = P[sl]
        G = _node_data(s, p, "G")
        d = Df[:, sl]
        if "F" in need or "fnorm" in need:
            I = _node_data(s, p, "I")
            F = sum(_apply(I[..., i, :, :], d[i]) for i in range(3))
            if "F" in need:
                out["F"][sl] = F
            if "fnorm" in need:
                out["fnorm"][sl] = np.sum(F * _apply(G, F), axis=-1)
        if "grad" in need:
            out["grad"][sl] = sum(np.sum(d[i] * _apply(G, d[i]), axis=-1) for i in range(3))
        if "lam" in need:
            om = _node_data(s, p, "om")
            lam = np.zeros(len(p))
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                lam += np.sum(d[j] * _apply(om[..., i, :, :], d[k]), axis=-1)
            out["lam"][sl] = lam
    return out


def fueter_residual(s: Section3) -> np.ndarray:
    """``sum_i I(e_i) d_i f`` at every node, shape ``(n, n, n, 4)``."""
    return _pointwise(s, need=("F",))["F"].reshape(s.grid.shape + (4,))


def _integrate(flat, s):
    return float(integrate_torus(flat.reshape(s.grid.shape), s.grid))


def energy(s: Section3) -> float:
    """Dirichlet energy ``1/2 int |df|^2``."""
    return 0.5 * _integrate(_pointwise(s, need=("grad",))["grad"], s)


def lambda_integral(s: Section3) -> float:
    """``int sum_i omega_{I_i}(d_{i+1} f, d_{i+2} f)`` with the same stencils as the residual."""
    if not s.target.closed_form:
        raise UnsupportedError(f"{s.target.target_id}: Kähler forms unavailable")
    return _integrate(_pointwise(s, need=("lam",))["lam"], s)


def lambda_stokes(s: Section3, D=None) -> float | None:
    """Boundary evaluation of ``int Lambda`` through the primitives.

    ``Lambda = d gamma`` with ``gamma_{bc} = -alpha_b(d_c f) + alpha_c(d_b f)``, so on the
    torus only the jumps of ``gamma`` across the period faces survive; they vanish
    unless the section winds. Returns ``None`` for targets without primitives.
    """
    if not s.target.has_permuting_action:
        return None
    if not np.any(s.winding):
        return 0.0
    if D is None:
        D = section_derivatives(s)
    h = s.grid.h
    total = 0.0
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        face = np.take(s.values, 0, axis=a).reshape(-1, 4)
        db = np.take(D[b], 0, axis=a).reshape(-1, 4)
        dc = np.take(D[c], 0, axis=a).reshape(-1, 4)
        jump = 0.0
        for shift, sign in ((s.winding[a], 1.0), (0.0, -1.0)):
            al = s.frame.primitives(s.target, face + shift)
            g = -np.einsum("ni,ni->n", al[:, b], dc) + np.einsum("ni,ni->n", al[:, c], db)
            jump = jump + sign * g
        total += float(np.sum(jump)) * h * h
    return total


@dataclass
class EnergyReport:
    grad_norm2: float
    fueter_norm2: float
    lambda_integral: float
    lambda_stokes: float | None
    defect: float
    algebraic_defect: float
    h: float
    n: int
    lambda_sign: int = 1
    target: str = ""

    @property
    def relative_defect(self) -> float:
        return self.defect / self.grad_norm2 if self.grad_norm2 > 0 else self.defect

    def to_json(self) -> str:
        d = asdict(self)
        d["relative_defect"] = self.relative_defect
        return json.dumps(d, indent=2, sort_keys=True)


def energy_identity_report(s: Section3) -> EnergyReport:
    """``|df|^2 = |F f|^2 - 2 int Lambda`` with every term on the same grid.

    ``algebraic_defect`` uses the pointwise Lambda density built from the same
    difference quotients as the other two terms, so it only measures rounding.
    ``defect`` uses the boundary (primitive) evaluation of ``int Lambda``, which is
    independent of the interior stencils; it converges to zero with the grid.
    """
    D = section_derivatives(s)
    pw = _pointwise(s, D, need=("fnorm", "grad", "lam"))
    g2 = _integrate(pw["grad"], s)
    f2 = _integrate(pw["fnorm"], s)
    lam = _integrate(pw["lam"], s)
    st = lambda_stokes(s, D)
    alg = abs(g2 - f2 + 2 * lam)
    defect = abs(g2 - f2 + 2 * st) if st is not None else alg
    return EnergyReport(g2, f2, lam, st, defect, alg, s.grid.h, s.grid.n,
                        target=s.target.target_id)


def lambda_sign_self_test(s: Section3) -> int:
    """Sign ``sigma`` that makes ``|df|^2 - |F f|^2 + 2 sigma int Lambda`` vanish."""
    D = section_derivatives(s)
    pw = _pointwise(s, D, need=("fnorm", "grad", "lam"))
    g2, f2, lam = (_integrate(pw[k], s) for k in ("grad", "fnorm", "lam"))
    errs = {sg: abs(g2 - f2 + 2 * sg * lam) for sg in (1, -1)}
    best = min(errs, key=errs.get)
    if errs[-best] <= 10 * errs[best]:
        raise ValueError("section too degenerate to pin the sign (Lambda ~ 0)")
    return best


@dataclass
class BoundReport:
    grad_l2: float
    k_radius: float
    ratio: float
    image_radius: float
    energy: float
    lambda_integral: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def energy_bound_check(s: Section3, k_radius: float) -> BoundReport:
    """Measure ``|df|_{L^2} / r(K)`` after checking the image lies in ``{r <= r(K)}``."""
    if not k_radius > 0:
        raise ValueError("k_radius must be positive")
    r = s.target.radius(s.values)
    bad = np.argwhere(r > k_radius)
    if len(bad):
        listed = ", ".join(str(tuple(int(i) for i in b)) for b in bad[:10])
        raise ContainmentError(
            f"{len(bad)} node(s) have r(f) > {k_radius:g}; first: {listed}")
    D = section_derivatives(s)
    pw = _pointwise(s, D, need=("grad", "lam"))
    g2 = _integrate(pw["grad"], s)
    lam = _integrate(pw["lam"], s)
    return BoundReport(np.sqrt(g2), float(k_radius), np.sqrt(g2) / k_radius, float(r.max()),
                       0.5 * g2, lam)


@dataclass
class ConcentrationReport:
    radii: np.ndarray
    centers: np.ndarray  # (m, 3)
    values: np.ndarray  # (m, len(radii))
    eps0: float
    flagged: np.ndarray  # indices into centers

    def to_json(self) -> str:
        return json.dumps({
            "radii": self.radii.tolist(), "eps0": self.eps0,
            "flagged": [self.centers[i].tolist() for i in self.flagged],
            "max_value": float(self.values.max()) if self.values.size else 0.0,
        }, indent=2, sort_keys=True)


def concentration_scan(s: Section3, radii, eps0: float = 1e-2, centers=None,
                       stride: int | None = None, n_radial: int = 4, n_theta: int = 8,
                       n_phi: int = 16) -> ConcentrationReport:
    """Scaled energies ``(1/r) int_{B_r(c)} |df|^2`` around grid centres.

    The energy density is sampled by periodic trilinear interpolation. With no
    ``centers`` given, every ``stride``-th node along each axis is used.
    """
    radii = np.sort(np.atleast_1d(np.asarray(radii, dtype=float)))
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if radii.max() >= s.grid.L / 4:
        raise ValueError(f"radius {radii.max():g} is not below L/4 = {s.grid.L / 4:g}")
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    dens = _pointwise(s, need=("grad",))["grad"].reshape(s.grid.shape)
    if centers is None:
        stride = stride or max(1, s.grid.n // 8)
        idx = np.arange(0, s.grid.n, stride) * s.grid.h
        centers = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), -1).reshape(-1, 3)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    quad = BallQuadrature((0.0, 0.0, 0.0), tuple(radii), n_radial=n_radial,
                          n_theta=n_theta, n_phi=n_phi)
    dirs, wang = quad.angular_rule()
    vals = np.zeros((len(centers), len(radii)))
    acc = np.zeros(len(centers))
    for k, (rho, wr) in enumerate(quad.segments()):
        off = (rho[:, None, None] * dirs[None]).reshape(-1, 3)
        w = ((wr * rho**2)[:, None] * wang[None]).ravel()
        pts = (centers[:, None, :] + off[None]) / s.grid.h
        sampled = map_coordinates(dens, pts.reshape(-1, 3).T, order=1, mode="grid-wrap")
        acc = acc + sampled.reshape(len(centers), -1) @ w
        vals[:, k] = acc / radii[k]
    flagged = np.flatnonzero(vals[:, 0] > eps0)
    return ConcentrationReport(radii, centers, vals, float(eps0), flagged)


def random_smooth_section(grid: Grid3, target: Target, rng, *, base=None, amplitude=0.1,
                          kmax: int = 2, modes: int = 6, winding=None, **kw) -> Section3:
    """Constant ``base`` plus a few random low Fourier modes in every chart coordinate."""
    rng = np.random.default_rng(rng)
    if base is None:
        base = {"flat": np.zeros(4), "taubnut": np.array([1.2, 0.7, 1.5, np.pi])}.get(
            target.target_id, np.array([0.3, 0.2, 0.0, 1.0]))
    x = grid.coords() * (2 * np.pi / grid.L)
    vals = np.broadcast_to(np.asarray(base, dtype=float), grid.shape + (4,)).copy()
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (4,))
    for c in range(4):
        for _ in range(modes):
            k = rng.integers(-kmax, kmax + 1, size=3)
            phase = rng.uniform(0, 2 * np.pi)
            vals[..., c] += amp[c] / modes * rng.normal() * np.cos(x @ k + phase)
    if winding is not None:
        vals += grid.coords() @ np.asarray(winding, dtype=float) / grid.L
    return Section3(grid, vals, target, winding=winding, **kw)


def flat_linear_fueter(grid: Grid3, scale: float = 1.0) -> Section3:
    """``f(x) = scale (x1 i + x2 j - 2 x3 k)`` as a winding section on the flat target."""
    W = scale * grid.L * np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, -2.0]])
    return Section3(grid, grid.coords() @ W / grid.L, FlatH(), winding=W)

