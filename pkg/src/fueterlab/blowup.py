"""Maps on flat balls: monotonicity profiles, density, rescaling and homogeneity.

A :class:`BallGrid` is a stack of spherical shells: the radial interval is cut
into segments at the ``edges`` and each segment carries Gauss-Legendre nodes,
while every shell reuses one cubed-sphere angular grid. Ball integrals up to an
edge are therefore shell-aligned, which keeps the ``1/rho`` weighted deficit
integrals accurate.

Values live in a target chart (4 components) or, with ``target=None``, in a
Euclidean space of any dimension.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from .atiyah_hitchin import AHProfile, AtiyahHitchin, ah_profile
from .fields3d import FrameIdent
from .spheregrid import SphereGrid
from .spheremaps import SphereMap
from .targets import DomainError, Target

__all__ = [
    "BallGrid",
    "BallMap",
    "RadialProfile",
    "DensityEstimate",
    "AxisymmetricReport",
    "monotonicity_profile",
    "density_estimate",
    "rescale",
    "homogeneity_defect",
    "radial_speed",
    "ball_fueter_residual",
    "homogeneous_extension",
    "axisymmetric_map",
    "veronese",
]

CHUNK = 4096


def _lagrange_weights(nodes, t):
    """Rows of Lagrange basis values at points ``t`` (shape ``(len(t), len(nodes))``)."""
    t = np.asarray(t, float)[:, None]
    n = len(nodes)
    W = np.ones((t.shape[0], n))
    for k in range(n):
        for l in range(n):
            if l != k:
                W[:, k] *= (t[:, 0] - nodes[l]) / (nodes[k] - nodes[l])
    return W


def _diff_matrix(nodes):
    n = len(nodes)
    w = np.array([1.0 / np.prod([nodes[j] - nodes[k] for k in range(n) if k != j]) for j in range(n)])
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = (w[j] / w[i]) / (nodes[i] - nodes[j])
        D[i, i] = -D[i].sum()
    return D


class BallGrid:
    """Shells at Gauss nodes of the segments ``[edges[k], edges[k+1]]`` about ``center``."""

    def __init__(self, sphere: SphereGrid, edges, order: int = 8, center=(0.0, 0.0, 0.0)):
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
            raise ValueError("edges must be increasing, nonnegative, at least two entries")
        if order < 2:
            raise ValueError("order must be >= 2")
        self.sphere = sphere
        self.edges = edges
        self.order = int(order)
        self.center = np.asarray(center, dtype=float)
        g, gw = np.polynomial.legendre.leggauss(self.order)
        a, b = edges[:-1, None], edges[1:, None]
        self.rho = (0.5 * (b - a) * g + 0.5 * (a + b)).ravel()
        self.segment = np.repeat(np.arange(len(edges) - 1), self.order)
        # radial weights include the rho^2 volume factor
        self.radial_weights = (0.5 * (b - a) * gw).ravel() * self.rho**2
        self._ref = g

    @classmethod
    def geometric(cls, sphere, outer, levels, ratio=2.0, order=8, center=(0.0, 0.0, 0.0)):
        """Edges ``0, outer/ratio**levels, ..., outer/ratio, outer``."""
        edges = np.concatenate([[0.0], outer / ratio ** np.arange(levels, -1, -1)])
        return cls(sphere, edges, order, center)

    def __repr__(self):
        return (f"BallGrid(m={self.sphere.m}, segments={len(self.edges) - 1}, "
                f"order={self.order}, R={self.outer:g})")

    @property
    def inner(self) -> float:
        return float(self.edges[0])

    @property
    def outer(self) -> float:
        return float(self.edges[-1])

    @property
    def shape(self):
        return (len(self.rho),) + self.sphere.shape

    @cached_property
    def points(self) -> np.ndarray:
        return self.center + self.rho[:, None, None, None, None] * self.sphere.points[None]

    @cached_property
    def _dmat(self):
        return _diff_matrix(self._ref)

    def radial_derivative(self, values, diff=None) -> np.ndarray:
        """``d/d rho`` by per-segment Gauss collocation."""
        out = np.empty(values.shape, dtype=float)
        q = self.order
        for k in range(len(self.edges) - 1):
            sl = slice(k * q, (k + 1) * q)
            v = values[sl]
            scale = 2.0 / (self.edges[k + 1] - self.edges[k])
            if diff is None:
                out[sl] = scale * np.tensordot(self._dmat, v, axes=(1, 0))
            else:
                # differences relative to each row's own value
                acc = np.zeros_like(v, dtype=float)
                for j in range(q):
                    acc += self._dmat[:, j].reshape((q,) + (1,) * (v.ndim - 1)) * diff(v[j][None], v)
                out[sl] = scale * acc
        return out

    def integrate(self, density, upto: float | None = None) -> float:
        """``int_{B_upto} density``; ``upto`` must be an edge."""
        if upto is None:
            upto = self.outer
        k = self.edge_index(upto)
        mask = self.segment < k
        ang = np.tensordot(np.asarray(density)[mask], self.sphere.weights, axes=([1, 2, 3], [0, 1, 2]))
        return float(np.dot(self.radial_weights[mask], ang))

    def edge_index(self, r) -> int:
        k = np.flatnonzero(np.isclose(self.edges, r, rtol=1e-13, atol=0))
        if len(k) != 1:
            raise ValueError(f"radius {r!r} is not a shell edge of this grid")
        return int(k[0])

    def radial_interpolation(self, rho):
        """Segment index and Lagrange weights on that segment's nodes."""
        rho = np.asarray(rho, float)
        seg = np.clip(np.searchsorted(self.edges, rho, side="right") - 1, 0, len(self.edges) - 2)
        a, b = self.edges[seg], self.edges[seg + 1]
        t = (2 * rho - a - b) / (b - a)
        return seg, _lagrange_weights(self._ref, t)


class BallMap:
    """Values on a :class:`BallGrid`; ``target=None`` means Euclidean values."""

    def __init__(self, grid: BallGrid, values, target: Target | None, frame: FrameIdent | None = None):
        values = np.array(values, dtype=float)
        if values.shape[:-1] != grid.shape:
            raise ValueError(f"values must have leading shape {grid.shape}, got {values.shape}")
        if target is not None:
            if values.shape[-1] != 4:
                raise ValueError("target-valued maps need 4 chart components")
            target.check_domain(values)
        self.grid = grid
        self.values = values
        self.target = target
        self.frame = frame if frame is not None else FrameIdent()

    @classmethod
    def from_function(cls, grid: BallGrid, fun, target: Target | None, frame=None):
        return cls(grid, fun(grid.points), target, frame)

    def __repr__(self):
        tid = self.target.target_id if self.target is not None else "euclidean"
        return f"BallMap({self.grid!r}, target={tid!r})"

    @property
    def _diff(self):
        return None if self.target is None else self.target.chart_difference

    def radial_derivative(self) -> np.ndarray:
        return self.grid.radial_derivative(self.values, self._diff)

    def angular_derivatives(self) -> np.ndarray:
        """``(df(e1), df(e2))`` per unit length, shape ``(2,) + values.shape``."""
        v = np.moveaxis(self.values, 0, 3)  # (6, m, m, nr, d)
        d = self.grid.sphere.frame_derivatives(v, self._diff)
        d = np.moveaxis(d, 4, 1)
        return d / self.grid.rho[None, :, None, None, None, None]

    def metric_norm2(self, u) -> np.ndarray:
        if self.target is None:
            return np.sum(u * u, axis=-1)
        G = self.target.metric(self.values)
        return np.einsum("...i,...ij,...j->...", u, G, u)

    def energy_density(self) -> np.ndarray:
        """``|df|^2`` at every node."""
        dr = self.radial_derivative()
        da = self.angular_derivatives()
        return self.metric_norm2(dr) + self.metric_norm2(da[0]) + self.metric_norm2(da[1])

    def cartesian_gradient(self) -> np.ndarray:
        """``(d_1 f, d_2 f, d_3 f)``, shape ``(3,) + values.shape``."""
        dr = self.radial_derivative()
        da = self.angular_derivatives()
        xh = self.grid.sphere.points[None]
        e = self.grid.sphere.frame[None]
        out = []
        for i in range(3):
            out.append(xh[..., i, None] * dr + e[..., 0, i, None] * da[0] + e[..., 1, i, None] * da[1])
        return np.stack(out)


def ball_fueter_residual(f: BallMap) -> np.ndarray:
    """``sum_i I(e_i) d_i f`` at every node."""
    if f.target is None:
        raise ValueError("Fueter residual needs a target")
    D = f.cartesian_gradient()
    I = f.frame.structures(f.target, f.values)
    return sum(np.einsum("...jk,...k->...j", I[..., i, :, :], D[i]) for i in range(3))


@dataclass
class RadialProfile:
    radii: np.ndarray
    values: np.ndarray  # N(r)
    deficits: np.ndarray  # D(radii[0], r)
    pairs: list = field(default_factory=list)  # (s, r, N(r) - N(s), D(s, r), defect, relative)
    fueter_residual: float | None = None

    def __post_init__(self):
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must increase")
        if np.any(self.values < -1e-12):
            raise ValueError("profile values must be nonnegative")

    @property
    def max_defect(self) -> float:
        return max((p[4] for p in self.pairs), default=0.0)

    @property
    def max_relative_defect(self) -> float:
        return max((p[5] for p in self.pairs), default=0.0)

    def is_nondecreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) >= -tol))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,N,D,defect\n")
        for r, n, d in zip(self.radii, self.values, self.deficits):
            defect = abs((n - self.values[0]) - d)
            buf.write(f"{r:.17g},{n:.17g},{d:.17g},{defect:.17g}\n")
        return buf.getvalue()


def _recentred(f: BallMap, center):
    if center is None or np.allclose(center, f.grid.center, rtol=0, atol=1e-14):
        return f
    center = np.asarray(center, float)
    off = np.linalg.norm(center - f.grid.center)
    if off >= f.grid.outer:
        raise DomainError(f"center {center.tolist()} lies outside the ball of radius {f.grid.outer:g}")
    g = f.grid
    new = BallGrid(g.sphere, g.edges * ((g.outer - off) / g.outer), g.order, center)
    return _resample(f, new, lambda y: y)


def monotonicity_profile(f: BallMap, center=None, radii=None) -> RadialProfile:
    """``N(r) = r^-1 int_{B_r} |df|^2`` and the deficits ``D(s, r) = 2 int rho^-1 |d_rho f|^2``.

    Radii default to every positive shell edge; all must be edges. Every pair
    ``s < r`` is reported with ``|(N(r) - N(s)) - D(s, r)|``.
    """
    f = _recentred(f, center)
    g = f.grid
    if g.inner != 0:
        raise DomainError("the profile needs a full ball (inner radius 0)")
    radii = g.edges[1:] if radii is None else np.sort(np.asarray(radii, float))
    dens = f.energy_density()
    rad = f.metric_norm2(f.radial_derivative())
    rad = 2 * rad / g.rho[:, None, None, None]
    E = np.array([g.integrate(dens, r) for r in radii])
    C = np.array([g.integrate(rad, r) for r in radii])
    N = E / radii
    pairs = []
    for i, j in combinations(range(len(radii)), 2):
        dn = N[j] - N[i]
        dd = C[j] - C[i]
        defect = abs(dn - dd)
        pairs.append((float(radii[i]), float(radii[j]), float(dn), float(dd), float(defect),
                      float(defect / max(abs(dd), abs(dn), 1e-300))))
    res = None
    if f.target is not None:
        res = float(np.abs(ball_fueter_residual(f)).max())
    return RadialProfile(radii, N, C - C[0], pairs, res)


@dataclass
class DensityEstimate:
    theta: float
    order: float | None
    radii: np.ndarray
    values: np.ndarray
    flags: list
    sup_gradient: float  # max |df| on the innermost shell
    raw_theta: float

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("density must be nonnegative")


def density_estimate(f: BallMap, center=None, levels: int = 3, rtol: float = 1e-9) -> DensityEstimate:
    """Extrapolate ``N(r)`` to ``r = 0`` from the ``levels`` smallest geometric edges."""
    f = _recentred(f, center)
    prof = monotonicity_profile(f)
    if len(prof.radii) < levels or levels < 3:
        raise ValueError("need at least three radii for extrapolation")
    r = prof.radii[:levels][::-1]
    N = prof.values[:levels][::-1]
    q = r[:-1] / r[1:]
    if not np.allclose(q, q[0], rtol=1e-10):
        raise ValueError("extrapolation radii must be geometric")
    q = q[0]
    d = N[:-1] - N[1:]  # successive decrements towards the center
    scale = max(float(np.abs(N).max()), 1e-300)
    flags = []
    if np.any(d < -rtol * scale):
        flags.append("non-monotone tail")
    if np.all(np.abs(d) <= rtol * scale):
        order = None
        theta = float(N[-1])
    else:
        ratios = d[:-1] / d[1:]
        if np.any(ratios <= 0):
            flags.append("indefinite decrements")
            order = None
            theta = float(N[-1])
        else:
            p = np.log(ratios) / np.log(q)
            order = float(p[-1])
            if len(p) > 1 and np.ptp(p) > 0.1:
                flags.append("unsettled order")
            theta = float(N[-1] - d[-1] / (q**order - 1))
    raw = theta
    if theta < 0:
        if theta < -1e-8 * scale:
            flags.append("negative extrapolant clipped")
        theta = 0.0
    k = f.grid.order
    sup = float(np.sqrt(f.energy_density()[:k].max()))
    return DensityEstimate(theta, order, r, N, flags, sup, raw)


def _resample(f: BallMap, grid: BallGrid, to_source) -> BallMap:
    """Values at ``to_source(grid.points)`` by angular then radial Lagrange interpolation."""
    src = f.grid
    pts = to_source(grid.points).reshape(-1, 3) - src.center
    rho = np.linalg.norm(pts, axis=-1)
    if np.any(rho > src.outer * (1 + 1e-12)) or np.any(rho < src.inner * (1 - 1e-12)):
        raise DomainError("resampling leaves the domain of the map")
    dirs = pts / np.where(rho > 0, rho, 1.0)[:, None]
    dirs[rho == 0] = (0.0, 0.0, 1.0)
    seg, W = src.radial_interpolation(rho)
    q = src.order
    d = f.values.shape[-1]
    # shells as angular channels: (6, m, m, nr, d)
    ang = np.moveaxis(f.values, 0, 3)
    diff = f._diff
    out = np.empty((len(pts), d))
    for s0 in range(0, len(pts), CHUNK):
        sl = slice(s0, s0 + CHUNK)
        per_shell = src.sphere.interpolate(ang, dirs[sl], diff=diff)  # (n, nr, d)
        idx = seg[sl, None] * q + np.arange(q)[None]
        local = np.take_along_axis(per_shell, idx[..., None], axis=1)
        if diff is None:
            out[sl] = np.einsum("nk,nkd->nd", W[sl], local)
        else:
            ref = local[:, :1]
            out[sl] = ref[:, 0] + np.einsum("nk,nkd->nd", W[sl], diff(local, ref))
    if f.target is not None:
        out = f.target.wrap(out)
    return BallMap(grid, out.reshape(grid.shape + (d,)), f.target, f.frame)


def rescale(f: BallMap, x, r: float, grid: BallGrid | None = None) -> BallMap:
    """``y -> f(x + r y)`` on ``grid`` (default: the largest ball about the origin that fits)."""
    if r <= 0:
        raise ValueError("factor must be positive")
    x = np.asarray(x, float)
    room = f.grid.outer - np.linalg.norm(x - f.grid.center)
    if grid is None:
        if room <= 0:
            raise DomainError("rescaling centre lies outside the map's ball")
        scale = room / r / f.grid.outer
        grid = BallGrid(f.grid.sphere, f.grid.edges * scale, f.grid.order)
    if r * grid.outer > room * (1 + 1e-12):
        raise DomainError(f"r * outer radius {r * grid.outer:g} exceeds the available {room:g}")
    return _resample(f, grid, lambda y: x + r * (y - grid.center))


def radial_speed(f: BallMap) -> np.ndarray:
    """``rho |d_rho f|`` at every node."""
    return f.grid.rho[:, None, None, None] * np.sqrt(f.metric_norm2(f.radial_derivative()))


def homogeneity_defect(f: BallMap, center=None) -> float:
    """``sup rho |d_rho f|``; zero exactly for radially constant maps."""
    return float(radial_speed(_recentred(f, center)).max())


def homogeneous_extension(F: SphereMap | np.ndarray, grid: BallGrid, target: Target | None = None) -> BallMap:
    """``y -> F(y / |y|)`` on ``grid`` (angular grids must agree)."""
    vals = F.values if isinstance(F, SphereMap) else np.asarray(F, float)
    if isinstance(F, SphereMap):
        target = F.target if target is None else target
    if vals.shape[:3] != grid.sphere.shape:
        raise ValueError("angular grid mismatch")
    out = np.broadcast_to(vals[None], grid.shape + vals.shape[3:]).copy()
    return BallMap(grid, out, target)


def veronese(x, scale: float) -> np.ndarray:
    """``(scale / sqrt 2) x x^T`` flattened; an isometry of the round RP^2 of radius ``scale``."""
    x = np.asarray(x, float)
    return (scale / np.sqrt(2)) * (x[..., :, None] * x[..., None, :]).reshape(x.shape[:-1] + (9,))


@dataclass
class AxisymmetricReport:
    containment: bool
    antipodal_max: float
    tension_max: float
    energy: float
    bolt_area: float
    energy_over_bolt_area: float
    conformal_factor_range: tuple
    theta: float
    theta_closed_form: float
    profile_spread: float

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def axisymmetric_map(sphere: SphereGrid, profile: AHProfile | None = None):
    """The covering ``x -> [+-x]`` of the bolt, with its checkable properties.

    Harmonicity and energy are measured through the Veronese embedding, which is
    isometric for the round bolt metric of scale ``bolt_scale``.
    """
    if profile is None:
        profile = ah_profile()
    if not isinstance(profile, AHProfile):
        raise TypeError("an AHProfile is required")
    target = AtiyahHitchin(profile, chart="bolt")
    x = sphere.points
    phi = SphereMap(sphere, target.bolt_point(x), target)
    contained = bool(np.all(target.in_domain(phi.values)))
    antipodal = float(np.abs(phi.values[:3] - phi.values[3:]).max())
    lam = profile.bolt_scale
    V = veronese(x, lam)
    lap = sphere.laplacian(V)
    # tangent space of the image at x x^T is spanned by e x^T + x e^T
    fr = sphere.frame
    tang = []
    for a in range(2):
        e = fr[..., a, :]
        t = (e[..., :, None] * x[..., None, :] + x[..., :, None] * e[..., None, :]).reshape(x.shape[:-1] + (9,))
        tang.append(t / np.sqrt(2))
    tau = sum(np.sum(lap * t, -1)[..., None] * t for t in tang)
    dV = sphere.frame_derivatives(V)
    dens = np.sum(dV**2, axis=(0, -1))
    energy = 0.5 * float(sphere.integrate(dens))
    conf = dens / (2 * lam**2)
    area = profile.bolt_area()
    ball = BallGrid(sphere, [0.0, 0.25, 0.5, 1.0], order=2)
    prof = monotonicity_profile(homogeneous_extension(V, ball))
    theta = float(prof.values[-1])
    report = AxisymmetricReport(
        containment=contained,
        antipodal_max=antipodal,
        tension_max=float(np.linalg.norm(tau, axis=-1).max()),
        energy=energy,
        bolt_area=area,
        energy_over_bolt_area=energy / area,
        conformal_factor_range=(float(conf.min()), float(conf.max())),
        theta=theta,
        theta_closed_form=8 * np.pi * lam**2,
        profile_spread=float(np.ptp(prof.values) / theta),
    )
    return phi, report
