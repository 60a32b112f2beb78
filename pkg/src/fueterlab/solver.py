"""Residual minimisation for Fueter sections and the flat spectral oracle."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsqr
from sklearn.base import BaseEstimator, TransformerMixin

from .fields3d import FrameIdent, Section3, _apply, _chunks, _node_data, section_derivatives
from .numerics import fd_weights
from .targets import DomainError, chart_jacobian, left_matrix

__all__ = [
    "residual_functional",
    "discrete_gradient",
    "solve_fueter",
    "SolverOptions",
    "ConvergenceLog",
    "LineSearchError",
    "FueterSolver",
    "linear_oracle",
    "fd_symbol",
    "symbol_matrix",
    "kernel_projection",
]


class LineSearchError(RuntimeError):
    """Backtracking could not find an acceptable step."""

    def __init__(self, msg, section=None, log=None):
        super().__init__(msg)
        self.section = section
        self.log = log


def _residual_parts(s: Section3, D=None, with_derivatives=False):
    if D is None:
        D = section_derivatives(s)
    N = s.grid.n**3
    P = s.values.reshape(N, 4)
    Df = D.reshape(3, N, 4)
    F = np.empty((N, 4))
    GF = np.empty((N, 4))
    extra = np.zeros((N, 4)) if with_derivatives else None
    tgt, frame = s.target, s.frame
    for sl in _chunks(N):
        p = P[sl]
        G = _node_data(s, p, "G")
        I = _node_data(s, p, "I")
        d = Df[:, sl]
        f = sum(_apply(I[..., i, :, :], d[i]) for i in range(3))
        F[sl] = f
        GF[sl] = _apply(G, f)
        if with_derivatives and not tgt.constant_structures:
            dG = chart_jacobian(tgt.metric, p)  # (n, 4, 4, 4): d_k g_ij
            dI = chart_jacobian(lambda q: frame.structures(tgt, q), p)  # (n, 3, 4, 4, 4)
            extra[sl] = 0.5 * np.einsum("ni,nijk,nj->nk", f, dG, f, optimize=True)
            extra[sl] += np.einsum("nj,najlk,anl->nk", GF[sl], dI, d, optimize=True)
    return F, GF, extra, D


def residual_functional(s: Section3) -> float:
    """``R(f) = 1/2 h^3 sum_nodes F^T g F``."""
    F, GF, _, _ = _residual_parts(s)
    return 0.5 * s.grid.h**3 * float(np.sum(F * GF))


def _adjoint_derivative(field, axis, h):
    # transpose of the periodic central stencil is its negative
    out = np.zeros_like(field)
    for off, w in fd_weights(4).items():
        out += w * np.roll(field, -off, axis=axis)
    return -out / h


def discrete_gradient(s: Section3) -> np.ndarray:
    """Exact gradient of ``R`` with respect to the nodal chart coordinates."""
    return _gradient(s)[0]


def _gradient(s: Section3):
    F, GF, extra, D = _residual_parts(s, with_derivatives=True)
    shape = s.grid.shape + (4,)
    N = s.grid.n**3
    P = s.values.reshape(N, 4)
    grad = extra.reshape(shape).copy()
    T = np.empty((3, N, 4))
    for sl in _chunks(N):
        I = _node_data(s, P[sl], "I")
        for i in range(3):
            T[i, sl] = _apply(np.swapaxes(I[..., i, :, :], -1, -2), GF[sl])
    for i in range(3):
        grad += _adjoint_derivative(T[i].reshape(shape), i, s.grid.h)
    R = 0.5 * s.grid.h**3 * float(np.sum(F * GF))
    return s.grid.h**3 * grad, R, F


@dataclass
class SolverOptions:
    tol: float = 1e-12
    max_iter: int = 5000
    method: str = "gd"  # or "gauss-newton"
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60
    initial_step: float | None = None

    def __post_init__(self):
        if self.method not in ("gd", "gauss-newton"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class ConvergenceLog:
    rows: list = field(default_factory=list)  # (iter, R, step, gradnorm)
    converged: bool = False
    message: str = ""

    def append(self, it, R, step, gnorm):
        self.rows.append((int(it), float(R), float(step), float(gnorm)))

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def n_iter(self) -> int:
        return self.rows[-1][0] if self.rows else 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,R,step,gradnorm\n")
        for it, R, st, g in self.rows:
            buf.write(f"{it},{R:.17g},{st:.17g},{g:.17g}\n")
        return buf.getvalue()


def _try(s: Section3, values):
    try:
        s.target.check_domain(values)
    except DomainError:
        return None
    return s.with_values(values)


def solve_fueter(init: Section3, opts: SolverOptions | None = None, **kw):
    """Descend ``R(f) = 1/2 |F f|^2`` from ``init``.

    Steps follow Barzilai-Borwein trial lengths with Armijo backtracking, so
    ``R`` never increases between accepted iterates. Returns ``(section, log)``;
    on budget exhaustion the best iterate is returned with ``log.converged`` false.
    """
    opts = opts or SolverOptions(**kw)
    s = init.copy()
    g, R, _ = _gradient(s)
    log = ConvergenceLog()
    gn = float(np.linalg.norm(g))
    log.append(0, R, 0.0, gn)
    if R <= opts.tol:
        log.converged, log.message = True, "initial section already below tolerance"
        return s, log
    step = opts.initial_step or 1.0 / max(gn, 1e-300) * min(1.0, R)
    for it in range(1, opts.max_iter + 1):
        direction = -g
        if opts.method == "gauss-newton":
            dn = _gauss_newton_direction(s)
            if dn is not None and np.sum(dn * g) < 0:
                direction = dn
                step = 1.0
        slope = float(np.sum(direction * g))
        t = step
        for _ in range(opts.max_backtracks):
            cand = _try(s, s.values + t * direction)
            if cand is not None:
                gc, Rc, _ = _gradient(cand)
                if Rc <= R + opts.armijo * t * slope:
                    break
            t *= opts.shrink
        else:
            log.message = f"line search failed at iteration {it} (R={R:.3e})"
            raise LineSearchError(log.message, s, log)
        sk = cand.values - s.values
        yk = gc - g
        s, g, R = cand, gc, Rc
        gn = float(np.linalg.norm(g))
        log.append(it, R, t, gn)
        if R <= opts.tol:
            log.converged, log.message = True, f"converged in {it} iterations"
            return s, log
        sy = float(np.sum(sk * yk))
        step = float(np.sum(sk * sk)) / sy if sy > 0 else 2 * t
    log.message = f"budget of {opts.max_iter} iterations exhausted (R={R:.3e})"
    return s, log


def _gauss_newton_direction(s: Section3):
    """Minimum-norm solution of the linearised residual ``J d = -F`` (metric-free)."""
    shape = s.grid.shape + (4,)
    N = s.grid.n**3
    P = s.values.reshape(N, 4)
    I = s.frame.structures(s.target, P)  # (N, 3, 4, 4)
    D = section_derivatives(s).reshape(3, N, 4)
    F = np.einsum("nijk,ink->nj", I, D)
    if s.target.constant_structures:
        dIf = None
    else:
        dI = chart_jacobian(lambda q: s.frame.structures(s.target, q), P)
        dIf = np.einsum("najlk,anl->njk", dI, D)  # d/dp_k of sum_a I_a D_a f

    def mv(v):
        v = v.reshape(shape)
        out = np.zeros((N, 4))
        for i in range(3):
            Dv = -_adjoint_derivative(v, i, s.grid.h).reshape(N, 4)
            out += np.einsum("njk,nk->nj", I[:, i], Dv)
        if dIf is not None:
            out += np.einsum("njk,nk->nj", dIf, v.reshape(N, 4))
        return out.ravel()

    def rmv(u):
        u = u.reshape(N, 4)
        out = np.zeros(shape)
        for i in range(3):
            T = np.einsum("nji,nj->ni", I[:, i], u).reshape(shape)
            out += _adjoint_derivative(T, i, s.grid.h)
        if dIf is not None:
            out += np.einsum("njk,nj->nk", dIf, u).reshape(shape)
        return out.ravel()

    op = LinearOperator((4 * N, 4 * N), matvec=mv, rmatvec=rmv, dtype=float)
    sol = lsqr(op, -F.ravel(), atol=1e-14, btol=1e-14, iter_lim=200)[0]
    return sol.reshape(shape) if np.all(np.isfinite(sol)) else None


class FueterSolver(TransformerMixin, BaseEstimator):
    """Estimator front end to :func:`solve_fueter`.

    ``fit(section)`` stores ``section_`` and ``log_``; ``transform`` solves
    from each given initial section and returns the solutions.
    """

    def __init__(self, tol=1e-12, max_iter=5000, method="gd", armijo=1e-4):
        self.tol = tol
        self.max_iter = max_iter
        self.method = method
        self.armijo = armijo

    def _opts(self):
        return SolverOptions(tol=self.tol, max_iter=self.max_iter, method=self.method,
                             armijo=self.armijo)

    def fit(self, X, y=None):
        from .validation import check_section

        check_section(X)
        self.section_, self.log_ = solve_fueter(X, self._opts())
        self.n_iter_ = self.log_.n_iter
        self.converged_ = self.log_.converged
        return self

    def transform(self, X):
        if isinstance(X, Section3):
            return solve_fueter(X, self._opts())[0]
        return [solve_fueter(x, self._opts())[0] for x in X]

    def score(self, X, y=None):
        """Negative residual functional of ``X`` (higher is better)."""
        return -residual_functional(X)


# -- flat oracle --------------------------------------------------------------

def fd_symbol(n: int, L: float) -> np.ndarray:
    """Modified wavenumbers of the order-4 central stencil, FFT ordering."""
    h = L / n
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    return (8 * np.sin(k * h) - np.sin(2 * k * h)) / (6 * h)


def symbol_matrix(xi, frame: FrameIdent | None = None) -> np.ndarray:
    """``sum_i xi_i I(e_i)`` for the flat triple."""
    frame = frame or FrameIdent()
    Lm = np.stack([left_matrix(e) for e in np.eye(4)[1:]])
    I = np.einsum("ia,ajk->ijk", frame.rotation, Lm)
    return np.einsum("...i,ijk->...jk", np.asarray(xi, dtype=float), I)


def _kappa(grid):
    k = fd_symbol(grid.n, grid.L)
    return np.stack(np.meshgrid(k, k, k, indexing="ij"), -1)


def _kernel_mask(grid, rtol=1e-9):
    kap = _kappa(grid)
    return np.linalg.norm(kap, axis=-1) <= rtol / grid.h


def kernel_projection(s: Section3) -> Section3:
    """Orthogonal projection of the periodic part onto the discrete flat kernel."""
    _require_flat(s)
    mask = _kernel_mask(s.grid)
    Ph = np.fft.fftn(s.periodic_part(), axes=(0, 1, 2))
    Ph[~mask] = 0.0
    per = np.real(np.fft.ifftn(Ph, axes=(0, 1, 2)))
    return s.with_values(per + s._linear_part())


def _require_flat(s):
    if s.target.target_id != "flat":
        raise ValueError(f"the spectral oracle needs the flat target, got {s.target.target_id!r}")


def linear_oracle(rhs=None, init: Section3 | None = None, *, grid=None, frame=None) -> Section3:
    """Solve ``F u = rhs`` on the flat torus by Fourier diagonalisation.

    The kernel component (wavevectors whose modified symbol vanishes, i.e. the
    constants plus the grid-scale modes the stencil cannot see) is taken from
    ``init`` (zero if absent). ``rhs`` must vanish on those modes.
    """
    from .targets import FlatH

    if init is not None:
        _require_flat(init)
        grid, frame = init.grid, init.frame
    if grid is None:
        raise ValueError("need a grid or an initial section")
    frame = frame or FrameIdent()
    base = init if init is not None else Section3.constant(grid, np.zeros(4), FlatH(),
                                                           frame=frame)
    # the winding contributes a constant residual sum_i I_i W_i / L
    constF = sum(symbol_matrix(np.eye(3)[i], frame) @ base.winding[i] for i in range(3)) / grid.L
    r = np.zeros(grid.shape + (4,)) if rhs is None else np.asarray(rhs, dtype=float)
    r = r - constF
    mask = _kernel_mask(grid)
    rh = np.fft.fftn(r, axes=(0, 1, 2))
    if np.abs(rh[mask]).max(initial=0.0) > 1e-10 * grid.n**3 * max(1.0, np.abs(r).max()):
        raise ValueError("rhs has a component along the cokernel (constants or grid-scale modes)")
    kap = _kappa(grid)
    S = symbol_matrix(kap, frame)
    k2 = np.sum(kap**2, axis=-1)
    k2[mask] = 1.0
    # F u = i S u_hat  =>  u_hat = i S r_hat / |kappa|^2 since S^2 = -|kappa|^2
    uh = 1j * np.einsum("...jk,...k->...j", S, rh) / k2[..., None]
    if init is not None:
        uh[mask] = np.fft.fftn(init.periodic_part(), axes=(0, 1, 2))[mask]
    else:
        uh[mask] = 0.0
    u = np.real(np.fft.ifftn(uh, axes=(0, 1, 2)))
    return Section3(grid, u + base._linear_part(), FlatH(), frame=frame, winding=base.winding,
                    tear_threshold=None)
