"""Equiangular gnomonic cubed sphere.

Panel ``k`` (``k < 3``) has centre ``e_k`` and axes ``(e_{k+1}, e_{k+2})``; panel
``k + 3`` is its exact antipode. Nodes are cell centred, ``m`` per axis, at
``xi, eta = -pi/4 + (i + 1/2) * pi / (2 m)``.

Derivatives are fourth order by default (sixth and eighth on request), central
in the interior and one-sided in the layers next to a panel edge. A ghost ring can be filled by interpolation from
neighbouring panels (:meth:`SphereGrid.ghost_exchange`).
"""

from __future__ import annotations

from functools import cached_property
from math import factorial

import numpy as np

from .numerics import corrected_midpoint_weights

__all__ = ["SphereGrid", "stencil_weights"]


def stencil_weights(offsets, deriv: int) -> np.ndarray:
    """Finite-difference weights on integer ``offsets`` for the ``deriv``-th derivative."""
    o = np.asarray(offsets, dtype=float)
    A = np.vander(o, len(o), increasing=True).T
    rhs = np.zeros(len(o))
    rhs[deriv] = factorial(deriv)
    return np.linalg.solve(A, rhs)


def _row_stencils(m: int, deriv: int, order: int = 4):
    """Per-row (offsets, weights) with one-sided windows near the ends."""
    width = order + 1 if deriv == 1 else order + 2
    half = order // 2
    rows = []
    for i in range(m):
        if half <= i < m - half:
            offs = np.arange(-half, half + 1)
        else:
            lo = min(max(i - half, 0), m - width)
            offs = np.arange(lo, lo + width) - i
        rows.append((offs, stencil_weights(offs, deriv)))
    return rows


def _apply_rows(values, rows, axis, diff=None):
    """Apply row stencils along ``axis``; ``diff(a, b)`` gives wrap-aware ``a - b``."""
    v = np.moveaxis(values, axis, 0)
    out = np.zeros_like(v, dtype=float)
    for i, (offs, w) in enumerate(rows):
        acc = 0.0
        for o, wk in zip(offs, w):
            if diff is None:
                acc = acc + wk * v[i + o]
            else:
                acc = acc + wk * diff(v[i + o], v[i])
        out[i] = acc
    return np.moveaxis(out, 0, axis)


class SphereGrid:
    """Six ``m x m`` gnomonic panels with area weights and local frames."""

    def __init__(self, m: int, order: int = 4):
        if int(m) != m or m < 8 or m % 2:
            raise ValueError(f"m must be an even integer >= 8, got {m!r}")
        if order not in (4, 6, 8):
            raise ValueError(f"order must be 4, 6 or 8, got {order!r}")
        self.m = int(m)
        self.order = int(order)
        self.dxi = np.pi / (2 * self.m)
        self.xi = -np.pi / 4 + (np.arange(self.m) + 0.5) * self.dxi
        E = np.eye(3)
        c = np.stack([E[k] for k in range(3)])
        a = np.stack([E[(k + 1) % 3] for k in range(3)])
        b = np.stack([E[(k + 2) % 3] for k in range(3)])
        self.centres = np.concatenate([c, -c])
        self.axis_a = np.concatenate([a, -a])
        self.axis_b = np.concatenate([b, -b])

    def __repr__(self):
        return f"SphereGrid(m={self.m}, order={self.order})"

    @property
    def shape(self):
        return (6, self.m, self.m)

    def _embed(self, XI, ETA, panels=slice(None)):
        X, Y = np.tan(XI), np.tan(ETA)
        c = self.centres[panels]
        a = self.axis_a[panels]
        b = self.axis_b[panels]
        v = c[:, None, None] + X[..., None] * a[:, None, None] + Y[..., None] * b[:, None, None]
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    @cached_property
    def points(self) -> np.ndarray:
        """Unit vectors, shape ``(6, m, m, 3)``; panels 3..5 negate panels 0..2 exactly."""
        XI, ETA = np.meshgrid(self.xi, self.xi, indexing="ij")
        half = self._embed(XI, ETA, slice(0, 3))
        return np.concatenate([half, -half])

    @cached_property
    def tangents(self) -> np.ndarray:
        """``(d/dxi, d/deta)`` of the embedding, shape ``(6, m, m, 2, 3)``."""
        XI, ETA = np.meshgrid(self.xi, self.xi, indexing="ij")
        X, Y = np.tan(XI), np.tan(ETA)
        P = self.points
        r = np.sqrt(1 + X**2 + Y**2)[None, ..., None]
        out = []
        for ax, fac in ((self.axis_a, 1 + X**2), (self.axis_b, 1 + Y**2)):
            d = ax[:, None, None, :]
            proj = np.sum(P * d, axis=-1, keepdims=True)
            out.append(fac[None, ..., None] * (d - P * proj) / r)
        return np.stack(out, axis=-2)

    @cached_property
    def frame(self) -> np.ndarray:
        """Oriented orthonormal frame ``(e1, e2 = x cross e1)``, shape ``(6, m, m, 2, 3)``."""
        t = self.tangents[..., 0, :]
        e1 = t / np.linalg.norm(t, axis=-1, keepdims=True)
        e2 = np.cross(self.points, e1)
        return np.stack([e1, e2], axis=-2)

    @cached_property
    def frame_coefficients(self) -> np.ndarray:
        """``M`` with ``e_a = sum_k M[a, k] t_k``, shape ``(6, m, m, 2, 2)``."""
        T = self.tangents
        gram = np.einsum("...ki,...li->...kl", T, T)
        rhs = np.einsum("...ai,...li->...al", self.frame, T)
        return np.einsum("...al,...lk->...ak", rhs, np.linalg.inv(gram))

    @cached_property
    def inverse_metric(self) -> np.ndarray:
        """``g^{ij}`` of the round metric in ``(xi, eta)``, shape ``(6, m, m, 2, 2)``."""
        P = self.points
        x = np.einsum("pijk,pk->pij", P, self.centres)
        y = np.einsum("pijk,pk->pij", P, self.axis_a)
        z = np.einsum("pijk,pk->pij", P, self.axis_b)
        gxx = 1 / (x**2 + y**2)
        gyy = 1 / (x**2 + z**2)
        gxy = y * z * gxx * gyy
        return np.stack([np.stack([gxx, gxy], -1), np.stack([gxy, gyy], -1)], -2)

    @cached_property
    def weights(self) -> np.ndarray:
        """Area weights, shape ``(6, m, m)``."""
        w1 = corrected_midpoint_weights(self.m, -np.pi / 4, np.pi / 4)
        X = np.tan(self.xi)
        XX, YY = np.meshgrid(X, X, indexing="ij")
        jac = (1 + XX**2) * (1 + YY**2) / (1 + XX**2 + YY**2) ** 1.5
        w = np.outer(w1, w1) * jac
        return np.broadcast_to(w, self.shape).copy()

    @property
    def orientation(self) -> np.ndarray:
        """``+1`` where ``(xi, eta)`` is positively oriented w.r.t. the outward normal."""
        return np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])

    # differentiation
    def _rows(self, deriv):
        key = f"_rows{deriv}"
        if not hasattr(self, key):
            setattr(self, key, _row_stencils(self.m, deriv, self.order))
        return getattr(self, key)

    def panel_derivatives(self, values, diff=None) -> np.ndarray:
        """``(d/dxi, d/deta)`` of per-node values, shape ``(2,) + values.shape``."""
        rows = self._rows(1)
        return np.stack([_apply_rows(values, rows, 1, diff) / self.dxi,
                         _apply_rows(values, rows, 2, diff) / self.dxi])

    def frame_derivatives(self, values, diff=None) -> np.ndarray:
        """``(df(e1), df(e2))`` with shape ``(2,) + values.shape``."""
        d = self.panel_derivatives(values, diff)
        return np.einsum("pijak,kpij...->apij...", self.frame_coefficients, d)

    def laplacian(self, values, diff=None) -> np.ndarray:
        """Round Laplace-Beltrami operator; the coordinates ``xi, eta`` are harmonic."""
        r1 = self._rows(1)
        r2 = self._rows(2)
        h = self.dxi
        fxx = _apply_rows(values, r2, 1, diff) / h**2
        fyy = _apply_rows(values, r2, 2, diff) / h**2
        fx = _apply_rows(values, r1, 1, diff) / h
        fxy = _apply_rows(fx, r1, 2) / h
        G = self.inverse_metric
        extra = values.ndim - 3
        g = [[G[..., i, j].reshape(G.shape[:3] + (1,) * extra) for j in range(2)] for i in range(2)]
        return g[0][0] * fxx + 2 * g[0][1] * fxy + g[1][1] * fyy

    def integrate(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, v, axes=([0, 1, 2], [0, 1, 2]))

    # interpolation and ghost cells
    def locate(self, x):
        """Panel index and ``(xi, eta)`` of unit vectors ``x`` (any leading shape)."""
        x = np.asarray(x, dtype=float)
        proj = x @ self.centres.T
        panel = np.argmax(proj, axis=-1)
        cx = np.take_along_axis(proj, panel[..., None], -1)[..., 0]
        ya = np.einsum("...k,...k->...", x, self.axis_a[panel])
        zb = np.einsum("...k,...k->...", x, self.axis_b[panel])
        return panel, np.arctan(ya / cx), np.arctan(zb / cx)

    def interpolate(self, values, x, npts: int = 6, diff=None) -> np.ndarray:
        """Tensor Lagrange interpolation of node values at unit vectors ``x``."""
        values = np.asarray(values, dtype=float)
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        xf = x.reshape(-1, 3)
        panel, XI, ETA = self.locate(xf)
        tail = values.shape[3:]
        out = np.empty((len(xf),) + tail)

        def window(t):
            s = (t + np.pi / 4) / self.dxi - 0.5
            lo = np.clip(np.floor(s).astype(int) - npts // 2 + 1, 0, self.m - npts)
            idx = lo[:, None] + np.arange(npts)[None]
            nodes = self.xi[idx]
            w = np.ones((len(t), npts))
            for k in range(npts):
                for l in range(npts):
                    if l != k:
                        w[:, k] *= (t - nodes[:, l]) / (nodes[:, k] - nodes[:, l])
            return idx, w

        ix, wx = window(XI)
        iy, wy = window(ETA)
        block = values[panel[:, None, None], ix[:, :, None], iy[:, None, :]]
        if diff is not None:
            ref = block[:, :1, :1]
            block = ref + diff(block, ref)
        out = np.einsum("na,nb,nab...->n...", wx, wy, block)
        return out.reshape(lead + tail)

    def ghost_points(self, layers: int = 2) -> np.ndarray:
        """Unit vectors of a padded ``(m + 2 layers)^2`` grid per panel."""
        ext = -np.pi / 4 + (np.arange(-layers, self.m + layers) + 0.5) * self.dxi
        XI, ETA = np.meshgrid(ext, ext, indexing="ij")
        half = self._embed(XI, ETA, slice(0, 3))
        return np.concatenate([half, -half])

    def ghost_exchange(self, values, layers: int = 2, diff=None) -> np.ndarray:
        """Pad every panel with ``layers`` ghost rows filled from neighbouring panels."""
        values = np.asarray(values, dtype=float)
        pts = self.ghost_points(layers)
        out = self.interpolate(values, pts, diff=diff)
        out[:, layers:-layers, layers:-layers] = values
        return out
