"""Cell-pair quadrature for weakly singular Green kernels.

All cells of a grid share one width ``h`` in the grading parameter ``tau``,
so pair integrals are carried out in ``tau`` coordinates where the graded
boundary layer looks uniform.  Three rules are used:

* tensor Gauss-Legendre for separated pairs,
* a Gauss-Jacobi rule in the offset ``tau_y - tau_x`` for a cell with itself,
* a Duffy split of the square for cells sharing an endpoint.
"""
from __future__ import annotations

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .geometry import _power_gap, sphere_area
from .kernels import KernelSpec, pair_kernel, radial_kernel, SFL_INTERVAL


def singular_exponent(spec: KernelSpec) -> float:
    """Exponent e of the |x - y|^e blow-up seen by 1D cell integrals."""
    if spec.family == SFL_INTERVAL and spec.K > 0:
        return 0.0
    return min(2 * spec.s - 1, 0.0)


def gauss_legendre01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1), 0.5 * w


def gauss_jacobi01(n, e):
    """Nodes/weights for int_0^1 t^e f(t) dt."""
    x, w = roots_jacobi(n, 0.0, e)
    return 0.5 * (x + 1), w * 0.5 ** (1 + e)


class PairIntegrator:
    """Integrates G(x, y) dmu(x) dmu(y) over pairs of grid cells."""

    def __init__(self, spec: KernelSpec, grid, p_far=6, p_near=10, n_sing=12):
        self.spec = spec
        self.grid = grid
        self.g = grid.g
        self.h = grid.h
        self.e = singular_exponent(spec)
        self.p_far, self.p_near, self.n_sing = p_far, p_near, n_sing
        self.radial = spec.radial
        if self.radial:
            self.area = sphere_area(spec.N)

    # -- geometry -----------------------------------------------------------
    def _density(self, tau):
        """d mu / d tau at parameter tau."""
        g = self.g
        jac = g * tau ** (g - 1)
        if self.radial:
            r = -np.expm1(g * np.log(np.maximum(tau, 1e-300)))
            jac = jac * self.area * r ** (self.spec.N - 1)
        return jac

    def _kernel(self, side_x, tau_x, side_y, tau_y, dtau=None):
        """Kernel at parameter points; dtau = tau_y - tau_x when known exactly."""
        g = self.g
        dx = tau_x ** g
        dy = tau_y ** g
        same = side_x == side_y
        if dtau is None:
            dtau = tau_y - tau_x
        lo = np.minimum(tau_x, tau_y)
        gap = _power_gap(lo, np.abs(dtau), g)
        with np.errstate(divide="ignore"):
            cross = -np.expm1(g * np.log(tau_x)) - np.expm1(g * np.log(tau_y))
        dist = np.where(same, gap, cross)
        if self.radial:
            return radial_kernel(self.spec.N, self.spec.s, dx, dy, gap)
        return pair_kernel(self.spec, side_x, dx, side_y, dy, dist)

    # -- rules --------------------------------------------------------------
    def regular(self, i, j, p):
        """Tensor Gauss-Legendre on cells i[k] x j[k]."""
        grid, h = self.grid, self.h
        xi, wi = gauss_legendre01(p)
        tx = grid.tau_lo[i][:, None, None] + h * xi[None, :, None]
        ty = grid.tau_lo[j][:, None, None] + h * xi[None, None, :]
        sx = grid.side[i][:, None, None]
        sy = grid.side[j][:, None, None]
        tx, ty, sx, sy = np.broadcast_arrays(tx, ty, sx, sy)
        dt = (grid.tau_lo[j] - grid.tau_lo[i])[:, None, None] + h * (xi[None, None, :] - xi[None, :, None])
        k = self._kernel(sx, tx, sy, ty, dt)
        w = (wi[:, None] * wi[None, :]) * h * h
        return np.einsum("kab,ab->k", k * self._density(tx) * self._density(ty), w)

    def diagonal(self, i):
        """Cell with itself: offset rho = tau_y - tau_x with weight rho^e."""
        grid, h, e = self.grid, self.h, self.e
        rho, wr = gauss_jacobi01(self.n_sing, e)
        z, wz = gauss_legendre01(self.n_sing)
        a = grid.tau_lo[i][:, None, None]
        xi = (1 - rho)[None, :, None] * z[None, None, :]
        tx = a + h * xi
        dt = h * np.broadcast_to(rho[None, :, None], tx.shape)
        ty = tx + dt
        s = np.broadcast_to(grid.side[i][:, None, None], tx.shape)
        k = self._kernel(s, tx, s, ty, dt)
        f = k * self._density(tx) * self._density(ty) / rho[None, :, None] ** e
        w = 2 * (wr * (1 - rho))[:, None] * wz[None, :] * h * h
        return np.einsum("kab,ab->k", f, w)

    def _duffy(self):
        t, wt = gauss_jacobi01(self.n_sing, 1 + self.e)
        w_, ww = gauss_legendre01(self.n_sing)
        # triangle 1: u = t, v = t w ; triangle 2: u = t w, v = t
        u = np.concatenate([np.outer(t, np.ones_like(w_)), np.outer(t, w_)])
        v = np.concatenate([np.outer(t, w_), np.outer(t, np.ones_like(w_))])
        tt = np.concatenate([np.outer(t, np.ones_like(w_))] * 2)
        wgt = np.concatenate([np.outer(wt, ww)] * 2)
        # integrand weight removed: t^(1+e) -> multiply back t / t^(1+e) ... (u+v)^e
        corr = tt / tt ** (1 + self.e)
        return u, v, wgt * corr

    def adjacent(self, i, j):
        """Same-side cells with tau_hi[i] == tau_lo[j] (shared edge)."""
        grid, h = self.grid, self.h
        u, v, w = self._duffy()
        edge = grid.tau_hi[i][:, None, None]
        tx = edge - h * u[None]
        ty = grid.tau_lo[j][:, None, None] + h * v[None]
        dt = h * np.broadcast_to((u + v)[None], tx.shape)
        s = np.broadcast_to(grid.side[i][:, None, None], tx.shape)
        k = self._kernel(s, tx, s, ty, dt)
        f = k * self._density(tx) * self._density(ty)
        return np.einsum("kab,ab->k", f, w) * h * h

    def center(self, i, j):
        """Opposite-side cells touching x = 0 (tau = 1 on both sides)."""
        grid, h = self.grid, self.h
        u, v, w = self._duffy()
        tx = np.broadcast_to(1.0 - h * u[None], (len(i),) + u.shape)
        ty = np.broadcast_to(1.0 - h * v[None], (len(i),) + u.shape)
        sx = np.broadcast_to(grid.side[i][:, None, None], tx.shape)
        sy = np.broadcast_to(grid.side[j][:, None, None], tx.shape)
        k = self._kernel(sx, tx, sy, ty)
        f = k * self._density(tx) * self._density(ty)
        return np.einsum("kab,ab->k", f, w) * h * h
