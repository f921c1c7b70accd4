"""Discrete Green operator: assembly, application and benchmark images.

The matrix is the piecewise-constant Galerkin form of the Green operator,

    S_ij = int_{cell_i} int_{cell_j} G(x, y) dy dx,   A = diag(1/w) S,

so ``(A f)_i`` is the cell average of G[f_h] for the piecewise-constant
interpolant f_h of the node values.  ``W A = S`` is symmetric, which is the
discrete integration-by-parts identity.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Grid, GridFunction
from .kernels import KernelSpec
from .quadrature import PairIntegrator

log = logging.getLogger(__name__)

CACHE_ENV = "SINGULAR_GREEN_CACHE"


@dataclass(frozen=True, eq=False)
class GreenMatrix:
    grid: Grid
    spec: KernelSpec
    S: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def A(self) -> np.ndarray:
        a = self.__dict__.get("_A")
        if a is None:
            a = self.S / self.grid.weights[:, None]
            object.__setattr__(self, "_A", a)
        return a

    @property
    def M(self) -> int:
        return self.grid.M

    def __matmul__(self, f):
        return self.A @ np.asarray(f, dtype=float)


def _pair_classes(grid: Grid):
    n_side = int(round(1.0 / grid.h))
    k = np.rint(grid.tau_lo / grid.h).astype(int)
    iu, ju = np.triu_indices(grid.M)
    same = grid.side[iu] == grid.side[ju]
    dk = np.abs(k[iu] - k[ju])
    diag = iu == ju
    adj = same & (dk == 1)
    from_center = (n_side - 1 - k[iu]) + (n_side - 1 - k[ju])
    center = (~same) & (from_center == 0)
    near = (same & (dk >= 2) & (dk <= 3)) | ((~same) & (from_center >= 1) & (from_center <= 3))
    far = ~(diag | adj | center | near)
    return iu, ju, k, diag, adj, center, near, far


def _assemble_dense(spec: KernelSpec, grid: Grid, chunk_points=4_000_000) -> np.ndarray:
    q = PairIntegrator(spec, grid)
    iu, ju, k, diag, adj, center, near, far = _pair_classes(grid)
    S = np.zeros((grid.M, grid.M))
    vals = np.empty(iu.size)
    idx = np.flatnonzero(diag)
    vals[idx] = q.diagonal(iu[idx])
    idx = np.flatnonzero(adj)
    if idx.size:
        lo_first = k[iu[idx]] < k[ju[idx]]
        a = np.where(lo_first, iu[idx], ju[idx])
        b = np.where(lo_first, ju[idx], iu[idx])
        vals[idx] = q.adjacent(a, b)
    idx = np.flatnonzero(center)
    if idx.size:
        vals[idx] = q.center(iu[idx], ju[idx])
    for mask, p in ((near, q.p_near), (far, q.p_far)):
        idx = np.flatnonzero(mask)
        step = max(1, chunk_points // (p * p))
        for start in range(0, idx.size, step):
            sl = idx[start:start + step]
            vals[sl] = q.regular(iu[sl], ju[sl], p)
    S[iu, ju] = vals
    S[ju, iu] = vals
    return S


def _cache_key(spec: KernelSpec, grid: Grid) -> str:
    payload = json.dumps({"spec": spec.key(), "grid": grid.fingerprint(), "v": 1}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _cache_path(spec, grid, cache_dir):
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    if not cache_dir:
        return None
    return Path(cache_dir) / f"green_{_cache_key(spec, grid)}.bin"


def save_matrix(path, Gm: GreenMatrix):
    """Header line with spec/grid JSON, then row-major float64 entries of S."""
    header = json.dumps({"spec": Gm.spec.key(), "grid": Gm.grid.fingerprint(),
                         "M": Gm.M, "dtype": "<f8", "order": "C"}, sort_keys=True)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header.encode() + b"\n")
        fh.write(np.ascontiguousarray(Gm.S, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_matrix(path, spec: KernelSpec, grid: Grid) -> np.ndarray | None:
    path = Path(path)
    if not path.exists():
        return None
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header["spec"] != spec.key() or header["grid"] != grid.fingerprint():
            return None
        data = np.frombuffer(fh.read(), dtype="<f8")
    M = header["M"]
    if data.size != M * M:
        return None
    return data.reshape(M, M).copy()


def assemble(spec: KernelSpec, grid: Grid, cache_dir=None) -> GreenMatrix:
    """Assemble the Galerkin Green matrix, optionally through the disk cache."""
    if spec.domain != grid.domain:
        raise ValueError(f"kernel {spec.family} lives on {spec.domain}, grid on {grid.domain}")
    path = _cache_path(spec, grid, cache_dir)
    t0 = time.perf_counter()
    S = load_matrix(path, spec, grid) if path else None
    cached = S is not None
    if S is None:
        S = _assemble_dense(spec, grid)
    meta = {"scheme": "galerkin-p0", "assembly_seconds": time.perf_counter() - t0,
            "cached": cached}
    if not np.all(np.isfinite(S)):
        raise FloatingPointError("non-finite entries in the assembled Green matrix")
    # the spectral closed form cancels to ~1e-16 relative; clear round-off signs
    S[(S < 0) & (S > -1e-13 * np.abs(S).max())] = 0.0
    if np.any(S < 0):
        raise ArithmeticError(f"negative Green matrix entries (min {S.min():.3e})")
    Gm = GreenMatrix(grid, spec, S, meta)
    if path and not cached:
        save_matrix(path, Gm)
    log.debug("assembled %s M=%d in %.2fs (cached=%s)", spec.family, grid.M,
              meta["assembly_seconds"], cached)
    return Gm


def apply(Gm: GreenMatrix, f) -> GridFunction:
    values = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)
    if values.shape != (Gm.M,):
        raise ValueError(f"shape mismatch: matrix is {Gm.M}x{Gm.M}, function has {values.shape}")
    return GridFunction(Gm.grid, Gm.A @ values)


# ---------------------------------------------------------------------------
# benchmark images

def _weighted_cell_means(grid: Grid, gamma: float, numerator: np.ndarray) -> np.ndarray:
    den = grid.cell_moment(gamma)
    return numerator / den


def cell_average(grid: Grid, func, gamma: float, order: int = 8) -> np.ndarray:
    """delta**gamma-weighted cell means of a bounded function of delta.

    The weight matches the boundary decay of the kernel in its second
    argument, so a cell far from x contributes G(x, .) * mean exactly when
    G(x, y) is proportional to delta(y)**gamma across the cell.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    tau = grid.tau_lo[:, None] + (grid.tau_hi - grid.tau_lo)[:, None] * t[None, :]
    dens = grid.g * tau ** (grid.g - 1) * (grid.tau_hi - grid.tau_lo)[:, None]
    d = tau ** grid.g
    wt = w[None, :] * dens * d ** gamma
    return (wt * func(d)).sum(1) / wt.sum(1)


def image_of_delta_power(Gm: GreenMatrix, beta: float) -> GridFunction:
    """G[delta**-beta] with cell-exact moments of the density."""
    gamma = Gm.spec.gamma
    if beta >= gamma + 1:
        raise ValueError(f"delta^-{beta} is not integrable against delta^{gamma} (needs beta < gamma + 1)")
    if beta == 0:
        f = np.ones(Gm.M)
    else:
        f = _weighted_cell_means(Gm.grid, gamma, Gm.grid.cell_moment(gamma - beta))
    return GridFunction(Gm.grid, Gm.A @ f, label=f"G[delta^-{beta:g}]")


def _log_weight_moment(grid: Grid, a: float, sigma: float, d: float) -> np.ndarray:
    """Cellwise int delta**(a-1) * ln(d/delta)**-sigma d(delta), a > 0."""
    from scipy.special import gamma as Gamma, gammaincc

    def F(h):
        with np.errstate(divide="ignore"):
            x = a * np.log(d / h)
        return d ** a * a ** (sigma - 1) * Gamma(1 - sigma) * gammaincc(1 - sigma, x)

    return F(grid.cell_hi) - np.where(grid.cell_lo > 0, F(np.maximum(grid.cell_lo, 1e-300)), 0.0)


def image_of_log_weight(Gm: GreenMatrix, sigma: float) -> GridFunction:
    """G[delta**(gamma-2s) * ln(d/delta)**-sigma]."""
    s, gamma = Gm.spec.s, Gm.spec.gamma
    if not 0 <= sigma < 1:
        raise ValueError(f"sigma must lie in [0, 1), got {sigma}")
    if not s - 0.5 < gamma < 2 * s:
        raise ValueError(f"needs s - 1/2 < gamma < 2s, got s={s}, gamma={gamma}")
    if sigma == 0:
        out = image_of_delta_power(Gm, 2 * s - gamma)
        return GridFunction(Gm.grid, out.values, label="G[log weight, sigma=0]")
    a = 2 * gamma - 2 * s + 1
    num = _log_weight_moment(Gm.grid, a, sigma, Gm.grid.domain.d_omega)
    f = _weighted_cell_means(Gm.grid, gamma, num)
    return GridFunction(Gm.grid, Gm.A @ f, label=f"G[log weight, sigma={sigma:g}]")


def eps_shift_lower_bound_check(Gm: GreenMatrix, q: float, eps: float, eta: float) -> dict:
    """Largest constants in the epsilon-shifted lower bounds near and away from the boundary."""
    s, gamma = Gm.spec.s, Gm.spec.gamma
    alpha = 2 * s / (q + 1)
    beta = 2 * s - alpha
    if q <= 0 or not 0 < eps <= 1 or not 0 < eta < 1:
        raise ValueError("need q > 0, eps in (0, 1], eta in (0, 1)")
    if gamma <= alpha:
        raise ValueError(f"needs gamma > alpha = {alpha:.6g}")
    grid = Gm.grid
    e1 = eps ** (1.0 / alpha)
    dens = cell_average(grid, lambda d: (d + e1) ** -beta, gamma)
    strip = grid.delta < eta
    near_img = Gm.A @ np.where(strip, dens, 0.0)
    full_img = Gm.A @ dens
    shifted = (grid.delta + e1) ** alpha
    near = grid.delta < eta / 2

    rhs1 = 0.5 * shifted - eps
    pos1 = near & (rhs1 > 0)
    c1 = float(np.min(near_img[pos1] / rhs1[pos1])) if pos1.any() else float("inf")
    far = ~near
    c2 = float(np.min((full_img[far] + eps) / shifted[far])) if far.any() else float("inf")
    return {"alpha": alpha, "beta": beta, "eps": eps, "eta": eta, "c1": c1, "c2": c2,
            "near_nodes": int(near.sum()), "near_nodes_active": int(pos1.sum()),
            "far_nodes": int(far.sum()), "passed": bool(c1 > 0 and c2 > 0)}


# ---------------------------------------------------------------------------
# structural checks

def ibp_asymmetry(Gm: GreenMatrix, f, xi) -> float:
    """|<A f, xi>_w - <f, A xi>_w| / (|f| |xi|) in the weighted norm."""
    w = Gm.grid.weights
    lhs = np.dot(w * (Gm.A @ f), xi)
    rhs = np.dot(w * f, Gm.A @ xi)
    nf = np.sqrt(np.dot(w * f, f))
    nx = np.sqrt(np.dot(w * xi, xi))
    return float(abs(lhs - rhs) / (nf * nx)) if nf * nx > 0 else 0.0


def kato_gaps(Gm: GreenMatrix, f, xi) -> tuple[float, float, float]:
    """Return (lhs - rhs) for the absolute and positive-part Kato inequalities, and the scale.

    Both gaps are <= 0 (up to quadrature error) when the inequalities hold.
    """
    w = Gm.grid.weights
    u = Gm.A @ f
    Gxi = Gm.A @ xi
    sgn = np.sign(u)
    abs_gap = np.dot(w, np.abs(u) * xi) - np.dot(w, sgn * Gxi * f)
    plus_gap = np.dot(w, np.maximum(u, 0) * xi) - np.dot(w, (u > 0) * Gxi * f)
    scale = np.dot(w, np.abs(u) * xi) + np.dot(w, np.abs(Gxi * f))
    return float(abs_gap), float(plus_gap), float(scale)


def hopf_ratio(Gm: GreenMatrix, f) -> float:
    """min_i G[f]_i / delta_i**gamma divided by int f delta**gamma."""
    grid = Gm.grid
    u = Gm.A @ f
    mass = grid.integrate(np.asarray(f) * grid.delta ** Gm.spec.gamma)
    return float(np.min(u / grid.delta ** Gm.spec.gamma) / mass)
