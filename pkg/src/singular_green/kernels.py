"""Green kernels on the interval and the unit ball.

Four families are provided:

``synthetic``
    the two-sided model ``|x-y|^(2s-N) (d(x)/|x-y| ^ 1)^g (d(y)/|x-y| ^ 1)^g``
    taken literally as a kernel (sandwich constants equal to one);
``rfl_interval`` / ``rfl_ball_radial``
    the restricted fractional Laplacian Green function of the unit ball
    (Blumenthal-Getoor-Ray closed form);
``sfl_interval``
    eigen-expansion of the spectral fractional Laplacian on (-1, 1), summed
    in closed form (``K = 0``) or truncated after ``K`` modes.

The vectorised helpers take distances to the boundary and the mutual distance
instead of raw coordinates, so that points 1e-20 away from the boundary keep
full relative precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, roots_legendre, zeta

from .geometry import INTERVAL, RADIAL_BALL, Domain

SYNTHETIC = "synthetic"
RFL_INTERVAL = "rfl_interval"
RFL_BALL = "rfl_ball_radial"
SFL_INTERVAL = "sfl_interval"
FAMILIES = (SYNTHETIC, RFL_INTERVAL, RFL_BALL, SFL_INTERVAL)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    s: float
    gamma: float | None = None
    N: int = 1
    K: int = 0

    def __post_init__(self):
        fam, s, N = self.family, self.s, self.N
        if fam not in FAMILIES:
            raise ValueError(f"unknown kernel family {fam!r}")
        if not 0 < s < 1:
            raise ValueError(f"s must lie in (0, 1), got {s}")
        if fam in (SYNTHETIC, RFL_INTERVAL, SFL_INTERVAL):
            if N != 1:
                raise ValueError(f"{fam} is one-dimensional (N = 1)")
            if s >= 0.5:
                raise ValueError(f"{fam} needs s < 1/2 so that N > 2s")
        if fam == RFL_BALL:
            if N not in (2, 3):
                raise ValueError("rfl_ball_radial supports N in {2, 3}")
            if abs(s - 0.5) < 1e-12:
                raise ValueError("s = 1/2 gives a logarithmic radial kernel; not supported")
        if N <= 2 * s:
            raise ValueError("the kernel estimate needs N > 2s")
        derived = {RFL_INTERVAL: s, RFL_BALL: s, SFL_INTERVAL: 1.0}
        if fam in derived:
            if self.gamma is not None and abs(self.gamma - derived[fam]) > 1e-12:
                raise ValueError(f"gamma is fixed to {derived[fam]} for {fam}")
            object.__setattr__(self, "gamma", derived[fam])
        else:
            if self.gamma is None or not 0 < self.gamma <= 1:
                raise ValueError(f"synthetic kernel needs gamma in (0, 1], got {self.gamma}")
        if fam == SFL_INTERVAL and self.K < 0:
            raise ValueError("truncation K must be >= 0 (0 = closed-form sum)")

    @property
    def domain(self) -> Domain:
        if self.family == RFL_BALL:
            return Domain(RADIAL_BALL, self.N)
        return Domain(INTERVAL, 1)

    @property
    def exact(self) -> bool:
        return self.family != SYNTHETIC

    @property
    def radial(self) -> bool:
        return self.family == RFL_BALL

    def key(self) -> dict:
        d = {"family": self.family, "s": self.s, "gamma": self.gamma, "N": self.N}
        if self.family == SFL_INTERVAL:
            d["K"] = self.K
        return d

    def sfl_tail_bound(self) -> float:
        """lambda_K^{-s}, the size of the first neglected eigen-term (0 if exact)."""
        if self.K == 0:
            return 0.0
        return ((self.K * math.pi / 2) ** 2) ** (-self.s)


def rfl_constant(N: int, s: float) -> float:
    return math.gamma(N / 2) / (4 ** s * math.pi ** (N / 2) * math.gamma(s) ** 2)


def model_kernel(s, gamma, N, dx, dy, dist):
    """Right-hand side of the two-sided Green estimate with unit constants."""
    dist = np.asarray(dist, dtype=float)
    return (dist ** (2 * s - N)
            * np.minimum(np.asarray(dx) / dist, 1.0) ** gamma
            * np.minimum(np.asarray(dy) / dist, 1.0) ** gamma)


def rfl_kernel(N, s, dx, dy, dist):
    """Restricted fractional Laplacian Green function of the unit ball.

    kappa |x-y|^(2s-N) int_0^{r0} t^(s-1) (1+t)^(-N/2) dt with
    r0 = (1-|x|^2)(1-|y|^2)/|x-y|^2; the integral is an incomplete beta
    function B(u0; s, N/2 - s) with u0 = r0/(1+r0).
    """
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    dist = np.asarray(dist, dtype=float)
    b = N / 2 - s
    # 1/r0, written so tiny distances to the boundary keep their precision
    p = (dist / (dx * (2 - dx))) * (dist / (dy * (2 - dy)))
    u0 = 1.0 / (1.0 + p)
    full = math.gamma(s) * math.gamma(b) / math.gamma(s + b)
    return rfl_constant(N, s) * dist ** (2 * s - N) * full * betainc(s, b, u0)


def _cos_series_diff(p, a, b, terms=40):
    """sum_k [cos(k(b-a)) - cos(k(b+a))] / k**p for 0 <= a <= b, a + b <= pi.

    Uses the expansion of the periodic zeta function around zero,
    Gamma(1-p) sin(p pi/2) t^(p-1) + sum_j zeta(p-2j) (-1)^j t^(2j)/(2j)!,
    with the differences of powers formed without cancellation.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t1 = b - a
    r = np.divide(a, b, out=np.zeros_like(b), where=b > 0)
    lead = math.gamma(1 - p) * math.sin(p * math.pi / 2)
    # t1^(p-1) - t2^(p-1) = t1^(p-1) * (1 - (t2/t1)^(p-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lead * t1 ** (p - 1) * -np.expm1((p - 1) * np.log1p(2 * a / t1))
    small = r < 0.5
    at = np.arctanh(np.where(small, r, 0.0))
    t2 = a + b
    fact = 1.0
    for j in range(1, terms):
        fact *= (2 * j - 1) * (2 * j)
        # (b-a)^(2j) - (b+a)^(2j); the expm1 form only where a << b
        d = np.where(small, -(t1 ** (2 * j)) * np.expm1(4 * j * at),
                     t1 ** (2 * j) - t2 ** (2 * j))
        out = out + zeta(p - 2 * j) * (-1) ** j * d / fact
    return out


def sfl_exact(s, side_x, dx, side_y, dy, dist):
    """Spectral Green function on (-1, 1) summed in closed form."""
    side_x, dx, side_y, dy, dist = np.broadcast_arrays(
        np.asarray(side_x), np.asarray(dx, dtype=float), np.asarray(side_y),
        np.asarray(dy, dtype=float), np.asarray(dist, dtype=float))
    # angles A = pi (x+1)/2, reflected so that A_x + A_y <= pi
    same = side_x == side_y
    ax = np.where(same, 0.5 * np.pi * dx, np.where(dx <= dy, 0.5 * np.pi * dx, np.pi - 0.5 * np.pi * dx))
    ay = np.where(same, 0.5 * np.pi * dy, np.where(dx <= dy, np.pi - 0.5 * np.pi * dy, 0.5 * np.pi * dy))
    a = np.minimum(ax, ay)
    b = a + 0.5 * np.pi * dist
    total = _cos_series_diff(2 * s, a, b)
    return 0.5 * (np.pi / 2) ** (-2 * s) * total


def sfl_kernel(s, K, side_x, dx, side_y, dy, chunk=256):
    """Truncated spectral Green function on (-1, 1).

    Eigenpairs sin(k pi (x+1)/2), (k pi/2)^2; points are given by their side
    (-1 left, +1 right) and their distance to the boundary.
    """
    side_x, dx, side_y, dy = np.broadcast_arrays(
        np.asarray(side_x), np.asarray(dx, dtype=float),
        np.asarray(side_y), np.asarray(dy, dtype=float))
    shape = dx.shape
    side_x, dx, side_y, dy = (a.ravel() for a in (side_x, dx, side_y, dy))
    out = np.zeros(dx.size)
    for k0 in range(1, K + 1, chunk):
        k = np.arange(k0, min(K, k0 + chunk - 1) + 1, dtype=float)
        lam = (k * np.pi / 2) ** (-2 * s)
        parity = np.where(k % 2 == 1, 1.0, -1.0)
        fx = np.sin(np.outer(dx, k) * (np.pi / 2)) * np.where(side_x[:, None] > 0, parity, 1.0)
        fy = np.sin(np.outer(dy, k) * (np.pi / 2)) * np.where(side_y[:, None] > 0, parity, 1.0)
        out += (fx * fy) @ lam
    return out.reshape(shape)


_ANG_N0 = 8
_ANG_PANELS = 12
_ANG_NP = 6


def radial_kernel(N, s, dr, drho, a, rfl=True):
    """Angular average of the ball kernel over |y| = rho, x = r e_1.

    ``dr``, ``drho`` are distances to the sphere (1 - r, 1 - rho) and ``a`` is
    |r - rho|.  The angle is split into [0, t1] and a log-spaced range
    [t1, pi] with t1 ~ a / sqrt(r rho), which resolves the near-singular
    peak of the integrand when r and rho are close.
    """
    dr, drho, a = np.broadcast_arrays(np.asarray(dr, dtype=float),
                                      np.asarray(drho, dtype=float),
                                      np.asarray(a, dtype=float))
    shape = dr.shape
    dr, drho, a = dr.ravel(), drho.ravel(), a.ravel()
    r, rho = 1.0 - dr, 1.0 - drho
    rr = np.maximum(r * rho, 1e-300)
    t1 = np.clip(0.5 * a / np.sqrt(rr), 1e-300, np.pi / 8)
    x0, w0 = roots_legendre(_ANG_N0)
    xp, wp = roots_legendre(_ANG_NP)
    # nodes on [0, t1]
    th0 = 0.5 * t1[:, None] * (x0 + 1)
    wt0 = 0.5 * t1[:, None] * w0
    # log panels on [t1, pi]
    L = np.log(np.pi / t1)
    edges = np.linspace(0.0, 1.0, _ANG_PANELS + 1)
    z = (edges[:-1, None] + 0.5 * (xp + 1) / _ANG_PANELS).ravel()
    wz = np.tile(0.5 * wp / _ANG_PANELS, _ANG_PANELS)
    th1 = t1[:, None] * np.exp(L[:, None] * z)
    wt1 = L[:, None] * wz * th1
    th = np.concatenate([th0, th1], axis=1)
    wt = np.concatenate([wt0, wt1], axis=1)
    dist = np.sqrt(a[:, None] ** 2 + 4 * rr[:, None] * np.sin(th / 2) ** 2)
    if rfl:
        vals = rfl_kernel(N, s, dr[:, None], drho[:, None], dist)
    else:
        vals = dist ** (2 * s - N)
    if N == 2:
        out = (vals * wt).sum(axis=1) / np.pi
    else:
        out = 0.5 * (vals * np.sin(th) ** (N - 2) * wt).sum(axis=1)
    return out.reshape(shape)


def _as_point(spec, x):
    if spec.radial:
        p = np.atleast_1d(np.asarray(x, dtype=float))
        if p.size == 1:
            p = np.concatenate([p, np.zeros(spec.N - 1)])
        if p.size != spec.N:
            raise ValueError(f"expected a point in R^{spec.N}")
        return p
    return float(x)


def kernel_value(spec: KernelSpec, x, y) -> float:
    """G(x, y) at two distinct interior points."""
    px, py = _as_point(spec, x), _as_point(spec, y)
    if spec.radial:
        dist = float(np.linalg.norm(px - py))
        dx, dy = 1.0 - np.linalg.norm(px), 1.0 - np.linalg.norm(py)
    else:
        dist = abs(px - py)
        dx, dy = 1.0 - abs(px), 1.0 - abs(py)
    if dist == 0:
        raise ValueError("the kernel is singular on the diagonal x = y")
    if dx <= 0 or dy <= 0:
        raise ValueError("points must lie inside the domain")
    return float(pair_kernel(spec, np.sign(px) if not spec.radial else 1, dx,
                             np.sign(py) if not spec.radial else 1, dy, dist))


def pair_kernel(spec, side_x, dx, side_y, dy, dist):
    """Vectorised point kernel from sides, boundary distances and |x - y|."""
    if spec.family == SYNTHETIC:
        return model_kernel(spec.s, spec.gamma, spec.N, dx, dy, dist)
    if spec.family in (RFL_INTERVAL, RFL_BALL):
        return rfl_kernel(spec.N, spec.s, dx, dy, dist)
    side_x = np.where(np.asarray(side_x) == 0, 1, side_x)
    side_y = np.where(np.asarray(side_y) == 0, 1, side_y)
    if spec.K == 0:
        return sfl_exact(spec.s, side_x, dx, side_y, dy, dist)
    return sfl_kernel(spec.s, spec.K, side_x, dx, side_y, dy)


def sandwich_check(spec: KernelSpec, samples: int = 10_000, seed: int = 0) -> dict:
    """Ratio of G to the unit-constant model over random interior pairs."""
    rng = np.random.default_rng(seed)
    if spec.radial:
        N = spec.N
        pts = rng.normal(size=(2, samples, N))
        pts /= np.linalg.norm(pts, axis=2, keepdims=True)
        rad = rng.uniform(size=(2, samples, 1)) ** (1.0 / N)
        pts *= rad
        dist = np.linalg.norm(pts[0] - pts[1], axis=1)
        dx = 1.0 - rad[0, :, 0]
        dy = 1.0 - rad[1, :, 0]
        sx = sy = np.ones(samples)
    else:
        x, y = rng.uniform(-1, 1, size=(2, samples))
        dist = np.abs(x - y)
        dx, dy = 1.0 - np.abs(x), 1.0 - np.abs(y)
        sx, sy = np.sign(x), np.sign(y)
    keep = dist > 0
    g = pair_kernel(spec, sx[keep], dx[keep], sy[keep], dy[keep], dist[keep])
    m = model_kernel(spec.s, spec.gamma, spec.N, dx[keep], dy[keep], dist[keep])
    ratio = g / m
    return {"family": spec.family, "samples": int(keep.sum()),
            "min_ratio": float(ratio.min()), "max_ratio": float(ratio.max()),
            "finite": bool(np.all(np.isfinite(ratio))),
            "positive": bool(np.all(ratio > 0))}
