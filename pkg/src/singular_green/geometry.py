"""Domains, graded cell partitions and grid functions.

Every cell of a grid lives on one *side* of the domain and is described by an
interval ``[tau_lo, tau_hi]`` of the grading parameter ``tau``, with the
distance to the boundary given by ``delta = tau**g``.  Keeping ``tau`` and
``delta`` (rather than only the coordinate ``x``) lets the kernels resolve
distances far below machine epsilon relative to the domain size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INTERVAL = "interval"
RADIAL_BALL = "radial_ball"


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


@dataclass(frozen=True)
class Domain:
    kind: str = INTERVAL
    N: int = 1

    def __post_init__(self):
        if self.kind not in (INTERVAL, RADIAL_BALL):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == INTERVAL and self.N != 1:
            raise ValueError("the interval domain has N = 1")
        if self.kind == RADIAL_BALL and self.N < 2:
            raise ValueError("radial_ball needs N >= 2")

    @property
    def diameter(self) -> float:
        return 2.0

    @property
    def d_omega(self) -> float:
        return 2.0 * self.diameter

    @property
    def measure(self) -> float:
        if self.kind == INTERVAL:
            return 2.0
        return sphere_area(self.N) / self.N

    def distance(self, x):
        """delta(x) for interval coordinates or ball radii."""
        x = np.asarray(x, dtype=float)
        return 1.0 - np.abs(x)

    def in_strip(self, delta, eta: float):
        """Indicator of the boundary strip {delta < eta}."""
        return np.asarray(delta) < eta


def _power_diff(t_lo, t_hi, g):
    """t_hi**g - t_lo**g without cancellation (0 <= t_lo <= t_hi)."""
    t_lo = np.asarray(t_lo, dtype=float)
    t_hi = np.asarray(t_hi, dtype=float)
    out = np.empty(np.broadcast(t_lo, t_hi).shape)
    t_lo, t_hi = np.broadcast_arrays(t_lo, t_hi)
    zero = t_lo <= 0
    out[zero] = t_hi[zero] ** g
    nz = ~zero
    ratio = (t_hi[nz] - t_lo[nz]) / t_lo[nz]
    out[nz] = t_lo[nz] ** g * np.expm1(g * np.log1p(ratio))
    return out


def _power_gap(t_lo, dt, g):
    """(t_lo + dt)**g - t_lo**g for dt >= 0 given exactly."""
    t_lo, dt = np.broadcast_arrays(np.asarray(t_lo, dtype=float), np.asarray(dt, dtype=float))
    out = np.empty(t_lo.shape)
    zero = t_lo <= 0
    out[zero] = dt[zero] ** g
    nz = ~zero
    out[nz] = t_lo[nz] ** g * np.expm1(g * np.log1p(dt[nz] / t_lo[nz]))
    return out


def _one_minus_power(t, g):
    """1 - t**g accurately for t close to 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.expm1(g * np.log(t))


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-midpoint grid on a graded partition.

    Arrays are ordered by increasing coordinate ``x`` (interval coordinate or
    ball radius).  ``side`` is -1/+1 on the interval, +1 on the ball.
    """

    domain: Domain
    g: float
    x: np.ndarray
    delta: np.ndarray
    weights: np.ndarray
    side: np.ndarray
    tau_lo: np.ndarray
    tau_hi: np.ndarray
    cell_lo: np.ndarray = field(repr=False)
    cell_hi: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return self.x.size

    @property
    def h(self) -> float:
        return float(self.tau_hi[0] - self.tau_lo[0])

    def __len__(self):
        return self.M

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def inner(self, f, g) -> float:
        return float(np.sum(self.weights * np.asarray(f) * np.asarray(g)))

    def fingerprint(self) -> str:
        return f"{self.domain.kind}:N={self.domain.N}:M={self.M}:g={self.g!r}"

    def cell_moment(self, power: float) -> np.ndarray:
        """Exact integral of delta**power over each cell (w.r.t. d(delta))."""
        lo, hi = self.cell_lo, self.cell_hi
        if power == -1.0:
            with np.errstate(divide="ignore"):
                return np.log(hi / lo)
        p1 = power + 1.0
        if p1 <= 0 and np.any(lo <= 0):
            raise ValueError(f"delta**{power} is not integrable at the boundary")
        # (hi**p1 - lo**p1)/p1 written through the tau parametrisation
        return _power_diff(self.tau_lo, self.tau_hi, self.g * p1) / p1


def build_graded_grid(domain: Domain, M: int, g: float = 3.0) -> Grid:
    """Graded midpoint grid with ``M`` cells.

    Each half-interval (or the ball radius) is the image of a uniform
    partition under ``t -> 1 - (1 - t)**g``, so cells cluster at the
    boundary.  Nodes are cell midpoints and never touch the boundary.
    """
    if g < 1:
        raise ValueError(f"grading exponent must be >= 1, got {g}")
    if domain.kind == INTERVAL:
        if M < 2 or M % 2:
            raise ValueError(f"interval grids need an even M >= 2, got {M}")
        n = M // 2
    else:
        if M < 2:
            raise ValueError(f"ball grids need M >= 2, got {M}")
        n = M
    k = np.arange(n, dtype=float)
    tau_lo = k / n
    tau_hi = (k + 1) / n
    width = _power_diff(tau_lo, tau_hi, g)  # d(delta) width of each cell
    lo = tau_lo ** g
    hi = tau_hi ** g
    delta = lo + 0.5 * width
    # cells ordered from the boundary (k = 0) inwards
    if domain.kind == INTERVAL:
        x_right = 1.0 - delta
        x = np.concatenate([-x_right, x_right[::-1]])
        dl = np.concatenate([delta, delta[::-1]])
        w = np.concatenate([width, width[::-1]])
        side = np.concatenate([-np.ones(n), np.ones(n)]).astype(int)
        tl = np.concatenate([tau_lo, tau_lo[::-1]])
        th = np.concatenate([tau_hi, tau_hi[::-1]])
        cl = np.concatenate([lo, lo[::-1]])
        ch = np.concatenate([hi, hi[::-1]])
    else:
        N = domain.N
        r_out = _one_minus_power(tau_lo, g)  # 1 - lo
        r_in = _one_minus_power(tau_hi, g)
        # |S| * (r_out**N - r_in**N)/N, factored to avoid cancellation
        s = sum(r_out ** (N - 1 - m) * r_in ** m for m in range(N))
        w = sphere_area(N) * width * s / N
        dl = delta[::-1]
        x = 1.0 - dl
        w = w[::-1]
        side = np.ones(n, dtype=int)
        tl, th = tau_lo[::-1], tau_hi[::-1]
        cl, ch = lo[::-1], hi[::-1]
    return Grid(domain=domain, g=float(g), x=x, delta=dl, weights=w, side=side,
                tau_lo=tl, tau_hi=th, cell_lo=cl, cell_hi=ch)


def default_grading(gamma: float) -> float:
    return max(3.0, 2.0 / gamma)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise ValueError(f"expected {self.grid.M} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size


def delta_power(grid: Grid, beta: float) -> GridFunction:
    """Node values delta_i**(-beta)."""
    return GridFunction(grid, grid.delta ** (-beta), label=f"delta^{-beta:g}")
