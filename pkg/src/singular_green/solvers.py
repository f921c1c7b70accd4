"""Solvers for the pure singular, source, absorption and perturbed problems.

Every nonlinear solve is a fixed point of the discrete Green matrix,

    u + k A u = A[(u + eps)^-q + extra],

handled by damped Newton with a positivity-preserving line search and a
monotone double-iteration fallback.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .geometry import GridFunction
from .operator import GreenMatrix
from .regimes import classify

log = logging.getLogger(__name__)

PURE, PERTURBED, SOURCE, ABSORPTION = "pure", "perturbed", "source", "absorption"
MODES = (PURE, PERTURBED, SOURCE, ABSORPTION)


class SolverError(RuntimeError):
    """Non-convergence; ``trace`` holds what happened."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


class RegimeError(ValueError):
    """Parameters outside the solvable set; ``report`` is the classification."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class AdmissibilityError(ValueError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class NonlinearitySpec:
    q: float
    mode: str = PURE
    # source lambda * t^power, absorption t^power (negative power: t^-r)
    power: float | None = None
    lam: float = 0.0
    kappa: float | None = None
    mu: float | None = None
    Lambda: float | None = None
    perturbation: GridFunction | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError(f"q must be positive, got {self.q}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == SOURCE:
            if self.power is None or self.power <= 0:
                raise ValueError("source mode needs a positive power (r in (0,1) or p >= 1)")
            if self.lam < 0:
                raise ValueError("source coefficient lambda must be >= 0")
        if self.mode == ABSORPTION:
            if self.power is None:
                raise ValueError("absorption mode needs a power (p >= 1 or negative -r with r < q)")
            if 0 <= self.power < 1 and self.power != 0:
                raise ValueError("absorption power must be >= 1, 0 (no absorption) or negative")
            if self.power < 0 and -self.power >= self.q:
                raise ValueError(f"absorption t^-r needs r < q (r={-self.power}, q={self.q})")
        if self.mode == PERTURBED and self.perturbation is None:
            raise ValueError("perturbed mode needs a perturbation function")
        for name in ("kappa", "mu", "Lambda"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")

    def f(self, t):
        return np.power(t, self.power)

    def g(self, t):
        if self.power == 0:
            return np.zeros_like(t)
        return np.power(t, self.power)


@dataclass(frozen=True)
class EpsSchedule:
    eps0: float = 1e-1
    ratio: float = 0.25
    eps_min: float = 1e-8
    newton_tol: float = 1e-12
    max_newton: int = 60
    tol_outer: float = 1e-8
    max_outer: int = 200

    def __post_init__(self):
        if not self.eps0 > self.eps_min > 0:
            raise ValueError("need eps0 > eps_min > 0")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")

    def levels(self):
        out, e = [], self.eps0
        while e > self.eps_min * (1 + 1e-12):
            out.append(e)
            e *= self.ratio
        out.append(self.eps_min)
        return out


@dataclass
class SolveResult:
    u: GridFunction
    trace: list
    converged: bool
    wall_time: float
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    weak_dual_gap: float | None = None
    S1: float | None = None
    S2: float | None = None
    extras: dict = field(default_factory=dict)


@dataclass
class EigenResult:
    lambda1: float
    phi: GridFunction
    residual: float
    iterations: int


# ---------------------------------------------------------------------------
# inner solver

def _residual(A, u, eps, q, extra, kappa):
    rhs = (u + eps) ** -q + extra
    F = u - A @ (rhs - kappa * u)
    return F, float(np.max(np.abs(F) / u))


def _double_iteration(A, u, eps, q, extra, kappa, tol, maxit=2000):
    """u <- T(T(u)); T antitone, so T o T is monotone."""
    Minv = None
    if kappa:
        Minv = lu_factor(np.eye(len(u)) + kappa * A)

    def T(v):
        w = A @ ((v + eps) ** -q + extra)
        return lu_solve(Minv, w) if Minv is not None else w

    for it in range(maxit):
        new = T(T(u))
        if np.any(new <= 0):
            return u, False, it
        if np.max(np.abs(new - u) / new) < tol:
            return new, True, it
        u = new
    return u, False, maxit


def solve_regularized(Gm: GreenMatrix, q: float, eps: float, rhs_extra=None, kappa: float = 0.0,
                      u0=None, tol: float = 1e-12, max_iter: int = 60, info: dict | None = None
                      ) -> GridFunction:
    """Solve u = G[(u + eps)^-q + rhs_extra - kappa u] by damped Newton."""
    if not eps >= 0:
        raise ValueError("eps must be >= 0")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    A = Gm.A if isinstance(Gm, GreenMatrix) else np.atleast_2d(np.asarray(Gm, dtype=float))
    n = A.shape[0]
    extra = np.zeros(n) if rhs_extra is None else np.asarray(getattr(rhs_extra, "values", rhs_extra), float)
    if u0 is None:
        g1 = A @ np.ones(n)
        u = g1 * max(float(g1.max()), 1e-300) ** (-q / (1 + q))
    else:
        u = np.array(getattr(u0, "values", u0), dtype=float)
    if np.any(u <= 0):
        raise ValueError("initial guess must be positive")
    F, r = _residual(A, u, eps, q, extra, kappa)
    I = np.eye(n)
    history = []
    for it in range(max_iter):
        if r < tol:
            break
        J = I + A * (q * (u + eps) ** (-q - 1) + kappa)[None, :]
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-10:
            cand = u + t * step
            if np.all(cand > 0):
                Fc, rc = _residual(A, cand, eps, q, extra, kappa)
                if rc < r or rc < tol:
                    break
            t *= 0.5
        else:
            break
        u, F, r = cand, Fc, rc
        history.append((t, r))
    newton_ok = r < tol
    fallback = False
    if not newton_ok:
        # Newton stalls only at round-off level or far from the solution; try the monotone map
        u2, ok, _ = _double_iteration(A, u, eps, q, extra, kappa, tol)
        F2, r2 = _residual(A, u2, eps, q, extra, kappa)
        fallback = True
        if r2 < r:
            u, r = u2, r2
        if not (ok or r < 100 * tol):
            raise SolverError(f"no convergence at eps={eps:g}: residual {r:.3e}",
                              [{"eps": eps, "newton": history, "residual": r}])
    if info is not None:
        info.update({"eps": eps, "iterations": len(history), "residual": r, "fallback": fallback})
    grid = Gm.grid if isinstance(Gm, GreenMatrix) else None
    if grid is None:
        return u
    return GridFunction(grid, u, label=f"u_eps({eps:g})")


# ---------------------------------------------------------------------------
# pure problem

def _require_regime(Gm: GreenMatrix, q: float):
    spec = Gm.spec
    rep = classify(spec.s, spec.gamma, q)
    if not rep.solvable:
        raise RegimeError(f"(s={spec.s}, gamma={spec.gamma}, q={q}) not solvable: {rep.reason}", rep)
    return rep


def solve_pure(Gm: GreenMatrix, q: float, schedule: EpsSchedule | None = None, u0=None,
               rhs_extra=None, check_regime: bool = True) -> SolveResult:
    """epsilon-continuation towards the weak-dual solution of u = G[u^-q]."""
    schedule = schedule or EpsSchedule()
    if check_regime:
        _require_regime(Gm, q)
    t0 = time.perf_counter()
    trace, levels, u = [], [], u0
    for eps in schedule.levels():
        info = {}
        u = solve_regularized(Gm, q, eps, rhs_extra, u0=u, tol=schedule.newton_tol,
                              max_iter=schedule.max_newton, info=info)
        levels.append(u.values)
        trace.append(info)
    values = u.values
    last_delta = None
    if len(levels) > 1:
        last_delta = float(np.max(np.abs(values - levels[-2])) / np.max(values))
    gamma = Gm.spec.gamma
    c_low = float(np.min(values / Gm.grid.delta ** gamma))
    g1 = Gm.A @ np.ones(Gm.M)
    res = SolveResult(u=u, trace=trace, converged=True, wall_time=time.perf_counter() - t0,
                      lower=c_low * Gm.grid.delta ** gamma, S1=float(values.max()),
                      S2=float(g1.max()), extras={"last_step_change": last_delta,
                                                   "eps_final": schedule.eps_min})
    res.weak_dual_gap = weak_dual_gap(Gm, values, q, schedule.eps_min, rhs_extra)
    return res


def solve_perturbed(Gm: GreenMatrix, q: float, f, schedule: EpsSchedule | None = None) -> SolveResult:
    """u = G[u^-q + f] with f >= 0 of order delta^gamma."""
    vals = np.asarray(getattr(f, "values", f), float)
    if np.any(vals < 0):
        raise ValueError("perturbation must be nonnegative")
    return solve_pure(Gm, q, schedule, rhs_extra=vals)


def weak_dual_gap(Gm: GreenMatrix, u, q, eps=0.0, rhs_extra=None, xi=None) -> float:
    """Relative gap of sum w u xi against sum w F(u) G[xi] for one test function."""
    grid = Gm.grid
    u = np.asarray(getattr(u, "values", u), float)
    xi = grid.delta ** Gm.spec.gamma if xi is None else np.asarray(xi, float)
    F = (u + eps) ** -q
    if rhs_extra is not None:
        F = F + np.asarray(getattr(rhs_extra, "values", rhs_extra), float)
    lhs = grid.integrate(u * xi)
    rhs = grid.integrate(F * (Gm.A @ xi))
    return float(abs(lhs - rhs) / abs(lhs)) if lhs != 0 else float(abs(rhs))


def check_weak_dual(Gm: GreenMatrix, result, q: float, test_count: int = 10, seed: int = 0,
                    eps: float | None = None) -> dict:
    """Max relative weak-dual gap over random test functions delta^gamma * (bounded random)."""
    u = result.u if isinstance(result, SolveResult) else result
    if eps is None:
        eps = result.extras.get("eps_final", 0.0) if isinstance(result, SolveResult) else 0.0
    rng = np.random.default_rng(seed)
    dg = Gm.grid.delta ** Gm.spec.gamma
    gaps = [weak_dual_gap(Gm, u, q, eps, xi=dg)]
    for _ in range(test_count):
        gaps.append(weak_dual_gap(Gm, u, q, eps, xi=dg * rng.uniform(0.5, 1.5, Gm.M)))
    return {"max_gap": float(max(gaps)), "gaps": gaps, "seed": seed, "test_count": test_count}


# ---------------------------------------------------------------------------
# source problem

def check_source_admissible(spec: NonlinearitySpec, S1: float, S2: float) -> dict:
    """Admissibility of lambda * t^power, with the bracket size Lambda and shift kappa."""
    p, lam = spec.power, spec.lam
    c1, c2 = S1, S2
    out = {"power": p, "lambda": lam, "c1": c1, "c2": c2}
    if p is None or p <= 0:
        raise ValueError("source power must be positive")
    if p < 1:
        Lam = 1.0 if spec.Lambda is None else spec.Lambda
        C = Lam / (c1 + c2 * Lam) ** p
        out.update(Lambda=Lam, C_Lambda=C, admissible=bool(lam < C))
    else:
        if p == 1:
            lam_star = 1.0 / c2
            Lam = lam * c1 / (1 - lam * c2) if lam < lam_star else math.inf
        else:
            lam_star = (p - 1) ** (p - 1) / (c1 ** (p - 1) * c2 * p ** p)
            Lam = c1 / (c2 * (p - 1))
        if spec.Lambda is not None:
            Lam = spec.Lambda
        out.update(Lambda=Lam, lambda_star=lam_star, admissible=bool(lam < lam_star))
    if spec.kappa is None:
        # t -> lambda t^p is already increasing
        kappa = 0.0
    else:
        kappa = spec.kappa
        log.info("user-supplied kappa=%g", kappa)
    out["kappa"] = kappa
    return out


def solve_source(Gm: GreenMatrix, spec: NonlinearitySpec, schedule: EpsSchedule | None = None,
                 bracket_tol: float = 1e-10, pure: SolveResult | None = None) -> SolveResult:
    """Monotone scheme v_n + k G v_n = G[v_n^-q + lam f(v_{n-1}) + k v_{n-1}], v_0 = u*."""
    schedule = schedule or EpsSchedule()
    if spec.mode != SOURCE:
        raise ValueError("solve_source needs mode='source'")
    _require_regime(Gm, spec.q)
    t0 = time.perf_counter()
    pure = pure or solve_pure(Gm, spec.q, schedule)
    ustar = pure.u.values
    adm = check_source_admissible(spec, pure.S1, pure.S2)
    if not adm["admissible"]:
        raise AdmissibilityError("source term not admissible", adm)
    Lam, kappa, eps = adm["Lambda"], adm["kappa"], schedule.eps_min
    g1 = Gm.A @ np.ones(Gm.M)
    upper = ustar + Lam * g1
    trace, v, converged = [], ustar, False
    for n in range(1, schedule.max_outer + 1):
        extra = spec.lam * spec.f(v) + kappa * v
        info = {}
        new = solve_regularized(Gm, spec.q, eps, extra, kappa, u0=v, tol=schedule.newton_tol,
                                max_iter=schedule.max_newton, info=info).values
        change = float(np.max(np.abs(new - v)) / np.max(new))
        lo_gap = float(np.min(new - ustar))
        up_gap = float(np.min(upper - new))
        trace.append({"n": n, "change": change, "min_v_minus_ustar": lo_gap,
                      "min_upper_minus_v": up_gap, "newton": info["iterations"],
                      "residual": info["residual"]})
        if lo_gap < -bracket_tol or up_gap < -bracket_tol:
            raise SolverError(f"bracket violated at n={n}: {lo_gap:.3e}, {up_gap:.3e}", trace)
        v = new
        if change < schedule.tol_outer:
            converged = True
            break
    if not converged:
        raise SolverError("source scheme did not converge", trace)
    u = GridFunction(Gm.grid, v, label="v")
    res = SolveResult(u=u, trace=trace, converged=True, wall_time=time.perf_counter() - t0,
                      lower=ustar, upper=upper, S1=pure.S1, S2=pure.S2,
                      extras={"admissibility": adm, "outer_iterations": len(trace),
                              "eps_final": eps})
    res.weak_dual_gap = weak_dual_gap(Gm, v, spec.q, eps, spec.lam * spec.f(v))
    return res


# ---------------------------------------------------------------------------
# absorption problem

def find_ell(w0: np.ndarray, q: float, g, iters: int = 200) -> float:
    """Largest ell in (0, 1] with ell^q (|w0|^q |g(ell w0)| + ell) <= 1, by bisection."""
    wmax = float(np.max(w0))

    def ok(ell):
        return ell ** q * (wmax ** q * float(np.max(np.abs(g(ell * w0)))) + ell) <= 1.0

    if ok(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    if lo <= 0:
        raise AdmissibilityError("no admissible ell found")
    return lo


def solve_absorption(Gm: GreenMatrix, spec: NonlinearitySpec, schedule: EpsSchedule | None = None,
                     bracket_tol: float = 1e-10, pure: SolveResult | None = None) -> SolveResult:
    """Monotone scheme w_n + m G w_n = G[w_n^-q - g(w_{n-1}) + m w_{n-1}], w_0 = u*."""
    schedule = schedule or EpsSchedule()
    if spec.mode != ABSORPTION:
        raise ValueError("solve_absorption needs mode='absorption'")
    _require_regime(Gm, spec.q)
    t0 = time.perf_counter()
    pure = pure or solve_pure(Gm, spec.q, schedule)
    w0 = pure.u.values
    S1 = pure.S1
    p = spec.power
    mu_min = p * S1 ** (p - 1) if p >= 1 else 0.0
    mu = spec.mu
    if spec.mu is None:
        mu = 2 * mu_min
    elif p >= 1 and mu <= mu_min:
        raise AdmissibilityError(f"mu={mu:g} too small: t -> mu t - g(t) must increase on (0, {S1:g}]"
                                 f" (needs mu > {mu_min:g})", {"mu": mu, "mu_min": mu_min, "S1": S1})
    ell = find_ell(w0, spec.q, spec.g)
    lower = ell * w0
    eps = schedule.eps_min
    trace, w, converged = [], w0, False
    for n in range(1, schedule.max_outer + 1):
        extra = mu * w - spec.g(w)
        info = {}
        new = solve_regularized(Gm, spec.q, eps, extra, mu, u0=w, tol=schedule.newton_tol,
                                max_iter=schedule.max_newton, info=info).values
        change = float(np.max(np.abs(new - w)) / np.max(new))
        gaps = {"min_w_minus_lower": float(np.min(new - lower)),
                "min_prev_minus_w": float(np.min(w - new)),
                "min_w0_minus_w": float(np.min(w0 - new))}
        trace.append({"n": n, "change": change, **gaps, "newton": info["iterations"],
                      "residual": info["residual"]})
        if min(gaps.values()) < -bracket_tol:
            raise SolverError(f"bracket violated at n={n}: {gaps}", trace)
        w = new
        if change < schedule.tol_outer:
            converged = True
            break
    if not converged:
        raise SolverError("absorption scheme did not converge", trace)
    res = SolveResult(u=GridFunction(Gm.grid, w, label="w"), trace=trace, converged=True,
                      wall_time=time.perf_counter() - t0, lower=lower, upper=w0, S1=S1,
                      S2=pure.S2, extras={"ell": ell, "mu": mu, "outer_iterations": len(trace),
                                          "eps_final": eps})
    res.weak_dual_gap = weak_dual_gap(Gm, w, spec.q, eps, -spec.g(w))
    return res


def solve(Gm: GreenMatrix, spec: NonlinearitySpec, schedule: EpsSchedule | None = None) -> SolveResult:
    if spec.mode == PURE:
        return solve_pure(Gm, spec.q, schedule)
    if spec.mode == PERTURBED:
        return solve_perturbed(Gm, spec.q, spec.perturbation, schedule)
    if spec.mode == SOURCE:
        return solve_source(Gm, spec, schedule)
    return solve_absorption(Gm, spec, schedule)


# ---------------------------------------------------------------------------
# eigenpair

def principal_eigenpair(Gm: GreenMatrix, tol: float = 1e-10, max_iter: int = 100_000) -> EigenResult:
    """Power iteration for the top eigenvalue of the Green matrix; lambda_1 = 1/top."""
    A = Gm.A if isinstance(Gm, GreenMatrix) else np.atleast_2d(np.asarray(Gm, float))
    phi = np.ones(A.shape[0])
    for it in range(1, max_iter + 1):
        y = A @ phi
        top = float(np.max(np.abs(y)))
        phi_new = y / top
        # residual of phi = lambda_1 G[phi] with lambda_1 = 1/top, in the sup norm
        res = float(np.max(np.abs(phi - y / top)))
        phi = phi_new
        if res < tol:
            break
    else:
        raise SolverError(f"power iteration did not converge in {max_iter} steps")
    lam1 = 1.0 / float(np.max(np.abs(A @ phi)))
    res = float(np.max(np.abs(phi - lam1 * (A @ phi))))
    grid = Gm.grid if isinstance(Gm, GreenMatrix) else None
    phi_gf = GridFunction(grid, phi, label="phi_1") if grid is not None else phi
    return EigenResult(lam1, phi_gf, res, it)
