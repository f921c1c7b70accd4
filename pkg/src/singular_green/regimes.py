"""Critical exponents, regime classification and boundary-exponent fits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import GridFunction

A_MINUS, A_ZERO, A_PLUS, OUT_OF_SCOPE = "A-", "A0", "A+", "out-of-scope"
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CriticalExponents:
    s: float
    gamma: float
    q: float
    q_star: float
    q_star_star: float
    alpha: float
    beta: float

    def as_dict(self):
        return asdict(self)


def critical_exponents(s: float, gamma: float, q: float) -> CriticalExponents:
    if not 0 < s <= 1:
        raise ValueError(f"s must lie in (0, 1], got {s}")
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if not q > 0 or not math.isfinite(q):
        raise ValueError(f"q must be a positive number, got {q}")
    q_star = 2 * s / gamma - 1
    q_ss = math.inf if gamma >= 2 * s - 1 else (gamma + 1) / (2 * s - gamma - 1)
    alpha = 2 * s / (q + 1)
    return CriticalExponents(s, gamma, q, q_star, q_ss, alpha, 2 * s * q / (q + 1))


@dataclass(frozen=True)
class RegimeReport:
    exponents: CriticalExponents
    in_E: bool
    reason: str
    regime: str
    exponent: float | None
    log_power: float | None
    # critical case s - 1/2 < gamma < s: u lies between delta^gamma and delta^gamma*log
    log_power_bounds: tuple | None = None

    @property
    def solvable(self) -> bool:
        """In E, or on the critical line where the boundary class is still known."""
        return self.in_E or self.regime == A_ZERO

    def as_dict(self):
        d = asdict(self)
        d["exponents"] = self.exponents.as_dict()
        d["solvable"] = self.solvable
        return d


def _is_critical(s, gamma, q):
    # q = q* <=> q*gamma = 2s - gamma
    lhs, rhs = q * gamma, 2 * s - gamma
    return abs(lhs - rhs) <= TIE_RTOL * max(abs(lhs), abs(rhs), 1e-300)


def classify(s: float, gamma: float, q: float) -> RegimeReport:
    ce = critical_exponents(s, gamma, q)
    half = s - 0.5
    if gamma >= 2 * s:
        return RegimeReport(ce, False, f"gamma={gamma:g} >= 2s={2 * s:g}: no singular regime",
                            OUT_OF_SCOPE, None, None)
    if _is_critical(s, gamma, q):
        if gamma > half:
            if s <= gamma:
                return RegimeReport(ce, False, "q = q* (critical line, s <= gamma)",
                                    A_ZERO, gamma, gamma / (2 * s))
            return RegimeReport(ce, False, "q = q* (critical line, s - 1/2 < gamma < s)",
                                A_ZERO, gamma, None, (0.0, 1.0))
        return RegimeReport(ce, False, "q = q* with gamma <= s - 1/2", OUT_OF_SCOPE, None, None)
    if q < ce.q_star:
        if gamma >= half:
            return RegimeReport(ce, True, "0 < q < q*, gamma >= s - 1/2", A_MINUS, gamma, 0.0)
        return RegimeReport(ce, False, "q < q* but gamma < s - 1/2", OUT_OF_SCOPE, None, None)
    if q < ce.q_star_star and gamma > half:
        return RegimeReport(ce, True, "q* < q < q**, gamma > s - 1/2", A_PLUS, ce.alpha, 0.0)
    if q >= ce.q_star_star:
        return RegimeReport(ce, False, f"q >= q** = {ce.q_star_star:g}: no boundary estimates",
                            OUT_OF_SCOPE, None, None)
    return RegimeReport(ce, False, "q > q* but gamma <= s - 1/2", OUT_OF_SCOPE, None, None)


# ---------------------------------------------------------------------------
# fits

@dataclass(frozen=True)
class ExponentFit:
    theta: float
    log_power: float | None
    window: tuple
    r2: float
    c_low: float
    c_high: float
    nodes: int
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def _window_mask(u: GridFunction, window):
    d = u.grid.delta
    lo, hi = window if window is not None else (5 * d.min(), 0.05)
    if not lo < hi:
        raise ValueError(f"empty fit window [{lo}, {hi}]")
    m = (d >= lo) & (d <= hi)
    if m.sum() < 8:
        raise ValueError(f"fit window [{lo:.3g}, {hi:.3g}] holds only {int(m.sum())} nodes (need 8)")
    vals = u.values[m]
    if np.any(vals <= 0):
        raise ValueError("function must be positive on the fit window")
    return m, (float(lo), float(hi))


def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(res ** 2) / tot if tot > 0 else 1.0
    return coef, float(r2)


def fit_boundary_exponent(u: GridFunction, window=None, joint_log: bool = False) -> ExponentFit:
    """Slope of ln u against ln delta on the window.

    With ``joint_log`` the model ln u = c + theta ln delta + p ln ln(d/delta)
    is fitted instead, which separates a power from a logarithmic factor.
    """
    m, win = _window_mask(u, window)
    d = u.grid.delta[m]
    y = np.log(u.values[m])
    cols = [np.ones_like(d), np.log(d)]
    if joint_log:
        cols.append(np.log(np.log(u.grid.domain.d_omega / d)))
    coef, r2 = _lstsq(np.column_stack(cols), y)
    theta = float(coef[1])
    p = float(coef[2]) if joint_log else None
    model = d ** theta * (np.log(u.grid.domain.d_omega / d) ** p if joint_log else 1.0)
    ratio = u.values[m] / model
    return ExponentFit(theta, p, win, r2, float(ratio.min()), float(ratio.max()), int(m.sum()))


def fit_log_power(u: GridFunction, theta: float, window=None) -> ExponentFit:
    """Slope of ln(u / delta**theta) against ln ln(d/delta)."""
    m, win = _window_mask(u, window)
    d = u.grid.delta[m]
    L = np.log(np.log(u.grid.domain.d_omega / d))
    y = np.log(u.values[m]) - theta * np.log(d)
    coef, r2 = _lstsq(np.column_stack([np.ones_like(d), L]), y)
    p = float(coef[1])
    ratio = np.exp(y - p * L)
    return ExponentFit(float(theta), p, win, r2, float(ratio.min()), float(ratio.max()), int(m.sum()))


# ---------------------------------------------------------------------------
# lemma verification suite

CASES = ("est_green_3regimes", "log_lemma_near", "log_lemma_far", "hopf", "ibp", "kato", "eps_lower")


def green_power_prediction(s: float, gamma: float, beta: float) -> dict:
    """Boundary behaviour of G[delta^-beta] for beta < gamma + 1."""
    crit = 2 * s - beta
    if abs(gamma - crit) <= 1e-12:
        if 2 * gamma > 2 * s - 1:
            return {"exponent": gamma, "log_power": 1.0, "regime": "critical"}
        return {"exponent": None, "log_power": None, "regime": "undetermined"}
    if gamma < crit:
        return {"exponent": gamma, "log_power": 0.0, "regime": "kernel"}
    return {"exponent": crit, "log_power": 0.0, "regime": "source"}


def _affine_log_fit(u, theta, window=None):
    """u / delta^theta = a + b ln(d/delta): the log factor with an additive constant."""
    m, _ = _window_mask(u, window)
    d = u.grid.delta[m]
    L = np.log(u.grid.domain.d_omega / d)
    coef, r2 = _lstsq(np.column_stack([np.ones_like(L), L]), u.values[m] / d ** theta)
    return {"a": float(coef[0]), "b": float(coef[1]), "r2": r2}


def _verify_three(Gm, betas=None, tol=0.05, log_tol=0.15, window=None):
    from .operator import image_of_delta_power
    s, gamma = Gm.spec.s, Gm.spec.gamma
    crit = 2 * s - gamma
    if betas is None:
        hi = crit + 0.3 if crit + 0.3 < 2 * s else 0.5 * (crit + 2 * s)
        betas = [crit - 0.2, crit, hi]
    rows, ok = [], True
    for beta in betas:
        pred = green_power_prediction(s, gamma, beta)
        img = image_of_delta_power(Gm, beta)
        row = {"beta": beta, **{f"predicted_{k}": v for k, v in pred.items()}}
        if pred["regime"] == "critical":
            joint = fit_boundary_exponent(img, window, joint_log=True)
            lp = fit_log_power(img, gamma, window)
            row.update(exponent=joint.theta, log_power=lp.log_power, joint_log_power=joint.log_power,
                       affine_log=_affine_log_fit(img, gamma, window))
            good = abs(joint.theta - gamma) <= tol and abs(lp.log_power - 1.0) <= log_tol
        elif pred["regime"] == "undetermined":
            row.update(exponent=fit_boundary_exponent(img, window).theta)
            good = True
        else:
            fit = fit_boundary_exponent(img, window)
            row.update(exponent=fit.theta, r2=fit.r2)
            good = abs(fit.theta - pred["exponent"]) <= tol
        row["passed"] = bool(good)
        ok &= good
        rows.append(row)
    return ok, {"cases": rows, "tol": tol, "log_tol": log_tol}


def verify_green_lemma(Gm, case: str, seed: int = 0, **params) -> dict:
    """Numerical check of one of the Green-operator lemmas; returns a pass/fail report."""
    from . import operator as op
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}; choose from {CASES}")
    spec, grid = Gm.spec, Gm.grid
    s, gamma = spec.s, spec.gamma
    rng = np.random.default_rng(seed)
    count = int(params.get("count", 100))
    diagnostic = False
    if case == "est_green_3regimes":
        passed, details = _verify_three(Gm, params.get("betas"), params.get("tol", 0.05),
                                        params.get("log_tol", 0.15), params.get("window"))
    elif case == "log_lemma_near":
        sigma = params.get("sigma", 0.5)
        window = params.get("window", (1e-4, 1e-2))
        img = op.image_of_log_weight(Gm, sigma)
        fit = fit_log_power(img, gamma, window)
        tol = params.get("tol", 0.1)
        passed = abs(fit.log_power - (1 - sigma)) <= tol
        details = {"sigma": sigma, "log_power": fit.log_power, "predicted": 1 - sigma,
                   "tol": tol, "window": window, "c_low": fit.c_low, "c_high": fit.c_high}
    elif case == "log_lemma_far":
        sigma = params.get("sigma", 0.5)
        eta = params.get("eta", 0.2)
        img = op.image_of_log_weight(Gm, sigma).values
        d = grid.delta
        far = d >= eta / 2
        model = d[far] ** gamma * np.log(grid.domain.d_omega / d[far]) ** (1 - sigma)
        ratio = img[far] / model
        c_low, c_high = float(ratio.min()), float(ratio.max())
        passed = bool(np.isfinite(c_high) and c_low > 0)
        near03 = int(np.argmin(np.abs(d - 0.3)))
        details = {"sigma": sigma, "eta": eta, "c_low": c_low, "c_high": c_high,
                   "ratio_at_0.3": float(img[near03] / (d[near03] ** gamma *
                                                        np.log(grid.domain.d_omega / d[near03]) ** (1 - sigma)))}
    elif case == "hopf":
        cs = [op.hopf_ratio(Gm, rng.uniform(0, 1, Gm.M) * (rng.uniform(size=Gm.M) < 0.5) + 1e-3)
              for _ in range(count)]
        c = float(min(cs))
        passed = bool(np.isfinite(c) and c > 0)
        details = {"c": c, "c_max": float(max(cs)), "count": count}
    elif case == "ibp":
        worst = 0.0
        for _ in range(count):
            f, xi = rng.standard_normal(Gm.M), rng.standard_normal(Gm.M)
            worst = max(worst, op.ibp_asymmetry(Gm, f, xi))
        tol = params.get("tol", 1e-10)
        passed = worst <= tol
        details = {"max_asymmetry": worst, "tol": tol, "count": count}
    elif case == "kato":
        rel = params.get("tol_quad", 1e-8)
        viol_abs = viol_plus = 0
        worst_abs = worst_plus = -np.inf
        dg = grid.delta ** gamma
        for _ in range(count):
            f = rng.standard_normal(Gm.M)
            xi = dg * rng.uniform(0.1, 1.0, Gm.M)
            a, b, scale = op.kato_gaps(Gm, f, xi)
            worst_abs, worst_plus = max(worst_abs, a / scale), max(worst_plus, b / scale)
            viol_abs += a > rel * scale
            viol_plus += b > rel * scale
        diagnostic = not spec.exact
        passed = True if diagnostic else (viol_abs == 0 and viol_plus == 0)
        details = {"violations_abs": int(viol_abs), "violations_plus": int(viol_plus),
                   "worst_abs_gap": float(worst_abs), "worst_plus_gap": float(worst_plus),
                   "tol_quad": rel, "count": count,
                   "holds": bool(viol_abs == 0 and viol_plus == 0)}
    else:  # eps_lower
        q = params.get("q", 3.0)
        eta = params.get("eta", 0.2)
        eps_list = params.get("eps_list", (1e-3, 1e-4, 1e-5))
        reps = [op.eps_shift_lower_bound_check(Gm, q, e, eta) for e in eps_list]
        c1 = [r["c1"] for r in reps]
        spread = max(c1) / min(c1) - 1 if min(c1) > 0 else math.inf
        passed = all(r["passed"] for r in reps)
        details = {"reports": reps, "c1_spread": spread, "c1_stable": bool(spread <= 0.2)}
    return {"case": case, "kernel": spec.key(), "M": Gm.M, "passed": bool(passed),
            "diagnostic": diagnostic, "seed": seed, "details": details}
