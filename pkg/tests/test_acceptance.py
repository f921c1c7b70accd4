"""End-to-end acceptance criteria; each test records one PASS/FAIL line."""
import numpy as np
import pytest

from singular_green import (EpsSchedule, NonlinearitySpec, check_source_admissible,
                            fit_boundary_exponent, fit_log_power, principal_eigenpair,
                            solve_absorption, solve_pure, solve_regularized, solve_source,
                            verify_green_lemma)

import conftest
from conftest import green


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def pure_rfl(rfl1024):
    return {q: solve_pure(rfl1024, q) for q in (0.5, 1.0, 3.0)}


def test_criterion_01_weak_regime(pure_rfl):
    fit = fit_boundary_exponent(pure_rfl[0.5].u)
    record(1, abs(fit.theta - 0.25) <= 0.05 and fit.r2 >= 0.99,
           f"q=0.5 theta={fit.theta:.4f} (0.25 +- 0.05) R2={fit.r2:.5f}")


def test_criterion_02_strong_regime(pure_rfl):
    fit = fit_boundary_exponent(pure_rfl[3.0].u)
    record(2, abs(fit.theta - 0.125) <= 0.05, f"q=3 theta={fit.theta:.4f} (0.125 +- 0.05)")


def test_criterion_03_critical_regime(pure_rfl):
    u = pure_rfl[1.0].u
    joint = fit_boundary_exponent(u, joint_log=True)
    lp = fit_log_power(u, 0.25)
    ok = abs(joint.theta - 0.25) <= 0.05 and abs(lp.log_power - 0.5) <= 0.15
    record(3, ok, f"q=1 base theta={joint.theta:.4f} (0.25 +- 0.05) "
                  f"log-power={lp.log_power:.4f} (0.5 +- 0.15)")


def test_criterion_04_green_three_regimes(synth1024):
    rep = verify_green_lemma(synth1024, "est_green_3regimes", betas=[0.1, 0.3, 0.6])
    rows = rep["details"]["cases"]
    text = ", ".join(f"beta={r['beta']:g}: theta={r['exponent']:.4f}"
                     + (f" log-power={r['log_power']:.4f}" if "log_power" in r else "")
                     for r in rows)
    expected = {0.1: 0.5, 0.3: 0.5, 0.6: 0.2}
    ok = all(abs(r["exponent"] - expected[r["beta"]]) <= 0.05 for r in rows)
    ok &= abs(rows[1]["log_power"] - 1.0) <= 0.15 and rep["passed"]
    record(4, ok, text)


def test_criterion_05_log_identity(synth1024):
    rep = verify_green_lemma(synth1024, "log_lemma_near", sigma=0.5, window=(1e-4, 1e-2))
    lp = rep["details"]["log_power"]
    record(5, abs(lp - 0.5) <= 0.1, f"sigma=0.5 log-power={lp:.4f} (0.5 +- 0.1)")


IBP_KERNELS = [("rfl_interval", 0.25, None, 512, 8.0, 1),
               ("sfl_interval", 0.25, None, 256, 8.0, 1),
               ("synthetic", 0.4, 0.5, 512, 4.0, 1),
               ("rfl_ball_radial", 0.75, None, 64, 3.0, 3)]


def test_criterion_06_discrete_ibp():
    worst, ok = {}, True
    for fam, s, gamma, M, g, N in IBP_KERNELS:
        rep = verify_green_lemma(green(fam, s, gamma, M=M, g=g, N=N), "ibp", seed=6, count=100)
        worst[fam] = rep["details"]["max_asymmetry"]
        ok &= rep["passed"] and worst[fam] <= 1e-10
    record(6, ok, "max asymmetry " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def test_criterion_07_kato(rfl1024):
    rep = verify_green_lemma(rfl1024, "kato", seed=7, count=100, tol_quad=1e-8)
    d = rep["details"]
    ok = rep["passed"] and not rep["diagnostic"] and d["violations_abs"] == 0 \
        and d["violations_plus"] == 0
    record(7, ok, f"violations={d['violations_abs']}/{d['violations_plus']} "
                  f"worst gaps {d['worst_abs_gap']:.3e}, {d['worst_plus_gap']:.3e} (x scale)")


def test_criterion_08_eps_monotone(rfl1024):
    sols, u = [], None
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        u = solve_regularized(rfl1024, 0.5, eps, u0=u).values
        sols.append(u)
    worst = min(float(np.min(b - a)) for a, b in zip(sols, sols[1:]))
    record(8, worst >= -1e-10, f"min increment {worst:.3e} (>= -1e-10)")


def test_criterion_09_uniqueness(rfl1024):
    d, g1 = rfl1024.grid.delta, rfl1024.A @ np.ones(rfl1024.M)
    gaps = {}
    for q in (0.5, 1.0, 3.0):
        a = solve_pure(rfl1024, q, u0=0.1 * d ** 0.25).u.values
        b = solve_pure(rfl1024, q, u0=10 * g1).u.values
        gaps[q] = float(np.max(np.abs(a - b)) / np.max(a))
    record(9, max(gaps.values()) <= 1e-6,
           "two-start gaps " + ", ".join(f"q={q:g}: {v:.1e}" for q, v in gaps.items()))


def test_criterion_10_source_scheme(rfl1024, pure_rfl):
    pure = pure_rfl[0.5]
    adm = check_source_admissible(NonlinearitySpec(0.5, "source", power=0.5, lam=1.0),
                                  pure.S1, pure.S2)
    spec = NonlinearitySpec(0.5, "source", power=0.5, lam=0.5 * adm["C_Lambda"])
    res = solve_source(rfl1024, spec, pure=pure, bracket_tol=1e-10)
    lo = min(r["min_v_minus_ustar"] for r in res.trace)
    up = min(r["min_upper_minus_v"] for r in res.trace)
    fit = fit_boundary_exponent(res.u)
    ok = lo >= -1e-10 and up >= -1e-10 and len(res.trace) <= 50 \
        and abs(fit.theta - 0.25) <= 0.05 and fit.r2 >= 0.99
    record(10, ok, f"iterations={len(res.trace)} bracket margins {lo:.1e}, {up:.1e} "
                   f"theta={fit.theta:.4f}")


def test_criterion_11_absorption_scheme(rfl1024, pure_rfl):
    pure = pure_rfl[0.5]
    res = solve_absorption(rfl1024, NonlinearitySpec(0.5, "absorption", power=1.0, mu=2.0),
                           pure=pure, bracket_tol=1e-10)
    dec = min(r["min_prev_minus_w"] for r in res.trace)
    low = min(r["min_w_minus_lower"] for r in res.trace)
    top = min(r["min_w0_minus_w"] for r in res.trace)
    below = float(np.min(pure.u.values - res.u.values))
    fit = fit_boundary_exponent(res.u)
    ok = min(dec, low, top, below) >= -1e-10 and abs(fit.theta - 0.25) <= 0.05 and fit.r2 >= 0.99
    record(11, ok, f"ell={res.extras['ell']:.3g} min decrease {dec:.1e} bracket {low:.1e}/{top:.1e} "
                   f"u*-w>={below:.1e} theta={fit.theta:.4f}")


def test_criterion_12_eigenpair(rfl1024):
    eig = principal_eigenpair(rfl1024)
    fit = fit_boundary_exponent(eig.phi)
    ok = eig.residual <= 1e-8 and abs(fit.theta - 0.25) <= 0.05
    record(12, ok, f"lambda1={eig.lambda1:.6f} residual={eig.residual:.1e} theta={fit.theta:.4f}")


def test_criterion_13_grid_convergence(rfl512, pure_rfl):
    t512 = fit_boundary_exponent(solve_pure(rfl512, 0.5).u).theta
    t1024 = fit_boundary_exponent(pure_rfl[0.5].u).theta
    record(13, abs(t512 - t1024) <= 0.02,
           f"theta M=512 {t512:.4f}, M=1024 {t1024:.4f}, diff {abs(t512 - t1024):.4f} (<= 0.02)")
