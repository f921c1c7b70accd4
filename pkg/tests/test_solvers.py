import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singular_green import (EpsSchedule, GridFunction, KernelSpec, NonlinearitySpec,
                            check_source_admissible, check_weak_dual, fit_boundary_exponent,
                            principal_eigenpair, solve_absorption, solve_perturbed, solve_pure,
                            solve_regularized, solve_source)
from singular_green.solvers import (AdmissibilityError, RegimeError, SolverError, find_ell,
                                    weak_dual_gap)

from conftest import green


@pytest.fixture(scope="module")
def pure05(rfl512):
    return solve_pure(rfl512, 0.5)


def test_scalar_fixed_point():
    assert solve_regularized(np.array([[1.0]]), 1.0, 0.0)[0] == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(1e-3, 1e3), q=st.floats(0.05, 5.0))
def test_scalar_reduction(a, q):
    u = solve_regularized(np.array([[a]]), q, 0.0)[0]
    assert u == pytest.approx(a ** (1 / (1 + q)), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.01, 0.99), q1=st.floats(0.1, 3.0), dq=st.floats(0.05, 2.0))
def test_scalar_monotone_in_q(a, q1, dq):
    u1 = solve_regularized(np.array([[a]]), q1, 0.0)[0]
    u2 = solve_regularized(np.array([[a]]), q1 + dq, 0.0)[0]
    assert u2 >= u1  # a < 1: a^(1/(1+q)) increases with q


def test_eps_monotone_and_a_priori_bound(rfl512):
    g1max = (rfl512.A @ np.ones(rfl512.M)).max()
    sols = []
    for eps in (1e-1, 1e-2, 1e-3):
        u = solve_regularized(rfl512, 0.5, eps).values
        assert np.all(u > 0)
        assert u.max() <= eps ** -0.5 * g1max + 1e-12
        sols.append(u)
    for a, b in zip(sols, sols[1:]):
        assert np.min(b - a) >= -1e-10


def test_pure_continuation_converged(rfl512, pure05):
    early = solve_pure(rfl512, 0.5, EpsSchedule(eps_min=0.1 * 4.0 ** -7))
    rel = np.max(np.abs(early.u.values - pure05.u.values)) / pure05.u.values.max()
    assert rel < 1e-4
    assert pure05.extras["last_step_change"] < 1e-6
    assert np.all(pure05.u.values > 0)
    assert np.all(pure05.u.values >= pure05.lower * (1 - 1e-12))
    assert pure05.S2 == pytest.approx((rfl512.A @ np.ones(rfl512.M)).max())


def test_pure_uniqueness_two_starts(rfl512):
    d = rfl512.grid.delta
    a = solve_pure(rfl512, 0.5, u0=0.1 * d ** 0.25).u.values
    b = solve_pure(rfl512, 0.5, u0=10 * (rfl512.A @ np.ones(rfl512.M))).u.values
    assert np.max(np.abs(a - b)) / np.max(a) <= 1e-6


def test_pure_refuses_outside_regime():
    Gm = green("sfl_interval", 0.25, M=32, g=3.0)
    with pytest.raises(RegimeError) as err:
        solve_pure(Gm, 0.5)
    assert err.value.report.regime == "out-of-scope"


def test_weak_dual(rfl512, pure05):
    eps = pure05.extras["eps_final"]
    assert weak_dual_gap(rfl512, pure05.u, 0.5, eps, xi=np.zeros(rfl512.M)) == 0.0
    assert pure05.weak_dual_gap < 1e-6
    rep = check_weak_dual(rfl512, pure05, 0.5, test_count=20, seed=1)
    assert rep["max_gap"] < 1e-5
    # the meter responds linearly to a perturbation of u
    gaps = []
    for t in (1e-4, 2e-4, 4e-4):
        u = pure05.u.values * (1 + t)
        gaps.append(weak_dual_gap(rfl512, u, 0.5, eps))
    assert gaps[1] / gaps[0] == pytest.approx(2, rel=0.05)
    assert gaps[2] / gaps[1] == pytest.approx(2, rel=0.05)


@pytest.mark.parametrize("power,lam,c1,c2,Lambda,key,value", [
    (1.0, 0.1, 1.0, 2.0, None, "lambda_star", 0.5),
    (2.0, 0.1, 1.0, 1.0, None, "lambda_star", 0.25),
    (0.5, 0.1, 1.0, 1.0, 1.0, "C_Lambda", 2 ** -0.5)])
def test_source_admissibility_examples(power, lam, c1, c2, Lambda, key, value):
    spec = NonlinearitySpec(0.5, "source", power=power, lam=lam, Lambda=Lambda)
    rep = check_source_admissible(spec, c1, c2)
    assert rep[key] == pytest.approx(value, rel=1e-14)
    assert rep["admissible"]


def test_source_lambda_bracket_is_supersolution_bound():
    # for p > 1 the chosen Lambda satisfies lambda (c1 + c2 Lambda)^p <= Lambda
    spec = NonlinearitySpec(0.5, "source", power=2.0, lam=0.2)
    rep = check_source_admissible(spec, 1.0, 1.0)
    L = rep["Lambda"]
    assert 0.2 * (1 + L) ** 2 <= L


def test_source_degenerate(rfl512, pure05):
    res = solve_source(rfl512, NonlinearitySpec(0.5, "source", power=0.5, lam=0.0), pure=pure05)
    assert np.max(np.abs(res.u.values - pure05.u.values)) <= 1e-8 * pure05.S1


def test_source_run(rfl512, pure05):
    adm = check_source_admissible(NonlinearitySpec(0.5, "source", power=0.5, lam=1.0),
                                  pure05.S1, pure05.S2)
    spec = NonlinearitySpec(0.5, "source", power=0.5, lam=0.5 * adm["C_Lambda"])
    res = solve_source(rfl512, spec, pure=pure05)
    assert len(res.trace) <= 50
    for row in res.trace:
        assert row["min_v_minus_ustar"] >= -1e-10 and row["min_upper_minus_v"] >= -1e-10
    assert fit_boundary_exponent(res.u).theta == pytest.approx(0.25, abs=0.05)
    assert res.weak_dual_gap < 1e-5
    with pytest.raises(AdmissibilityError) as err:
        solve_source(rfl512, NonlinearitySpec(0.5, "source", power=0.5,
                                              lam=2 * adm["C_Lambda"]), pure=pure05)
    assert err.value.report["C_Lambda"] == pytest.approx(adm["C_Lambda"])


def test_absorption_degenerate(rfl512, pure05):
    res = solve_absorption(rfl512, NonlinearitySpec(0.5, "absorption", power=0), pure=pure05)
    assert np.max(np.abs(res.u.values - pure05.u.values)) <= 1e-8 * pure05.S1


def test_absorption_linear(rfl512, pure05):
    res = solve_absorption(rfl512, NonlinearitySpec(0.5, "absorption", power=1, mu=2.0), pure=pure05)
    for row in res.trace:
        assert row["min_prev_minus_w"] >= -1e-10
        assert row["min_w_minus_lower"] >= -1e-10
    assert np.all(res.u.values <= pure05.u.values + 1e-12)
    assert fit_boundary_exponent(res.u).theta == pytest.approx(0.25, abs=0.05)
    ell = res.extras["ell"]
    w0 = pure05.u.values
    assert ell ** 0.5 * (w0.max() ** 0.5 * (ell * w0).max() + ell) <= 1 + 1e-12


def test_absorption_negative_power(rfl512, pure05):
    res = solve_absorption(rfl512, NonlinearitySpec(0.5, "absorption", power=-0.25), pure=pure05)
    assert np.all(res.u.values <= pure05.u.values + 1e-12) and np.all(res.u.values > 0)


def test_absorption_errors(rfl512, pure05):
    with pytest.raises(AdmissibilityError):
        solve_absorption(rfl512, NonlinearitySpec(0.5, "absorption", power=2, mu=0.1), pure=pure05)
    with pytest.raises(ValueError):
        NonlinearitySpec(0.5, "absorption", power=-0.6)
    with pytest.raises(ValueError):
        NonlinearitySpec(-1.0)


def test_find_ell_bisection():
    w0 = np.array([0.5, 1.0, 2.0])
    ell = find_ell(w0, 1.0, lambda t: t)
    assert ell * (2.0 * 2.0 * ell + ell) == pytest.approx(1.0, rel=1e-9)


def test_perturbed(rfl512, pure05):
    f = GridFunction(rfl512.grid, rfl512.grid.delta ** 0.25)
    res = solve_perturbed(rfl512, 0.5, f)
    assert np.all(res.u.values >= pure05.u.values - 1e-12)
    assert res.weak_dual_gap < 1e-6


def test_eigen_rank_one():
    rng = np.random.default_rng(0)
    e, w, a = rng.uniform(0.5, 1.5, 6), rng.uniform(0.1, 1, 6), 0.7
    res = principal_eigenpair(a * np.outer(e, e * w))
    assert res.lambda1 == pytest.approx(1 / (a * np.sum(e * e * w)), rel=1e-12)
    np.testing.assert_allclose(res.phi, e / e.max(), rtol=1e-10)


def test_eigen_rfl(rfl1024):
    res = principal_eigenpair(rfl1024)
    assert res.residual < 1e-8
    assert np.all(res.phi.values > 0) and res.phi.values.max() == pytest.approx(1.0)
    assert fit_boundary_exponent(res.phi).theta == pytest.approx(0.25, abs=0.05)
    # first Dirichlet eigenvalue of (-Delta)^(1/4) on (-1, 1) is about 0.9702
    assert res.lambda1 == pytest.approx(0.9702, abs=1e-3)


def test_schedule_validation():
    with pytest.raises(ValueError):
        EpsSchedule(eps0=1e-9, eps_min=1e-8)
    with pytest.raises(ValueError):
        EpsSchedule(ratio=1.0)
    levels = EpsSchedule().levels()
    assert levels[0] == 0.1 and levels[-1] == 1e-8 and all(np.diff(levels) < 0)


def test_solver_error_carries_trace(rfl_small):
    with pytest.raises(SolverError) as err:
        solve_regularized(rfl_small, 0.5, 1e-3, max_iter=0, tol=0.0)
    assert err.value.trace
