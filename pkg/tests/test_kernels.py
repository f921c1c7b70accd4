import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from singular_green import KernelSpec, kernel_value, sandwich_check
from singular_green.kernels import radial_kernel, sfl_exact, sfl_kernel

RFL = KernelSpec("rfl_interval", 0.25)
SYN = KernelSpec("synthetic", 0.4, 0.5)
SFL = KernelSpec("sfl_interval", 0.25)
BALL2 = KernelSpec("rfl_ball_radial", 0.75, N=2)
BALL3 = KernelSpec("rfl_ball_radial", 0.25, N=3)


def rfl_oracle(s, x, y, N=1):
    """Ball formula integral by mpmath, with t = v^(1/s) removing the endpoint singularity."""
    mp.mp.dps = 30
    s = mp.mpf(s)
    x, y = mp.mpf(x), mp.mpf(y)
    r0 = (1 - x * x) * (1 - y * y) / (x - y) ** 2
    kappa = mp.gamma(mp.mpf(N) / 2) / (2 ** (2 * s) * mp.pi ** (mp.mpf(N) / 2) * mp.gamma(s) ** 2)
    integral = mp.quad(lambda v: (v ** (1 / s) + 1) ** (-mp.mpf(N) / 2) / s, [0, r0 ** s])
    return float(kappa * abs(x - y) ** (2 * s - N) * integral)


def test_synthetic_example():
    assert kernel_value(SYN, 0.0, 0.5) == pytest.approx(0.5 ** -0.2, rel=1e-15)
    assert kernel_value(SYN, 0.0, 0.5) == pytest.approx(1.148698354997035, rel=1e-14)


def test_rfl_regression_constant():
    # frozen from the mpmath oracle below
    assert kernel_value(RFL, 0.0, 0.5) == pytest.approx(0.33977935243559008, rel=1e-13)
    assert kernel_value(RFL, 0.0, 0.5) == pytest.approx(rfl_oracle(0.25, 0.0, 0.5), rel=1e-12)


@pytest.mark.parametrize("x,y", [(-0.9, 0.3), (0.99, 0.98), (-0.2, -0.21), (0.5, -0.999999)])
def test_rfl_matches_oracle(x, y):
    assert kernel_value(RFL, x, y) == pytest.approx(rfl_oracle(0.25, x, y), rel=1e-11)


def sfl_oracle(s, x, y):
    """Eigen-expansion summed through polylogarithms (independent of the zeta expansion)."""
    mp.mp.dps = 30
    p = 2 * mp.mpf(s)
    a = mp.pi * (mp.mpf(x) - mp.mpf(y)) / 2
    b = mp.pi * (mp.mpf(x) + mp.mpf(y) + 2) / 2
    c = lambda t: mp.re(mp.polylog(p, mp.exp(1j * t)))
    return float((mp.pi / 2) ** (-p) * (c(a) - c(b)) / 2)


@pytest.mark.parametrize("x,y", [(0.0, 0.5), (-0.9, 0.3), (0.999, 0.5), (-0.3, -0.31)])
def test_sfl_closed_form(x, y):
    assert kernel_value(SFL, x, y) == pytest.approx(sfl_oracle(0.25, x, y), rel=1e-10)


def test_sfl_truncation_converges():
    dx, dy = np.array([0.4]), np.array([0.7])
    exact = sfl_exact(0.25, np.array([1.0]), dx, np.array([-1.0]), dy, np.array([0.9]))[0]
    errs = [abs(sfl_kernel(0.25, K, np.array([1.0]), dx, np.array([-1.0]), dy)[0] - exact)
            for K in (256, 4096)]
    # slow O(K^-1/2) convergence: why the closed form is the default
    assert errs[1] < errs[0] / 3 and errs[1] < 0.1 * exact
    assert KernelSpec("sfl_interval", 0.25, K=4096).sfl_tail_bound() == pytest.approx(
        (4096 * math.pi / 2) ** -0.5)


@pytest.mark.parametrize("spec", [BALL2, BALL3])
def test_radial_kernel_is_sphere_average(spec):
    N, s = spec.N, spec.s
    r, rho = 0.3, 0.55
    area = 2 * math.pi if N == 2 else 4 * math.pi

    def point(theta):
        v = np.zeros(N)
        v[0], v[1] = rho * math.cos(theta), rho * math.sin(theta)
        return v

    e1 = np.zeros(N)
    e1[0] = r
    w = (lambda t: 1.0) if N == 2 else math.sin
    full = quad(lambda t: kernel_value(spec, e1, point(t)) * w(t), 0, math.pi, limit=200,
                epsabs=0, epsrel=1e-12)[0]
    norm = math.pi if N == 2 else 2.0
    expected = full / norm
    got = radial_kernel(N, s, np.array([1 - r]), np.array([1 - rho]), np.array([rho - r]))[0]
    assert got == pytest.approx(expected, rel=1e-8)
    assert area > 0


@pytest.mark.parametrize("spec", [RFL, SYN, SFL])
@settings(max_examples=60, deadline=None)
@given(x=st.floats(-0.999, 0.999), y=st.floats(-0.999, 0.999))
def test_positive_and_symmetric(spec, x, y):
    if abs(x - y) < 1e-9:
        return
    a, b = kernel_value(spec, x, y), kernel_value(spec, y, x)
    assert a > 0 and abs(a - b) <= 1e-13 * a


def test_ball_positive_and_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x, y = rng.uniform(-0.5, 0.5, size=(2, 3))
        a, b = kernel_value(BALL3, x, y), kernel_value(BALL3, y, x)
        assert a > 0 and abs(a - b) <= 1e-13 * a


def test_errors():
    with pytest.raises(ValueError):
        kernel_value(RFL, 0.2, 0.2)
    with pytest.raises(ValueError):
        kernel_value(RFL, 0.2, 1.0)
    with pytest.raises(ValueError):
        KernelSpec("rfl_interval", 0.6)
    with pytest.raises(ValueError):
        KernelSpec("rfl_ball_radial", 0.5, N=2)
    with pytest.raises(ValueError):
        KernelSpec("rfl_ball_radial", 0.3, N=4)
    with pytest.raises(ValueError):
        KernelSpec("warp", 0.3)
    assert RFL.gamma == 0.25 and SFL.gamma == 1.0


@pytest.mark.parametrize("spec", [RFL, SYN, SFL])
def test_near_diagonal_slope(spec):
    x = 0.1
    h = np.logspace(-6, -3, 12)
    vals = [kernel_value(spec, x, x + t) for t in h]
    slope = np.polyfit(np.log(h), np.log(vals), 1)[0]
    assert slope == pytest.approx(2 * spec.s - 1, abs=0.02)


@pytest.mark.parametrize("spec", [RFL, SYN, SFL])
def test_boundary_decay(spec):
    x = 0.2
    d = np.logspace(-6, -4, 8)
    ratio = np.array([kernel_value(spec, x, 1 - t) for t in d]) / d ** spec.gamma
    assert np.all(ratio > 0)
    assert ratio.max() / ratio.min() < 1.05


def test_sandwich_synthetic_is_exact():
    rep = sandwich_check(SYN, 2000)
    assert rep["min_ratio"] == pytest.approx(1, abs=1e-12)
    assert rep["max_ratio"] == pytest.approx(1, abs=1e-12)


def test_sandwich_rfl_band():
    rep = sandwich_check(RFL, 10_000, seed=0)
    assert rep["finite"] and rep["positive"]
    assert rep["min_ratio"] == pytest.approx(0.22197768563550485, rel=1e-9)
    assert rep["max_ratio"] == pytest.approx(0.39637182978744956, rel=1e-9)


def test_sandwich_sfl_band():
    rep = sandwich_check(SFL, 10_000, seed=0)
    assert rep["finite"] and rep["positive"]
    assert 0.1 < rep["min_ratio"] < rep["max_ratio"] < 1.5


def test_sandwich_ball_stable_under_doubling():
    a = sandwich_check(BALL3, 2000, seed=0)
    b = sandwich_check(BALL3, 4000, seed=1)
    assert a["positive"] and b["positive"]
    assert b["min_ratio"] == pytest.approx(a["min_ratio"], rel=0.1)
    assert b["max_ratio"] == pytest.approx(a["max_ratio"], rel=0.1)
