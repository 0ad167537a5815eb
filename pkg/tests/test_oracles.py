import math

import numpy as np
import pytest
from scipy import integrate, special

from sgdlab.errors import ParameterDomainError, SingularityError
from sgdlab.oracles import (ORACLE_NAMES, accel_limit_variance, adaptive_simpson, bessel_damping_factor, bessel_j1,
                            bessel_path, bessel_y1, evaluate, exp_decay_path, ou_variance, tensor_flow_x1sq)


def j1_series_30(u):
    """Independent 30-term power series for J1."""
    return sum((-1) ** j * (u / 2) ** (2 * j + 1) / (math.factorial(j) * math.factorial(j + 1)) for j in range(30))


def test_j1_values():
    assert bessel_j1(0.0) == 0.0
    assert abs(bessel_j1(1e-6) - 5e-7) < 1e-13
    assert abs(bessel_j1(2.0) - j1_series_30(2.0)) < 1e-12
    assert abs(bessel_j1(2.0) - 0.5767248077568734) < 1e-12


@pytest.mark.parametrize("u", [0.1, 0.5, 1.0, 3.7, 8.0, 12.5, 19.9, 20.0, 20.1, 25.0, 60.0, 300.0])
def test_j1_y1_against_scipy(u):
    assert abs(bessel_j1(u) - special.j1(u)) < 1e-10
    assert abs(bessel_y1(u) - special.y1(u)) < 1e-10


def test_j1_vectorized():
    u = np.linspace(0, 40, 81)
    assert np.max(np.abs(bessel_j1(u) - special.j1(u))) < 1e-10


def test_y1_examples():
    assert abs(bessel_y1(2.0) - (-0.10703243154093754)) < 1e-10
    # Y1(2) from the integral representation (1/pi) int_0^pi sin(2 sin t - t) dt - (1/pi) int_0^inf (e^t - e^-t) e^{-2 sinh t} dt
    a = integrate.quad(lambda t: math.sin(2 * math.sin(t) - t), 0, math.pi, epsabs=1e-13)[0] / math.pi
    b = integrate.quad(lambda t: (math.exp(t) - math.exp(-t)) * math.exp(-2 * math.sinh(t)), 0, 50, epsabs=1e-13)[0]
    assert abs(bessel_y1(2.0) - (a - b / math.pi)) < 1e-10
    assert abs(1e-6 * bessel_y1(1e-6) + 2 / math.pi) < 1e-6
    with pytest.raises(SingularityError):
        bessel_y1(0.0)


@pytest.mark.parametrize("u", [0.5, 2.0, 10.0])
def test_wronskian(u):
    e = 1e-5
    dj = (bessel_j1(u + e) - bessel_j1(u - e)) / (2 * e)
    dy = (bessel_y1(u + e) - bessel_y1(u - e)) / (2 * e)
    w = bessel_j1(u) * dy - dj * bessel_y1(u)
    assert abs(w - 2 / (math.pi * u)) < 1e-9


def test_crossover_continuity():
    assert abs(bessel_j1(20 - 1e-12) - bessel_j1(20 + 1e-12)) <= 1e-10
    assert abs(bessel_y1(20 - 1e-12) - bessel_y1(20 + 1e-12)) <= 1e-10


def test_exp_decay_path():
    th, x0 = np.array([0.0, 1.0]), np.array([1.0, 2.0])
    assert np.array_equal(exp_decay_path(th, x0, 0.0), x0)
    assert np.allclose(exp_decay_path(th, x0, 1.0), [math.exp(-1), 1 + math.exp(-1)], atol=1e-15)
    assert np.linalg.norm(exp_decay_path(th, x0, 50.0) - th) <= 1e-20 + 1e-15
    t = np.linspace(0.5, 5, 10)
    e = 1e-6
    d = (exp_decay_path(th, x0, t + e) - exp_decay_path(th, x0, t - e)) / (2 * e)
    assert np.max(np.abs(d + exp_decay_path(th, x0, t) - th)) < 1e-6


def test_bessel_path():
    assert bessel_path(0.0, 1.0, 0.0) == pytest.approx(1.0)
    assert abs(bessel_path(0.0, 1.0, 2.0) - j1_series_30(2.0)) < 1e-12
    # t^{-3/2} envelope: compare peak magnitudes near t = 20 and t = 80
    def env(t0):
        t = np.linspace(t0 - 4, t0 + 4, 4001)
        return np.max(np.abs(bessel_path(0.0, 1.0, t)))
    ratio = env(20) / env(80)
    assert abs(ratio / 4**1.5 - 1) < 0.3


def test_bessel_path_solves_nesterov_ode():
    th, x0 = 0.0, 1.0
    t = np.linspace(0.5, 10, 40)
    e = 1e-4
    x = bessel_path(th, x0, t)
    xp = bessel_path(th, x0, t + e)
    xm = bessel_path(th, x0, t - e)
    resid = (xp - 2 * x + xm) / e**2 + 3 / t * (xp - xm) / (2 * e) + (x - th)
    assert np.max(np.abs(resid)) < 1e-4


def test_damping_factor():
    assert bessel_damping_factor(0.0) == 1.0
    assert (1 - bessel_damping_factor(0.05)) ** 2 < 1e-3
    t = np.array([0.3, 2.0, 30.0])
    assert np.allclose(bessel_damping_factor(t), 2 * special.j1(t) / t, atol=1e-12)


def test_ou_variance():
    assert ou_variance([1.0], [1.0], 1.0)[0, 0] == pytest.approx((1 - math.exp(-2)) / 2, abs=1e-15)
    assert np.allclose(ou_variance([1.0, 2.0], [1.0, 2.0], 0.0), 0.0)
    assert np.allclose(ou_variance([2.0, 1.0], [2.0, math.sqrt(2)], 60.0), np.eye(2))
    e = 1e-4
    h, s = 1.5, 0.7
    for t in (0.2, 1.0, 3.0):
        d = (ou_variance([h], [s], t + e)[0, 0] - ou_variance([h], [s], t - e)[0, 0]) / (2 * e)
        assert abs(d - (-2 * h * ou_variance([h], [s], t)[0, 0] + s**2)) < 1e-8
    with pytest.raises(ParameterDomainError):
        ou_variance([0.0], [1.0], 1.0)


def test_tensor_flow_closed_form():
    assert np.allclose(tensor_flow_x1sq(1.0, np.linspace(0, 3, 7)), 1.0)
    assert tensor_flow_x1sq(0.9, 0.0) == pytest.approx(0.9)
    vals = tensor_flow_x1sq(0.9, np.linspace(0, 5, 200))
    assert np.all(np.diff(vals) > 0)
    assert tensor_flow_x1sq(0.9, 20.0) == pytest.approx(1.0, abs=1e-12)
    c = 0.8**-2 - 1
    assert c == pytest.approx(0.5625)
    assert tensor_flow_x1sq(0.9, 0.3) == pytest.approx(0.5 + 0.5 / math.sqrt(1 + c * math.exp(-1.2)))
    with pytest.raises(ParameterDomainError):
        tensor_flow_x1sq(0.5, 1.0)


def test_adaptive_simpson():
    val, err = adaptive_simpson(math.sin, 0.0, math.pi)
    assert abs(val - 2.0) < 1e-10
    assert err >= 0


def test_accel_limit_variance():
    assert accel_limit_variance(0.0, 2.0) == 0.0
    assert accel_limit_variance(1.0, 0.0) == 0.0
    assert accel_limit_variance(1.0, 1e-3) <= 1e-8
    # independent quadrature with scipy's Bessel functions
    for t in (2.0, 5.0):
        f = lambda u: (special.j1(t) * special.y1(u) - special.y1(t) * special.j1(u)) ** 2 * u**4
        ref = (math.pi / 2) ** 2 / t**2 * integrate.quad(f, 0, t, epsabs=1e-13, limit=200)[0]
        res = accel_limit_variance(1.0, t, full_output=True)
        assert abs(res.value - ref) < 1e-8
        assert res.method == "quadrature"
    assert accel_limit_variance(2.0, 2.0) == pytest.approx(4 * accel_limit_variance(1.0, 2.0))


def test_accel_limit_variance_long_time_growth():
    # energy balance for V'' + (3/t) V' + V = -sigma B': E' = -(3/t) E + sigma^2/2 on average,
    # so Var V(t) ~ sigma^2 t / 8; the variance keeps growing rather than settling
    ts = np.linspace(0.5, 50, 40)
    v = np.array([accel_limit_variance(1.0, t) for t in ts])
    assert np.all(v > 0)
    assert np.all(np.diff(v) > 0)
    assert abs(v[-1] / 50 - 1 / 8) < 0.01


def test_evaluate_dispatch():
    assert set(ORACLE_NAMES) >= {"bessel_j1", "bessel_y1", "ou_variance", "tensor_flow_x1sq", "accel_limit_variance"}
    r = evaluate("bessel_j1", 2.0)
    assert r.method == "series" and abs(r.value - special.j1(2.0)) < 1e-12
    assert evaluate("bessel_j1", 25.0).method == "asymptotic"
    assert evaluate("ou_variance", 1.0, 1.0, 1.0).value == pytest.approx((1 - math.exp(-2)) / 2)
    with pytest.raises(ParameterDomainError):
        evaluate("gamma", 1.0)
