"""Reference solutions: Bessel functions of order one, the explicit solution
paths of the quadratic examples, OU variances, the d=2 tensor flow, and the
Green's-function variance of the accelerated fluctuation limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterDomainError, SingularityError

SERIES_MAX = 20.0
EULER_GAMMA = np.longdouble("0.57721566490153286060651209008240243")
_LD_PI = np.longdouble("3.14159265358979323846264338327950288")


@dataclass
class OracleResult:
    value: float | np.ndarray
    method: str
    est_error: float
    meta: dict = field(default_factory=dict)


def _series_j1_y1(u):
    """J1 and the non-log part of Y1 by power series, in extended precision."""
    u = np.asarray(u, dtype=np.longdouble)
    h = u / 2
    term = h.copy()
    j1 = term.copy()
    # digamma(k+1) + digamma(k+2) at k=0: -2 gamma + 1
    harm = np.longdouble(1.0)
    ysum = term * (harm - 2 * EULER_GAMMA)
    k = 0
    hh = h * h
    while True:
        k += 1
        term = -term * hh / (k * (k + 1))
        harm = harm + np.longdouble(1.0) / k + np.longdouble(1.0) / (k + 1)
        j1 = j1 + term
        ysum = ysum + term * (harm - 2 * EULER_GAMMA)
        if k > 2 * float(np.max(u, initial=0.0)) + 10 and np.all(np.abs(term) * (harm + 2) < 1e-21 * np.maximum(1, np.abs(j1))):
            break
    return j1, ysum


def _hankel_pq(u):
    """Asymptotic P, Q for order one; sums until the terms stop decreasing."""
    u = np.asarray(u, dtype=float)
    mu = 4.0
    P = np.ones_like(u)
    Q = np.zeros_like(u)
    a = np.ones_like(u)
    prev = np.full_like(u, np.inf)
    active = np.ones(u.shape, dtype=bool)
    for k in range(1, 60):
        a = a * (mu - (2 * k - 1) ** 2) / (k * 8.0 * u)
        mag = np.abs(a)
        active &= (mag < prev) & (mag > 1e-18)
        if not active.any():
            break
        contrib = np.where(active, a, 0.0)
        # a_k / u^k alternates between Q (odd k) and P (even k) with sign (-1)^floor(k/2)
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2:
            Q = Q + sign * contrib
        else:
            P = P + sign * contrib
        prev = np.where(active, mag, prev)
    return P, Q


def bessel_j1(u):
    """Bessel function of the first kind of order one, J1(u) for u >= 0.

    Power series (extended precision) for u <= 20, Hankel asymptotic
    expansion beyond.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise ParameterDomainError("bessel_j1 is defined here for u >= 0")
    out = np.empty(u_arr.shape)
    small = u_arr <= SERIES_MAX
    if small.any():
        j1, _ = _series_j1_y1(u_arr[small])
        out[small] = j1.astype(float)
    if (~small).any():
        x = u_arr[~small]
        P, Q = _hankel_pq(x)
        chi = x - 0.75 * np.pi
        out[~small] = np.sqrt(2.0 / (np.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))
    return out if out.ndim else float(out)


def bessel_y1(u):
    """Bessel function of the second kind of order one, Y1(u) for u > 0."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0):
        raise SingularityError("Y1 diverges at u = 0 (and is undefined for u < 0)")
    out = np.empty(u_arr.shape)
    small = u_arr <= SERIES_MAX
    if small.any():
        x = u_arr[small].astype(np.longdouble)
        j1, ysum = _series_j1_y1(x)
        y = (2 / _LD_PI) * j1 * np.log(x / 2) - 2 / (_LD_PI * x) - ysum / _LD_PI
        out[small] = y.astype(float)
    if (~small).any():
        x = u_arr[~small]
        P, Q = _hankel_pq(x)
        chi = x - 0.75 * np.pi
        out[~small] = np.sqrt(2.0 / (np.pi * x)) * (P * np.sin(chi) + Q * np.cos(chi))
    return out if out.ndim else float(out)


def bessel_damping_factor(t):
    """2 J1(t) / t, continuous at t = 0 with value 1."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t > 0, t, 1.0)
    out = np.where(t > 0, 2.0 * np.asarray(bessel_j1(safe)) / safe, 1.0)
    return out if out.ndim else float(out)


def exp_decay_path(theta_check, x0, t):
    """theta + (x0 - theta) e^{-t}; ``t`` scalar or 1-d array."""
    theta_check = np.asarray(theta_check, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterDomainError("t must be nonnegative")
    return theta_check + np.multiply.outer(np.exp(-t), x0 - theta_check)


def bessel_path(theta_check, x0, t):
    """theta + 2 (x0 - theta) J1(t)/t, the solution of X'' + (3/t) X' + X - theta = 0."""
    theta_check = np.asarray(theta_check, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterDomainError("t must be nonnegative")
    return theta_check + np.multiply.outer(bessel_damping_factor(t), x0 - theta_check)


def ou_variance(H_diag, sigma_diag, t):
    """Variance of dV = -h V dt - s dB, V(0)=0, per coordinate: s^2 (1 - e^{-2ht}) / (2h)."""
    h = np.asarray(H_diag, dtype=float)
    s = np.asarray(sigma_diag, dtype=float)
    if np.any(h <= 0):
        raise ParameterDomainError("OU rates must be positive")
    return np.diag(s**2 * -np.expm1(-2.0 * h * t) / (2.0 * h))


def tensor_flow_x1sq(x1sq_0, t, rate=4.0):
    """Closed form X1^2(t) = 0.5 + 0.5 [1 + c exp(-rate t)]^{-1/2}, c = (2 X1^2(0) - 1)^{-2} - 1.

    ``rate`` defaults to the published exponent 4; the flow
    dX_i/dt = 4 X_i (X_i^2 - ||X||_4^4) integrates to rate 8.
    """
    if not 0.5 < x1sq_0 <= 1.0:
        raise ParameterDomainError("closed form needs X1(0)^2 in (0.5, 1]")
    c = (2.0 * x1sq_0 - 1.0) ** -2 - 1.0
    t = np.asarray(t, dtype=float)
    out = 0.5 + 0.5 / np.sqrt(1.0 + c * np.exp(-rate * t))
    return out if out.ndim else float(out)


def adaptive_simpson(f, a, b, tol=1e-10, max_panels=2**20, vectorized=False):
    """Adaptive Simpson quadrature with an absolute tolerance.

    Panels are refined level by level; a panel is accepted once its
    Richardson difference is below 15x its share of the tolerance (which halves
    with every split). With ``vectorized=True`` ``f`` is called on arrays of
    abscissae. Returns (integral, estimated absolute error). Once
    ``max_panels`` is reached the remaining panels are accepted as they are.
    """
    F = f if vectorized else np.vectorize(f, otypes=[float])
    a, b = float(a), float(b)
    fa, fm, fb = F(np.array([a, 0.5 * (a + b), b]))
    lo, hi = np.array([a]), np.array([b])
    flo, fmid, fhi = np.array([fa]), np.array([fm]), np.array([fb])
    s = (hi - lo) * (flo + 4 * fmid + fhi) / 6
    eps = np.array([float(tol)])
    total = err = 0.0
    panels = 1
    while lo.size:
        mid = 0.5 * (lo + hi)
        fq = F(np.concatenate([0.5 * (lo + mid), 0.5 * (mid + hi)]))
        fl, fr = fq[: lo.size], fq[lo.size:]
        left = (mid - lo) * (flo + 4 * fl + fmid) / 6
        right = (hi - mid) * (fmid + 4 * fr + fhi) / 6
        delta = left + right - s
        done = (np.abs(delta) <= 15 * eps) | (hi - lo < 1e-14 * np.maximum(1.0, np.abs(hi)))
        if panels + int(np.count_nonzero(~done)) > max_panels:
            done[:] = True
        total += float(np.sum(left[done] + right[done] + delta[done] / 15))
        err += float(np.sum(np.abs(delta[done]))) / 15
        k = ~done
        panels += int(np.count_nonzero(k))
        lo, mid, hi = lo[k], mid[k], hi[k]
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        flo, fmid, fhi = (np.concatenate([flo[k], fmid[k]]), np.concatenate([fl[k], fr[k]]),
                          np.concatenate([fmid[k], fhi[k]]))
        s = np.concatenate([left[k], right[k]])
        eps = np.concatenate([eps[k], eps[k]]) / 2
    return total, err


def accel_limit_variance(sigma, t, tol=1e-10, full_output=False):
    """Var V(t) for V'' + (3/t) V' + V + sigma dB/dt = 0, V(0) = V'(0) = 0.

    Green's representation:
        Var V(t) = (pi/(2t))^2 sigma^2 int_0^t [J1(t) Y1(u) - Y1(t) J1(u)]^2 u^4 du.
    """
    if sigma < 0:
        raise ParameterDomainError("sigma must be nonnegative")
    if t < 0:
        raise ParameterDomainError("t must be nonnegative")
    if t == 0 or sigma == 0:
        res = OracleResult(0.0, "quadrature", 0.0)
        return res if full_output else 0.0
    jt, yt = bessel_j1(t), bessel_y1(t)
    scale = (np.pi / (2.0 * t)) ** 2

    def integrand(u):
        out = np.zeros_like(u)
        pos = u > 0.0
        up = u[pos]
        g = jt * bessel_y1(up) - yt * bessel_j1(up)
        out[pos] = scale * g * g * up**4
        return out

    val, err = adaptive_simpson(integrand, 0.0, float(t), tol=tol, vectorized=True)
    res = OracleResult(sigma**2 * val, "quadrature", sigma**2 * err, {"t": t})
    return res if full_output else res.value


def evaluate(name: str, *args) -> OracleResult:
    """Evaluate an oracle by name with float arguments (used by the CLI)."""
    if name == "bessel_j1":
        (u,) = args
        method = "series" if u <= SERIES_MAX else "asymptotic"
        return OracleResult(bessel_j1(u), method, 1e-12 if u <= SERIES_MAX else 1e-15)
    if name == "bessel_y1":
        (u,) = args
        method = "series" if u <= SERIES_MAX else "asymptotic"
        return OracleResult(bessel_y1(u), method, 1e-12 if u <= SERIES_MAX else 1e-15)
    if name == "ou_variance":
        h, s, t = args
        return OracleResult(float(ou_variance([h], [s], t)[0, 0]), "algebraic", 0.0)
    if name == "tensor_flow_x1sq":
        return OracleResult(tensor_flow_x1sq(*args), "algebraic", 0.0)
    if name == "accel_limit_variance":
        s, t = args
        return accel_limit_variance(s, t, full_output=True)
    if name == "bessel_damping_factor":
        (t,) = args
        return OracleResult(bessel_damping_factor(t), "series" if t <= SERIES_MAX else "asymptotic", 1e-12)
    raise ParameterDomainError(f"unknown oracle {name!r}")


ORACLE_NAMES = (
    "accel_limit_variance",
    "bessel_damping_factor",
    "bessel_j1",
    "bessel_y1",
    "ou_variance",
    "tensor_flow_x1sq",
)
