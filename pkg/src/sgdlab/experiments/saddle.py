"""Orthogonal tensor decomposition in d=2: gradient flow, fluctuations at the
critical points, and batch-size dependence of saddle escape."""

from __future__ import annotations

import numpy as np

from ..analysis import (empirical_mean_cov, fit_exponential_rate, relative_frobenius, upper_test)
from ..models import make_linear_gaussian, make_tensor4_d2
from ..oracles import tensor_flow_x1sq
from ..seeding import make_rng
from ..solvers import lyapunov_stationary, solve_gd_ode, solve_limit_sde


def _constant_reference(h, T, p=2):
    return solve_gd_ode(lambda x: 0.0 * x, np.zeros(p), h, T)


def _escape_times(H, S, scale, rho, h, T, R, seed):
    """First exit of scale * V from the rho-ball, V' = -H V - S B', V(0) = 0.

    Escaped replicates are frozen so the unstable direction cannot overflow.
    Returns an array of exit times with NaN for replicates still inside at T.
    """
    rng = make_rng("escape", seed)
    N = int(np.floor(T / h + 1e-9))
    v = np.zeros((R, 2))
    out = np.full(R, np.nan)
    alive = np.ones(R, dtype=bool)
    sd = np.sqrt(h)
    for j in range(N):
        dB = rng.standard_normal((R, 2)) * sd
        v = np.where(alive[:, None], v - h * (v @ H.T) - dB @ S.T, v)
        left = alive & (np.linalg.norm(scale * v, axis=1) > rho)
        out[left] = (j + 1) * h
        alive &= ~left
        if not alive.any():
            break
    return out


def run_saddle_batchsize(ctx):
    p = ctx.p
    model = make_tensor4_d2(p["w_dist"])
    saddle = model.critical_points["saddle"]
    local_min = model.critical_points["local_min"]

    # (a) gradient flow on the circle vs the closed form for X1^2
    x1sq0 = p["x1sq_0"]
    hf, Tf = p["h_flow"], p["T_flow"]
    flow = solve_gd_ode(model.grad, np.array([np.sqrt(x1sq0), np.sqrt(1 - x1sq0)]), hf, Tf, save_every=10)
    x1sq = flow.states[:, 0] ** 2
    closed = tensor_flow_x1sq(x1sq0, flow.times, rate=p["flow_rate"])
    closed8 = tensor_flow_x1sq(x1sq0, flow.times, rate=8.0)
    stride = max(1, len(flow.times) // 400)
    ctx.csv("tensor_flow.csv", ["t", "x1sq_numeric", "x1sq_closed_form", "x1sq_closed_rate8"],
            np.column_stack([flow.times, x1sq, closed, closed8])[::stride].tolist(),
            plot=("t", ["x1sq_numeric", "x1sq_closed_form", "x1sq_closed_rate8"]))
    ctx.add(upper_test(float(np.max(np.abs(x1sq - closed))), 1e-3, len(x1sq),
                       f"gradient flow X1^2(t) vs 0.5+0.5[1+c exp(-{p['flow_rate']:g}t)]^-1/2",
                       name="flow_vs_closed_form", criterion=8))
    ctx.add(upper_test(float(np.max(np.abs(x1sq - closed8))), 1e-3, len(x1sq),
                       "gradient flow X1^2(t) vs the same form with exponent 8t (rate implied by the drift)",
                       name="flow_vs_closed_form_rate8"))

    h, Rv = p["h"], int(p["R_var"])

    # (b) local minimizer: dV = -4 V dt - sigma(w*) dB
    S_min = model.noise_sqrt(local_min)
    H_min = p["min_rate"] * np.eye(2)
    lg_min = make_linear_gaussian(H_min, S_min)
    t1, lag, Tm = p["fit_t"], p["fit_lag"], p["T_min"]
    path = solve_limit_sde(lg_min, _constant_reference(h, Tm), h, Tm, brownian_seed=ctx.seed("minimizer"), R=Rv)
    a, b = path.at(t1), path.at(t1 + lag)
    beta = float(np.sum(a * b) / np.sum(a * a))
    rate = -np.log(beta) / lag
    ctx.add(upper_test(abs(rate / 4.0 - 1), 0.15, Rv, "minimizer: fitted mean-reversion rate vs 4",
                       name="minimizer_rate", criterion=8, extra={"rate": rate}))
    _, cov = empirical_mean_cov(path.states[-1])
    target = lyapunov_stationary(H_min, S_min @ S_min.T)
    ctx.add(upper_test(relative_frobenius(cov, target), 0.10, Rv, "minimizer: Var V(T) vs Lyapunov target with H=4I",
                       name="minimizer_lyapunov", extra={"cov": cov, "target": target}))

    # (c) saddle: dV = 4[-diag(-2,1) V dt - diag(psi8 - psi4^2, psi6)^(1/2) dB]
    S_sad = model.noise_sqrt(saddle)
    H_sad = model.hessian(saddle)
    lg_sad = make_linear_gaussian(H_sad, S_sad)
    ft = np.asarray(p["growth_times"], float)
    Ts = float(ft.max())
    path = solve_limit_sde(lg_sad, _constant_reference(h, Ts), h, Ts, brownian_seed=ctx.seed("saddle"), R=Rv)
    var1 = np.array([np.var(path.at(t)[:, 0], ddof=1) for t in ft])
    g = fit_exponential_rate(ft, var1)
    s11 = S_sad[0, 0]
    oracle = s11**2 * np.expm1(16.0 * ft) / 16.0
    ctx.csv("saddle_variance.csv", ["t", "var_v1", "oracle"], np.column_stack([ft, var1, oracle]).tolist(),
            plot=("t", ["var_v1", "oracle"], "linespoints"))
    ctx.add(upper_test(abs(g / 16.0 - 1), 0.20, Rv, "saddle: exponential growth rate of Var V1 vs 16",
                       name="saddle_growth_rate", criterion=8, extra={"rate": g}))

    # (d) escape from the saddle ball for several batch sizes
    ms = [int(v) for v in p["ms"]]
    delta, rho, Te = p["delta"], p["rho"], p["T_escape"]
    fracs, meds, rows = [], [], []
    for m in ms:
        tau = _escape_times(H_sad, S_sad, np.sqrt(delta / m), rho, p["h_escape"], Te, int(p["R_escape"]),
                            ctx.seed("escape", m))
        frac = float(np.mean(~np.isnan(tau)))
        med = float(np.median(np.where(np.isnan(tau), np.inf, tau)))
        fracs.append(frac)
        meds.append(med)
        rows.append([m, delta, np.sqrt(delta / m), frac, med])
    ctx.csv("saddle_escape_table.csv", ["m", "delta", "noise_scale", "escape_fraction", "median_escape_time"], rows)
    bad = sum(1 for i in range(len(ms) - 1) if not fracs[i + 1] < fracs[i])
    ctx.add(upper_test(bad, 0, len(ms), f"escape fraction within T={Te:g} strictly decreasing in m",
                       name="escape_fraction_order", criterion=8, extra={"fractions": fracs, "ms": ms}))
    bad = sum(1 for i in range(len(ms) - 1) if not meds[i + 1] > meds[i])
    ctx.add(upper_test(bad, 0, len(ms), "median escape time strictly increasing in m", name="escape_time_order",
                       extra={"medians": meds, "ms": ms}))
