"""Data-driven fluctuations of the quadratic-mean example: sqrt(n)[X^n(t) - X(t)]
for the plain and accelerated continuum limits."""

from __future__ import annotations

import math

import numpy as np

from ..analysis import empirical_mean_cov, ks_test_normal, run_ensemble, upper_test
from ..models import make_quadratic_mean
from ..oracles import bessel_damping_factor
from ..solvers import solve_gd_ode, solve_nesterov_ode, solve_pi_ode


def _solver(order):
    if order == "first":
        return lambda f, x0, h, T, se: solve_gd_ode(f, x0, h, T, save_every=se)
    return lambda f, x0, h, T, se: solve_nesterov_ode(f, x0, h, T, save_every=se)


def _fluctuations(ctx, order):
    p = ctx.p
    model = make_quadratic_mean(p["theta_check"], p["tau"])
    th = model.theta_check
    x0 = np.asarray(p["x0"], float)
    h, n, R = p["h"], int(p["n"]), int(p["R"])
    times = sorted(set(p["times"]) | {p["t_inf"]})
    T = max(times)
    steps = [int(round(t / h)) for t in times]
    # store only a grid that contains every requested time
    se = math.gcd(*steps)
    idx = [k // se for k in steps]
    solve = _solver(order)

    ref = solve(model.grad, x0, h, T, 1)
    X_ref = ref.states[steps]

    def sim(b, rng, count):
        recs = model.sample(rng, (count, n))
        ubar = recs.mean(axis=1)
        path = solve(lambda x: x - ubar, np.broadcast_to(x0, (count, 2)), h, T, se)
        V = np.sqrt(n) * (path.states[idx] - X_ref[:, None, :])
        # per replicate: V at each time, then U-bar and X^n(t_inf)
        return np.concatenate([V.transpose(1, 0, 2).reshape(count, -1), ubar, path.states[idx[-1]]], axis=1)

    ens = run_ensemble(sim, R, ctx.seed("datasets"), ctx.threads, block_size=p["block"])
    out = ens.replicates
    nt = len(times)
    V = out[:, : 2 * nt].reshape(R, nt, 2)
    ubar = out[:, 2 * nt: 2 * nt + 2]
    xinf = out[:, 2 * nt + 2:]

    Pi = solve_pi_ode(model, ref, h, T, order=order)
    sig = np.array([p["tau"], th[1]])
    rows = []
    for j, t in enumerate(times):
        P = Pi.at(t)
        sd = np.sqrt(np.diag(P @ P.T))
        closed = (1 - np.exp(-t)) if order == "first" else (1 - bessel_damping_factor(t))
        _, cov = empirical_mean_cov(V[:, j, :])
        rows.append([t, sd[0], sd[1], abs(closed) * sig[0], abs(closed) * sig[1], np.sqrt(cov[0, 0]), np.sqrt(cov[1, 1])])
        crit = 2 if t in p["times"] else None
        for i in range(2):
            ctx.add(ks_test_normal(V[:, j, i], 0.0, sd[i], p["level"], name=f"ks.t={t:g}.x{i + 1}", criterion=crit,
                                   description=f"V^n_{i + 1}({t:g}) vs Normal(0, (Pi Pi')_{i + 1}{i + 1}) at level {p['level']}"))
    ctx.csv("fluctuation_sd.csv", ["t", "pi_sd1", "pi_sd2", "closed_sd1", "closed_sd2", "mc_sd1", "mc_sd2"], rows,
            plot=("t", ["pi_sd1", "mc_sd1", "pi_sd2", "mc_sd2"], "linespoints"))
    j_inf = times.index(p["t_inf"])
    var1 = float(np.var(V[:, j_inf, 0], ddof=1))
    ctx.add(upper_test(abs(var1 / p["tau"] ** 2 - 1), 0.10, R, f"Var V_1({p['t_inf']:g}) vs tau^2 within 10%",
                       name="var_at_t_inf", extra={"var": var1}))
    if order == "first":
        gap = float(np.max(np.abs(xinf - ubar)))
        ctx.add(upper_test(gap, 1e-6, R, f"X^n({p['t_inf']:g}) equals the sample mean within 1e-6", name="limit_is_ubar"))
    else:
        # decay is only t^(-3/2): compare the remaining gap with its Bessel closed form
        pred = ubar + (x0 - ubar) * bessel_damping_factor(p["t_inf"])
        gap = float(np.max(np.abs(xinf - pred)))
        ctx.add(upper_test(gap, 1e-3, R, f"X^n({p['t_inf']:g}) - U-bar vs (x0 - U-bar) 2J1(t)/t within 1e-3",
                           name="limit_gap_bessel", extra={"max_gap_to_ubar": float(np.max(np.abs(xinf - ubar)))}))
    return model, V, times


def run_example1_plain(ctx):
    _fluctuations(ctx, "first")


def run_example1_accelerated(ctx):
    p = ctx.p
    model, V, times = _fluctuations(ctx, "second")
    # small-t variance factor from the oracle, and decay envelopes
    t0 = p["t_small"]
    f0 = (1 - bessel_damping_factor(t0)) ** 2
    ctx.add(upper_test(f0, 1e-3, 1, f"variance factor [1-2J1(t)/t]^2 at t={t0:g}", name="small_t_factor"))
    ts = np.linspace(0.0, 20.0, 401)
    damp = bessel_damping_factor(ts)
    ctx.csv("decay_envelopes.csv", ["t", "bessel_factor", "exp_factor", "abs_bessel", "abs_exp"],
            np.column_stack([ts, damp, np.exp(-ts), np.abs(damp), np.exp(-ts)]).tolist(),
            plot=("t", ["abs_bessel", "abs_exp"]))
