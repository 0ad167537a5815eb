"""Mini-batch SGD fluctuations, SDE coupling, and stationary laws."""

from __future__ import annotations

import math

import numpy as np

from ..algorithms import iterate_ensemble, minibatch_grad_fn
from ..analysis import (empirical_mean_cov, gibbs_density_check, ks_test_normal, rate_slope, relative_frobenius,
                        run_ensemble, thin_samples, upper_test)
from ..data import Dataset, full_data_field
from ..models import make_linear_gaussian, make_linreg_random, make_quadratic_mean, make_scalar_potential
from ..oracles import exp_decay_path, ou_variance
from ..solvers import NoiseSpec, lyapunov_stationary, solve_gd_ode, solve_gd_sde


def run_sgd_weak_convergence(ctx):
    p = ctx.p
    model = make_quadratic_mean(p["theta_check"], p["tau"])
    th = model.theta_check
    x0 = np.asarray(p["x0"], float)
    m, delta, R = int(p["m"]), p["delta"], int(p["R"])
    times = tuple(p["times"])
    ks = [int(round(t / delta)) for t in times]
    K = max(ks)
    norm = np.sqrt(m / delta)
    X = exp_decay_path(th, x0, np.asarray(times))
    sig2 = np.array([p["tau"] ** 2, th[1] ** 2])

    def sim(b, rng, count):
        grad_at = minibatch_grad_fn(model, m, "population", rng)
        keep, xs = iterate_ensemble(grad_at, np.broadcast_to(x0, (count, 2)), delta, K)
        return (norm * (xs[ks] - X[:, None, :])).transpose(1, 0, 2).reshape(count, -1)

    ens = run_ensemble(sim, R, ctx.seed("sgd"), ctx.threads, block_size=p["block"])
    V = ens.replicates.reshape(R, len(times), 2)
    rows = []
    for j, t in enumerate(times):
        target = np.diag(ou_variance([1.0, 1.0], np.sqrt(sig2), t))
        _, cov = empirical_mean_cov(V[:, j])
        rows.append([t, target[0], target[1], cov[0, 0], cov[1, 1]])
        for i in range(2):
            ctx.add(upper_test(abs(cov[i, i] / target[i] - 1), 0.10, R,
                               f"Var of normalized SGD deviation, coord {i + 1}, t={t:g}, vs OU variance",
                               name=f"sgd_var.t={t:g}.x{i + 1}", criterion=6, extra={"var": cov[i, i], "target": target[i]}))
            ctx.add(ks_test_normal(V[:, j, i], 0.0, np.sqrt(target[i]), p["level"], name=f"sgd_ks.t={t:g}.x{i + 1}",
                                   criterion=6))
    ctx.csv("sgd_variance.csv", ["t", "ou_var1", "ou_var2", "sgd_var1", "sgd_var2"], rows,
            plot=("t", ["ou_var1", "sgd_var1", "ou_var2", "sgd_var2"], "linespoints"))

    # SDE (state-dependent sigma) ensemble at the same scale, step h = delta
    sde = solve_gd_sde(model, np.broadcast_to(x0, (R, 2)), delta, m, delta, max(times),
                       NoiseSpec(brownian_seed=ctx.seed("sde")), save_every=math.gcd(*ks))
    for j, t in enumerate(times):
        Vs = norm * (sde.states[ks[j] // math.gcd(*ks)] - X[j])
        target = np.diag(ou_variance([1.0, 1.0], np.sqrt(sig2), t))
        _, cov = empirical_mean_cov(Vs)
        ctx.add(upper_test(float(np.max(np.abs(np.diag(cov) / target - 1))), 0.10, R,
                           f"Var of normalized SDE deviation at t={t:g} vs OU variance", name=f"sde_var.t={t:g}"))

    _coupling(ctx)
    _degenerate_batch(ctx, model)


def _coupling(ctx):
    """Frozen sigma (on the ODE path) vs state-dependent sigma on one Brownian path."""
    p = ctx.p
    alpha = np.diag(p["coupling_alpha"])
    model = make_linreg_random(alpha, p["coupling_tau"], np.zeros(2))
    x0 = np.asarray(p["coupling_x0"], float)
    h, T, m = p["coupling_h"], p["coupling_T"], int(p["m"])
    Rc = int(p["coupling_R"])
    ref = solve_gd_ode(model.grad, x0, h, T)
    ratios = np.asarray(p["coupling_ratios"], float)
    sups, dev = [], []
    for r in ratios:
        delta = r * m
        seed = ctx.seed("coupling", float(r).hex())
        kw = dict(model=model, x0=np.broadcast_to(x0, (Rc, 2)), delta=delta, m=m, h=h, T=T, reference_path=ref)
        frozen = solve_gd_sde(noise=NoiseSpec(sigma_mode="frozen_on_X", brownian_seed=seed), **kw)
        state = solve_gd_sde(noise=NoiseSpec(sigma_mode="state_dependent", brownian_seed=seed), **kw)
        sups.append(float(np.median(np.max(np.abs(frozen.states - state.states), axis=(0, 2)))))
        dev.append(float(np.median(np.max(np.abs(state.states - ref.states[:, None, :]), axis=(0, 2)))))
    s = rate_slope(ratios, sups)
    ctx.csv("coupling.csv", ["delta_over_m", "median_sup_frozen_vs_state", "median_sup_state_vs_ode"],
            np.column_stack([ratios, sups, dev]).tolist(), plot=("delta_over_m", ["median_sup_frozen_vs_state"], "linespoints"))
    ctx.add(upper_test(abs(s - 1.0), 0.2, len(ratios), "coupling: slope of sup|X - X_check| vs delta/m, target 1",
                       name="coupling_slope", criterion=5, extra={"slope": s, "sups": sups}))
    # the coupled gap is of smaller order than the fluctuation itself
    ratio_small = sups[int(np.argmin(ratios))] / dev[int(np.argmin(ratios))]
    ratio_large = sups[int(np.argmax(ratios))] / dev[int(np.argmax(ratios))]
    ctx.add(upper_test(ratio_small / ratio_large, 1.0, len(ratios),
                       "coupled gap / fluctuation shrinks as delta/m decreases", name="coupling_relative"))


def _degenerate_batch(ctx, model):
    """m = n without replacement reproduces full-data GD; compare with small m."""
    p = ctx.p
    n = int(p["degenerate_n"])
    delta = p["delta"]
    K = int(round(1.0 / delta))
    Rd = int(p["degenerate_R"])
    ds = Dataset(model.sample(ctx.rng("degenerate_data"), n), 0)
    x0 = np.broadcast_to(np.asarray(p["x0"], float), (Rd, 2))
    fld = full_data_field(model, ds.records)
    _, full = iterate_ensemble(lambda x, k: fld(x), x0[:1], delta, K, save_every=K)
    var = {}
    for mm in (n, int(p["m"])):
        g = minibatch_grad_fn(model, mm, "without_replacement", ctx.rng("degenerate", mm), ds)
        _, xs = iterate_ensemble(g, x0, delta, K, save_every=K)
        var[mm] = float(np.mean(np.sum((xs[-1] - full[-1]) ** 2, axis=-1)))
    ratio = var[n] / var[int(p["m"])]
    ctx.add(upper_test(ratio, 0.05, Rd, "m = n without replacement: fluctuation variance ratio vs small m",
                       name="degenerate_batch", extra=var))


def _long_run(model, x0, delta, m, h, T, R, seed, save_dt):
    path = solve_gd_sde(model, np.broadcast_to(x0, (R,) + np.shape(x0)), delta, m, h, T,
                        NoiseSpec(brownian_seed=seed), save_every=max(1, int(round(save_dt / h))))
    return path


def run_stationary(ctx):
    p = ctx.p
    T, h, R = p["T"], p["h"], int(p["R"])
    delta, m = p["delta"], int(p["m"])
    norm = np.sqrt(m / delta)

    def stationary_samples(model, center, key, dlt=delta):
        path = _long_run(model, center, dlt, m, h, T, R, ctx.seed(key), p["save_dt"])
        series, lag = thin_samples(path.states, 0.5, p["thin_factor"])
        return series.reshape(-1, series.shape[-1]), lag

    # quadratic mean: normalized covariance vs Lyapunov and vs diag(tau^2, theta2^2)/2
    qm = make_quadratic_mean(p["theta_check"], p["tau"])
    th = qm.theta_check
    samples, lag = stationary_samples(qm, th, "quadratic")
    _, cov = empirical_mean_cov(norm * (samples - th))
    gamma = lyapunov_stationary(qm.hessian(th), qm.noise_cov(th))
    closed = np.diag([p["tau"] ** 2, th[1] ** 2]) / 2
    ctx.add(upper_test(relative_frobenius(cov, gamma), 0.10, samples.shape[0],
                       "quadratic mean: stationary covariance vs Lyapunov solution", name="qm_vs_lyapunov",
                       criterion=7, extra={"cov": cov, "lyapunov": gamma, "thin_lag": lag}))
    ctx.add(upper_test(relative_frobenius(cov, closed), 0.10, samples.shape[0],
                       "quadratic mean: stationary covariance vs diag(tau^2, theta2^2)/2", name="qm_vs_closed_form",
                       criterion=7))

    # non-diagonal linear model: Lyapunov equation with coupled coordinates
    H = np.asarray(p["lg_H"], float).reshape(2, 2)
    S = np.asarray(p["lg_S"], float).reshape(2, 2)
    lg = make_linear_gaussian(H, S)
    samples, _ = stationary_samples(lg, np.zeros(2), "linear_gaussian")
    _, cov = empirical_mean_cov(norm * samples)
    SS = S @ S.T
    gamma = lyapunov_stationary(H, SS)
    ctx.add(upper_test(relative_frobenius(cov, gamma), 0.10, samples.shape[0],
                       "coupled linear model: stationary covariance vs Lyapunov solution", name="lg_vs_lyapunov",
                       criterion=7, extra={"cov": cov, "lyapunov": gamma}))
    resid = np.linalg.norm(cov @ H + H @ cov - SS) / np.linalg.norm(SS)
    ctx.add(upper_test(resid, 0.1, samples.shape[0], "plug-in Lyapunov residual of the estimated covariance",
                       name="lg_residual"))

    # spread scales with delta/m
    scales, spreads = [], []
    for f in p["spread_factors"]:
        dlt = delta * f
        smp, _ = stationary_samples(qm, th, f"spread_{f!r}", dlt)
        scales.append(dlt / m)
        spreads.append(float(np.trace(np.cov(smp.T))))
    s = rate_slope(scales, spreads)
    ctx.csv("stationary_spread.csv", ["delta_over_m", "trace_cov"], np.column_stack([scales, spreads]).tolist(),
            plot=("delta_over_m", ["trace_cov"], "linespoints"))
    ctx.add(upper_test(abs(s - 1), 0.15, len(scales), "stationary variance vs delta/m: slope 1", name="spread_slope",
                       extra={"slope": s}))

    # 1-d Gibbs density
    sp = make_scalar_potential(p["gibbs_curvature"], p["gibbs_quartic"], p["gibbs_sigma"])
    gd, gm = p["gibbs_delta"], int(p["gibbs_m"])
    path = solve_gd_sde(sp, np.zeros((int(p["gibbs_R"]), 1)), gd, gm, p["gibbs_h"], T,
                        NoiseSpec(brownian_seed=ctx.seed("gibbs")), save_every=max(1, int(round(p["save_dt"] / p["gibbs_h"]))))
    series, lag = thin_samples(path.states, 0.5, p["thin_factor"])
    x = series.ravel()
    ctx.add(gibbs_density_check(sp, gd, gm, x, method="ks", level=p["level"], name="gibbs_ks", criterion=7))
    ctx.add(gibbs_density_check(sp, gd, gm, x, method="chi2", level=p["level"], name="gibbs_chi2"))
    hist, edges = np.histogram(x, bins=40)
    ctx.csv("gibbs_histogram.csv", ["left", "right", "count"], np.column_stack([edges[:-1], edges[1:], hist]).tolist())
