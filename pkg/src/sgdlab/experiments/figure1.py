"""Random-design linear regression: least-squares scatter, SGD/SDE sample
paths, and accelerated full-data paths against their ODEs."""

from __future__ import annotations

import numpy as np

from ..algorithms import iterate_ensemble, minibatch_grad_fn
from ..analysis import empirical_mean_cov, relative_frobenius, upper_test
from ..data import Dataset, full_data_field
from ..models import make_linreg_random
from ..solvers import NoiseSpec, solve_gd_ode, solve_gd_sde, solve_nesterov_ode


def _least_squares(model, records):
    A, b = model.affine_stats(records)
    return np.linalg.solve(A, b[..., None])[..., 0]


def run_figure1(ctx):
    p = ctx.p
    alpha = np.diag([p["alpha11"], p["alpha22"]])
    th = np.asarray(p["theta_check"], float)
    model = make_linreg_random(alpha, p["tau"], th)
    n, m, delta = int(p["n"]), int(p["m"]), p["delta"]
    x0 = np.asarray(p["x0"], float)
    rng = ctx.rng("scatter")

    # (a) least-squares estimators over independent datasets
    R = max(int(p["R_cov"]), int(p["R_scatter"]))
    est = np.empty((R, 2))
    for lo in range(0, R, 250):
        hi = min(R, lo + 250)
        est[lo:hi] = _least_squares(model, model.sample(rng, (hi - lo, n)))
    scatter = est[: int(p["R_scatter"])]
    ctx.csv("figure1_a_scatter.csv", ["theta1", "theta2"], scatter.tolist(), plot=("theta1", ["theta2"], "points"))
    mean, cov = empirical_mean_cov(scatter)
    se = np.sqrt(np.diag(cov) / scatter.shape[0])
    z = float(np.max(np.abs(mean - th) / se))
    ctx.add(upper_test(z, 4.0, scatter.shape[0], "scatter mean of theta_hat within 4 standard errors of theta_check",
                       name="scatter_mean", criterion=9, extra={"mean": mean}))
    target = p["tau"] ** 2 * np.linalg.inv(alpha)
    _, cov_n = empirical_mean_cov(np.sqrt(n) * (est[: int(p["R_cov"])] - th))
    ctx.add(upper_test(relative_frobenius(cov_n, target), 0.15, int(p["R_cov"]),
                       "cov of sqrt(n)(theta_hat - theta_check) vs tau^2 alpha^-1 (relative Frobenius)",
                       name="sandwich_cov", criterion=4, extra={"cov": cov_n, "target": target}))
    _, cov_s = empirical_mean_cov(np.sqrt(n) * (scatter - th))
    ctx.add(upper_test(relative_frobenius(cov_s, target), 0.15, scatter.shape[0],
                       "scatter covariance vs tau^2 alpha^-1 (relative Frobenius)", name="scatter_cov"))

    # (b) SGD sample paths (bootstrap batches from one dataset) and their SDE paths
    data_rng = ctx.rng("dataset")
    recs = model.sample(data_rng, n)
    ds = Dataset(recs, 0)
    Kp = int(p["K_plain"])
    stride = int(p["stride"])
    n_paths = int(p["n_paths"])
    keep, sgd = iterate_ensemble(minibatch_grad_fn(model, m, "bootstrap", ctx.rng("sgd"), ds),
                                 np.broadcast_to(x0, (n_paths, 2)), delta, Kp, save_every=stride)
    _, gd = iterate_ensemble(lambda x, k: model.grad(x), x0[None, :], delta, Kp, save_every=stride)
    fd_field = full_data_field(model, recs)
    _, fd = iterate_ensemble(lambda x, k: fd_field(x), x0[None, :], delta, Kp, save_every=stride)
    T = Kp * delta
    ode = solve_gd_ode(model.grad, x0, delta, T, save_every=stride)
    sde = solve_gd_sde(model, np.broadcast_to(x0, (n_paths, 2)), delta, m, delta, T,
                       NoiseSpec(brownian_seed=ctx.seed("sde")), save_every=stride)
    header = ["k", "t", "gd1", "gd2", "ode1", "ode2"]
    cols = [keep[:, None], keep[:, None] * delta, gd[:, 0], ode.states]
    for i in range(n_paths):
        header += [f"sgd{i + 1}_1", f"sgd{i + 1}_2", f"sde{i + 1}_1", f"sde{i + 1}_2"]
        cols += [sgd[:, i], sde.states[:, i]]
    ctx.csv("figure1_b_sgd_paths.csv", header, np.hstack(cols).tolist(),
            plot=("t", [c for c in header[2:] if c.endswith("1")]))
    ls = _least_squares(model, recs)
    ctx.add(upper_test(float(np.max(np.abs(gd[-1, 0] - th))), p["endpoint_tol"], 1,
                       "plain GD (exact gradient) endpoint vs theta_check", name="gd_endpoint", criterion=9))
    ctx.add(upper_test(float(np.max(np.abs(fd[-1, 0] - ls))), p["endpoint_tol"], 1,
                       "plain GD (full data) endpoint vs least squares", name="gd_full_data_endpoint", criterion=9))

    # (c) accelerated full-data paths, their ODE solutions, and the population ODE
    Ka = int(p["K_acc"])
    n_acc = int(p["n_acc"])
    acc_recs = model.sample(ctx.rng("acc_datasets"), (n_acc, n))
    fld = full_data_field(model, acc_recs)
    keep_a, acc = iterate_ensemble(lambda x, k: fld(x), np.broadcast_to(x0, (n_acc, 2)), delta, Ka,
                                   method="nesterov", save_every=stride)
    rd = np.sqrt(delta)
    sub = int(p["ode_substeps"])
    Ta = Ka * rd
    ode_n = solve_nesterov_ode(fld, np.broadcast_to(x0, (n_acc, 2)), rd / sub, Ta, save_every=stride * sub)
    ode_pop = solve_nesterov_ode(model.grad, x0, rd / sub, Ta, save_every=stride * sub)
    header = ["k", "t", "ode_pop1", "ode_pop2"]
    cols = [keep_a[:, None], keep_a[:, None] * rd, ode_pop.states]
    for i in range(n_acc):
        header += [f"acc{i + 1}_1", f"acc{i + 1}_2", f"ode{i + 1}_1", f"ode{i + 1}_2"]
        cols += [acc[:, i], ode_n.states[:, i]]
    ctx.csv("figure1_c_accelerated.csv", header, np.hstack(cols).tolist(),
            plot=("t", [c for c in header[2:] if c.endswith("1")]))
    ls_acc = _least_squares(model, acc_recs)
    ctx.add(upper_test(float(np.max(np.abs(acc[-1] - ls_acc))), p["endpoint_tol"], n_acc,
                       "accelerated full-data endpoints vs least squares", name="acc_endpoint", criterion=9))
    ctx.add(upper_test(float(np.max(np.abs(ode_n.states[-1] - ls_acc))), p["endpoint_tol"], n_acc,
                       "ODE (full-data field) endpoints vs least squares", name="acc_ode_endpoint"))
