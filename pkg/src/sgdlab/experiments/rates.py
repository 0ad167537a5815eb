"""Deterministic accuracy checks: Euler solvers against closed forms, and
discrete iterations against their continuum limits."""

from __future__ import annotations

import numpy as np

from ..algorithms import iterate_ensemble
from ..analysis import rate_slope, upper_test
from ..data import full_data_field
from ..models import make_quadratic_mean
from ..oracles import bessel_path, exp_decay_path
from ..solvers import solve_gd_ode, solve_nesterov_ode


def run_oracle_vs_solver(ctx):
    p = ctx.p
    model = make_quadratic_mean(p["theta_check"], p["tau"])
    th = model.theta_check
    x0 = np.asarray(p["x0"], float)
    h, T = p["h"], p["T"]

    def field(x):
        return x - th

    cases = [("plain", lambda hh: solve_gd_ode(field, x0, hh, T), exp_decay_path),
             ("accelerated", lambda hh: solve_nesterov_ode(field, x0, hh, T), bessel_path)]
    for label, solve, oracle in cases:
        errs = {}
        for hh in (2 * h, h):
            path = solve(hh)
            exact = oracle(th, x0, path.times)
            errs[hh] = float(np.max(np.abs(path.states - exact)))
            if hh == h:
                stride = max(1, int(round(0.01 / h)))
                rows = np.hstack([path.times[::stride, None], path.states[::stride], exact[::stride]])
                ctx.csv(f"{label}_vs_oracle.csv", ["t", "x1", "x2", "oracle1", "oracle2"], rows.tolist(),
                        plot=("t", ["x1", "x2", "oracle1", "oracle2"]))
        ctx.add(upper_test(errs[h], p["tol"], 2, f"{label} Euler max error on [0,{T}] at h={h}",
                           name=f"{label}.max_error", criterion=1))
        ratio = errs[h] / errs[2 * h]
        ctx.add(upper_test(abs(ratio - 0.5), 0.1, 2, f"{label} error ratio when h halves (band [0.4,0.6])",
                           name=f"{label}.halving_ratio", criterion=1, extra={"ratio": ratio, "errors": [errs[2 * h], errs[h]]}))


def _step_sup_error(iterates, step, oracle_at):
    """sup_t |x_step(t) - X(t)| for the piecewise-constant embedding, checked at
    both ends of every step interval."""
    K = iterates.shape[0] - 1
    tk = np.arange(K + 1) * step
    left = np.abs(iterates - oracle_at(tk))
    right = np.abs(iterates[:-1] - oracle_at(tk[1:]))
    return float(max(left.max(), right.max()))


def run_discrete_vs_continuum(ctx):
    p = ctx.p
    model = make_quadratic_mean(p["theta_check"], p["tau"])
    th = model.theta_check
    x0 = np.asarray(p["x0"], float)
    T = p["T"]
    deltas = np.asarray(p["deltas"], float)
    rows = []
    errs = {"plain": [], "accelerated": []}
    for d in deltas:
        for label, method, step, oracle in (("plain", "plain", d, exp_decay_path),
                                            ("accelerated", "nesterov", np.sqrt(d), bessel_path)):
            K = int(np.floor(T / step + 1e-9))
            _, xs = iterate_ensemble(lambda x, k: x - th, x0[None, :], d, K, method)
            e = _step_sup_error(xs[:, 0, :], step, lambda t: oracle(th, x0, t))
            errs[label].append(e)
            rows.append([label, d, K, e])
    ctx.csv("sup_error_vs_delta.csv", ["case", "delta", "K", "sup_error"], rows)
    for label, target in (("plain", 1.0), ("accelerated", 0.5)):
        s = rate_slope(deltas, errs[label])
        ctx.add(upper_test(abs(s - target), p["slope_tol"], len(deltas),
                           f"{label}: log-log slope of sup-error vs delta, target {target}",
                           name=f"{label}.slope", criterion=3, extra={"slope": s, "errors": errs[label]}))

    # statistical error: full-data vs exact-gradient iterates as n grows
    d = p["delta_n"]
    K = int(np.floor(T / d + 1e-9))
    ns = np.asarray(p["n_grid"], int)
    med = []
    rng = ctx.rng("n_scaling")
    for n in ns:
        recs = model.sample(rng, (p["R_n"], int(n)))
        fld = full_data_field(model, recs)
        _, xn = iterate_ensemble(lambda x, k: fld(x), np.broadcast_to(x0, (p["R_n"], 2)), d, K)
        _, xe = iterate_ensemble(lambda x, k: x - th, x0[None, :], d, K)
        sup = np.max(np.abs(xn - xe), axis=(0, 2))
        med.append(float(np.median(sup)))
    s = rate_slope(ns, med)
    ctx.csv("sup_error_vs_n.csv", ["n", "median_sup_error"], [[int(n), m] for n, m in zip(ns, med)])
    ctx.add(upper_test(abs(s + 0.5), p["slope_tol"], len(ns), "full-data vs exact iterates: slope vs n, target -0.5",
                       name="n_scaling.slope", extra={"slope": s}))
