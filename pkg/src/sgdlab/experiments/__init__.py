"""Experiment registry: defaults, anchors and runners."""

from __future__ import annotations

from ..errors import UsageError
from .base import ExperimentEntry, ExperimentReport, ExperimentSpec, Param, build_spec, execute
from .example1 import run_example1_accelerated, run_example1_plain
from .figure1 import run_figure1
from .rates import run_discrete_vs_continuum, run_oracle_vs_solver
from .saddle import run_saddle_batchsize
from .sgd import run_sgd_weak_convergence, run_stationary

_QM = {
    "tau": Param(1.0, help="sd of the normal coordinate"),
    "theta_check": Param((0.0, 1.0), "floats", "any", help="minimizer (second entry is the exponential mean)"),
}

REGISTRY: dict[str, ExperimentEntry] = {}


def _register(entry: ExperimentEntry):
    REGISTRY[entry.name] = entry


_register(ExperimentEntry(
    "exp_oracle_vs_solver",
    "Euler solutions of the plain and accelerated ODEs against exponential and Bessel closed forms",
    ("Section 3.5 Example 1",),
    {**_QM, "x0": Param((1.0, 2.0), "floats", "any"), "h": Param(1e-5), "T": Param(5.0), "tol": Param(1e-3)},
    ("plain_vs_oracle.csv", "accelerated_vs_oracle.csv"),
    run_oracle_vs_solver, (1,),
))

_FLUCT = {**_QM, "x0": Param((1.0, 2.0), "floats", "any"), "n": Param(10000, "int"), "R": Param(2000, "int"),
          "times": Param((0.5, 1.0, 2.0), "floats"), "h": Param(1e-3), "level": Param(0.01, domain="level"),
          "block": Param(250, "int")}

_register(ExperimentEntry(
    "exp_example1_plain",
    "sqrt(n)[X^n(t) - X(t)] for the plain limit vs Normal(0, Pi Pi') with factor 1 - exp(-t)",
    ("Theorem 3.1", "Section 3.5 Example 1"),
    {**_FLUCT, "t_inf": Param(20.0)},
    ("fluctuation_sd.csv",),
    run_example1_plain, (2,),
))

_register(ExperimentEntry(
    "exp_example1_accelerated",
    "sqrt(n)[X^n(t) - X(t)] for the accelerated limit vs Normal(0, Pi Pi') with factor 1 - 2J1(t)/t",
    ("Theorem 3.1", "Section 3.5 Example 1"),
    {**_FLUCT, "t_inf": Param(50.0), "t_small": Param(0.05)},
    ("fluctuation_sd.csv", "decay_envelopes.csv"),
    run_example1_accelerated, (2,),
))

_register(ExperimentEntry(
    "exp_discrete_vs_continuum",
    "sup-error rates of plain and Nesterov iterations against their ODE limits",
    ("Theorem 3.2", "Theorem 4.3"),
    {**_QM, "x0": Param((1.0, 2.0), "floats", "any"), "T": Param(5.0),
     "deltas": Param((1e-2, 3e-3, 1e-3), "floats"), "slope_tol": Param(0.15),
     "delta_n": Param(1e-2), "n_grid": Param((100, 400, 1600, 6400), "ints"), "R_n": Param(200, "int")},
    ("sup_error_vs_delta.csv", "sup_error_vs_n.csv"),
    run_discrete_vs_continuum, (3,),
))

_register(ExperimentEntry(
    "exp_figure1",
    "random-design regression: least-squares scatter, SGD/SDE paths, accelerated paths vs ODEs",
    ("Section 5 Figure 1", "Section 5 Example 3", "Theorem 3.3"),
    {"delta": Param(0.05), "n": Param(1000, "int"), "m": Param(200, "int"),
     "x0": Param((0.1, 0.1), "floats", "any"), "alpha11": Param(0.02), "alpha22": Param(0.005),
     "tau": Param(0.1), "theta_check": Param((0.0, 0.0), "floats", "any"),
     "R_scatter": Param(500, "int"), "R_cov": Param(2000, "int"), "K_plain": Param(50000, "int"),
     "K_acc": Param(20000, "int"), "stride": Param(50, "int"), "n_paths": Param(5, "int"),
     "n_acc": Param(3, "int"), "ode_substeps": Param(4, "int"), "endpoint_tol": Param(1e-3)},
    ("figure1_a_scatter.csv", "figure1_b_sgd_paths.csv", "figure1_c_accelerated.csv"),
    run_figure1, (4, 9),
))

_register(ExperimentEntry(
    "exp_sgd_weak_convergence",
    "normalized SGD deviations vs the OU law; frozen vs state-dependent SDE coupling rate",
    ("Theorem 4.2", "Theorem 4.3"),
    {**_QM, "x0": Param((0.5, 1.5), "floats", "any"), "m": Param(10, "int"), "delta": Param(1e-3),
     "R": Param(5000, "int"), "times": Param((0.5, 1.0, 2.0), "floats"), "level": Param(0.01, domain="level"),
     "block": Param(500, "int"),
     "coupling_alpha": Param((1.0, 0.5), "floats"), "coupling_tau": Param(1.0),
     "coupling_x0": Param((2.0, 2.0), "floats", "any"), "coupling_h": Param(1e-3), "coupling_T": Param(2.0),
     "coupling_R": Param(200, "int"), "coupling_ratios": Param((1e-2, 1e-3, 1e-4), "floats"),
     "degenerate_n": Param(200, "int"), "degenerate_R": Param(100, "int")},
    ("sgd_variance.csv", "coupling.csv"),
    run_sgd_weak_convergence, (5, 6),
))

_register(ExperimentEntry(
    "exp_stationary",
    "long-run SDE covariance vs the Lyapunov equation; 1-d Gibbs density",
    ("Theorem 4.6", "Section 4.3 Example 1"),
    {"tau": Param(0.5), "theta_check": Param((0.0, 1.0), "floats", "any"), "delta": Param(0.01),
     "m": Param(10, "int"), "T": Param(20.0), "h": Param(0.01), "R": Param(2000, "int"), "save_dt": Param(0.1),
     "thin_factor": Param(5.0), "lg_H": Param((2.0, 0.6, 0.6, 1.0), "floats", "any"),
     "lg_S": Param((1.0, 0.0, 0.5, 0.8), "floats", "any"), "spread_factors": Param((1.0, 0.5, 0.25), "floats"),
     "gibbs_curvature": Param(1.0, domain="any"), "gibbs_quartic": Param(1.0, domain="nonneg"),
     "gibbs_sigma": Param(1.0), "gibbs_delta": Param(0.5), "gibbs_m": Param(1, "int"), "gibbs_h": Param(0.01),
     "gibbs_R": Param(2500, "int"), "level": Param(0.01, domain="level")},
    ("stationary_spread.csv", "gibbs_histogram.csv"),
    run_stationary, (7,),
))

_register(ExperimentEntry(
    "exp_saddle_batchsize",
    "tensor decomposition: flow closed form, minimizer/saddle fluctuations, escape vs batch size",
    ("Theorem 4.7", "Section 4.4 Example 2"),
    {"w_dist": Param("uniform_sym", "str", choices=("uniform_sym", "rademacher")), "x1sq_0": Param(0.9, domain="unit"),
     "h_flow": Param(1e-4), "T_flow": Param(2.0), "flow_rate": Param(4.0), "h": Param(1e-3),
     "R_var": Param(4000, "int"), "min_rate": Param(4.0), "fit_t": Param(1.0), "fit_lag": Param(0.1),
     "T_min": Param(2.0), "growth_times": Param((0.5, 0.625, 0.75, 0.875, 1.0), "floats"),
     "ms": Param((10, 100, 1000), "ints"), "delta": Param(1e-3), "rho": Param(0.2), "T_escape": Param(5.0),
     "h_escape": Param(1e-3), "R_escape": Param(2000, "int")},
    ("tensor_flow.csv", "saddle_variance.csv", "saddle_escape_table.csv"),
    run_saddle_batchsize, (8,),
))


def list_experiments():
    return [REGISTRY[k] for k in sorted(REGISTRY)]


def get_entry(name: str) -> ExperimentEntry:
    if name not in REGISTRY:
        raise UsageError(f"unknown experiment {name!r}; available: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[name]


def run_experiment(name, overrides=None, master_seed=0, out_dir=None, threads=1) -> ExperimentReport:
    entry = get_entry(name)
    spec = build_spec(entry, overrides, master_seed)
    return execute(entry, spec, out_dir, threads)


__all__ = ["REGISTRY", "ExperimentEntry", "ExperimentReport", "ExperimentSpec", "Param", "get_entry",
           "list_experiments", "run_experiment"]
