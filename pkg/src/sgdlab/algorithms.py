"""Discrete iterations: plain gradient descent and Nesterov's scheme, each
driven by exact, full-data or mini-batch gradients, plus the step-process
embedding of an iterate sequence into continuous time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, draw_minibatch, empirical_grad, minibatch_grad, BATCH_MODES
from .errors import ConfigurationError, DivergenceError, ParameterDomainError, RangeError
from .seeding import make_rng

DIVERGENCE_BOUND = 1e12


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule: constant delta, or delta_k = eta * k^(-alpha), k >= 1."""

    kind: str = "constant"
    eta: float | None = None
    alpha: float | None = None

    @classmethod
    def polynomial(cls, eta, alpha):
        if not eta > 0 or not 0 < alpha < 1:
            raise ParameterDomainError(f"polynomial schedule needs eta > 0 and alpha in (0,1), got {eta}, {alpha}")
        return cls("polynomial", float(eta), float(alpha))

    def rate(self, k: int, delta: float) -> float:
        if self.kind == "constant":
            return delta
        return self.eta * k ** (-self.alpha)


CONSTANT = Schedule()


@dataclass
class GradientSource:
    kind: str
    model: object
    dataset: Dataset | None = None
    batch_size: int | None = None
    batch_mode: str | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "full_data", "minibatch"):
            raise ConfigurationError(f"unknown gradient source {self.kind!r}")
        if self.kind == "full_data" and self.dataset is None:
            raise ConfigurationError("full_data source needs a dataset")
        if self.kind == "minibatch":
            if self.batch_size is None or self.batch_mode is None:
                raise ConfigurationError("minibatch source needs batch_size and batch_mode")
            if self.batch_mode not in BATCH_MODES:
                raise ConfigurationError(f"unknown batch mode {self.batch_mode!r}")
            if self.batch_mode != "population" and self.dataset is None:
                raise ConfigurationError(f"batch mode {self.batch_mode!r} needs a dataset")

    def __call__(self, theta, k: int, seed):
        if self.kind == "exact":
            return self.model.grad(theta)
        if self.kind == "full_data":
            return empirical_grad(self.model, self.dataset, theta)
        # one independent batch per outer step, from its own substream
        rng = make_rng(seed, k)
        batch = draw_minibatch(self.model, self.dataset, self.batch_size, self.batch_mode, rng)
        return minibatch_grad(self.model, batch, theta)


@dataclass
class Trajectory:
    iterates: np.ndarray
    step_scale: float
    delta: float
    aux: np.ndarray | None = None
    schedule: Schedule = CONSTANT
    grads: np.ndarray | None = None
    rates: np.ndarray | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.iterates.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        if self.rates is None:
            return np.arange(self.K + 1) * self.step_scale
        return np.concatenate([[0.0], np.cumsum(self.rates)])

    def to_csv(self, path) -> Path:
        return write_trajectory_csv(self, path)


def _check_finite(x, k):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_BOUND:
        raise DivergenceError(f"iterate diverged at step {k}: {x}", step=k)


def run_plain_gd(source: GradientSource, x0, delta: float, K: int, schedule: Schedule = CONSTANT, seed=0) -> Trajectory:
    """x_k = x_{k-1} - delta_k * grad(x_{k-1}) for k = 1..K."""
    if not delta > 0 and schedule.kind == "constant":
        raise ParameterDomainError(f"step size must be positive, got {delta}")
    if int(K) < 1:
        raise ParameterDomainError("K must be >= 1")
    model = source.model
    x = model.check_theta(np.array(x0, dtype=float))
    p = x.shape[-1]
    xs = np.empty((K + 1, p))
    xs[0] = x
    keep_grads = source.kind == "minibatch"
    grads = np.empty((K, p)) if keep_grads else None
    rates = np.empty(K) if schedule.kind != "constant" else None
    for k in range(1, K + 1):
        d = schedule.rate(k, delta)
        g = source(x, k, seed)
        x = model.post_step(x - d * g)
        _check_finite(x, k)
        xs[k] = x
        if keep_grads:
            grads[k - 1] = g
        if rates is not None:
            rates[k - 1] = d
    return Trajectory(iterates=xs, step_scale=delta, delta=delta, schedule=schedule, grads=grads, rates=rates)


def run_nesterov(source: GradientSource, x0, delta: float, K: int, seed=0) -> Trajectory:
    """x_k = y_{k-1} - delta grad(y_{k-1}),  y_k = x_k + (k-1)/(k+2) (x_k - x_{k-1}), y_0 = x_0."""
    if not delta > 0:
        raise ParameterDomainError(f"step size must be positive, got {delta}")
    if int(K) < 1:
        raise ParameterDomainError("K must be >= 1")
    model = source.model
    x = model.check_theta(np.array(x0, dtype=float))
    p = x.shape[-1]
    xs = np.empty((K + 1, p))
    ys = np.empty((K + 1, p))
    xs[0] = ys[0] = x
    y = x
    keep_grads = source.kind == "minibatch"
    grads = np.empty((K, p)) if keep_grads else None
    for k in range(1, K + 1):
        g = source(y, k, seed)
        x_new = model.post_step(y - delta * g)
        y = x_new + (k - 1) / (k + 2) * (x_new - x)
        x = x_new
        _check_finite(x, k)
        xs[k] = x
        ys[k] = y
        if keep_grads:
            grads[k - 1] = g
    return Trajectory(iterates=xs, step_scale=np.sqrt(delta), delta=delta, aux=ys, grads=grads)


def run_nesterov_velocity_form(grad, x0, delta: float, K: int) -> np.ndarray:
    """Nesterov's scheme rewritten on (x_k, z_k), z_k = (x_{k+1} - x_k)/sqrt(delta).

        x_{k+1} = x_k + sqrt(delta) z_k
        z_{k+1} = k/(k+3) z_k - sqrt(delta) grad(x_k + (2k+3)/(k+3) sqrt(delta) z_k)

    started from x_1 = x_0 - delta grad(x_0). Returns x_0..x_K.
    """
    rd = np.sqrt(delta)
    x = np.array(x0, dtype=float)
    xs = np.empty((K + 1,) + x.shape)
    xs[0] = x
    z = -rd * grad(x)
    for k in range(K):
        x_next = x + rd * z
        z = k / (k + 3) * z - rd * grad(x + (2 * k + 3) / (k + 3) * rd * z)
        x = x_next
        xs[k + 1] = x
    return xs


def step_process(traj: Trajectory, t: float):
    """x_delta(t) = x_k for t_k <= t < t_{k+1} (right-continuous, piecewise constant)."""
    times = traj.times
    if t < 0 or t > times[-1] + 1e-12 * max(1.0, times[-1]):
        raise RangeError(f"t={t} outside [0, {times[-1]}]")
    if traj.rates is None:
        k = int(np.floor(t / traj.step_scale + 1e-9))
    else:
        k = int(np.searchsorted(times, t, side="right") - 1)
    return traj.iterates[min(k, traj.K)]


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    from .io import format_float

    path = Path(path)
    p = traj.iterates.shape[1]
    header = ["k", "t"] + [f"x{j + 1}" for j in range(p)]
    if traj.aux is not None:
        header += [f"y{j + 1}" for j in range(p)]
    times = traj.times
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(traj.K + 1):
            row = [str(k), format_float(times[k])] + [format_float(v) for v in traj.iterates[k]]
            if traj.aux is not None:
                row += [format_float(v) for v in traj.aux[k]]
            w.writerow(row)
    return path


def iterate_ensemble(grad_at, x0, delta: float, K: int, method: str = "plain", post_step=None,
                     save_every: int = 1, schedule: Schedule = CONSTANT):
    """Run the plain or Nesterov recursion on a replicate stack ``x0`` of shape (R, p).

    ``grad_at(x, k)`` returns the (R, p) gradient estimate used at outer step k.
    Returns (saved step indices, saved iterates of shape (n_saved, R, p)).
    """
    if not delta > 0 and schedule.kind == "constant":
        raise ParameterDomainError(f"step size must be positive, got {delta}")
    K = int(K)
    if K < 1:
        raise ParameterDomainError("K must be >= 1")
    if method not in ("plain", "nesterov"):
        raise ConfigurationError(f"unknown method {method!r}")
    if method == "nesterov" and schedule.kind != "constant":
        raise ConfigurationError("Nesterov's scheme is run with a constant step")
    post = post_step or (lambda v: v)
    keep = np.arange(0, K + 1, int(save_every))
    if keep[-1] != K:
        keep = np.append(keep, K)
    x = np.array(x0, dtype=float)
    out = np.empty((len(keep),) + x.shape)
    out[0] = x
    y = x
    s = 1
    for k in range(1, K + 1):
        if method == "plain":
            x = post(x - schedule.rate(k, delta) * grad_at(x, k))
        else:
            x_new = post(y - delta * grad_at(y, k))
            y = x_new + (k - 1) / (k + 2) * (x_new - x)
            x = x_new
        if k % 64 == 0 or k == K:
            _check_finite(x, k)
        if s < len(keep) and keep[s] == k:
            out[s] = x
            s += 1
    return keep, out


def minibatch_grad_fn(model, m: int, mode: str, rng, dataset: Dataset | None = None):
    """grad_at(x, k) drawing one fresh batch per replicate per step from ``rng``."""
    from .data import draw_minibatch_records

    if mode not in BATCH_MODES:
        raise ConfigurationError(f"unknown batch mode {mode!r}")
    if mode != "population" and dataset is None:
        raise ConfigurationError(f"batch mode {mode!r} needs a dataset")

    def grad_at(x, k):
        recs = draw_minibatch_records(model, dataset, m, mode, rng, x.shape[0])
        return model.datum_grad(x[:, None, :], recs).mean(axis=1)

    return grad_at
