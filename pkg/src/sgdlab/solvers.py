"""Euler / Euler-Maruyama solvers for the continuous-time models.

All solvers accept a single start point ``(p,)`` or a replicate stack
``(R, p)``; stored states then have shape ``(N_saved, R, p)``. The ODE
solvers and their zero-noise SDE counterparts share one stepper, so a
zero noise scale reproduces the ODE path bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import ConfigurationError, DivergenceError, ParameterDomainError, RangeError
from .seeding import make_rng

DIVERGENCE_BOUND = 1e12


@dataclass(frozen=True)
class Path:
    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def spacing(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else float(self.meta.get("h", 0.0))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def index(self, t: float) -> int:
        """Nearest grid index to ``t``."""
        if t < -1e-12 or t > self.T * (1 + 1e-12) + 1e-12:
            raise RangeError(f"t={t} outside [0, {self.T}]")
        return int(min(round(t / self.spacing), len(self.times) - 1)) if len(self.times) > 1 else 0

    def at(self, t: float):
        return self.states[self.index(t)]

    def to_csv(self, path):
        from .io import write_csv

        p = self.states.shape[-1]
        if self.states.ndim != 2:
            raise ConfigurationError("only single (non-replicated) paths serialize to CSV")
        header = ["t"] + [f"x{j + 1}" for j in range(p)]
        cols = [self.times[:, None], self.states]
        if self.velocities is not None:
            header += [f"z{j + 1}" for j in range(p)]
            cols.append(self.velocities)
        return write_csv(path, header, np.hstack(cols).tolist())


@dataclass(frozen=True)
class MatrixPath:
    times: np.ndarray
    matrices: np.ndarray
    meta: dict = field(default_factory=dict)

    def at(self, t: float):
        h = self.times[1] - self.times[0]
        return self.matrices[int(min(round(t / h), len(self.times) - 1))]

    def to_csv(self, path):
        from .io import write_csv

        p = self.matrices.shape[-1]
        header = ["t"] + [f"m{i + 1}{j + 1}" for i in range(p) for j in range(p)]
        flat = self.matrices.reshape(len(self.times), p * p)
        return write_csv(path, header, np.hstack([self.times[:, None], flat]).tolist())


@dataclass(frozen=True)
class NoiseSpec:
    """Noise prefactor and sigma evaluation mode.

    ``scale=None`` means the default for the solver: sqrt(delta/m) for the
    plain SDE, (delta/m^2)^(1/4) for the accelerated one. ``substeps`` sums
    that many finer Brownian increments per step, so a solve at step h with
    substeps=2 sees the same Brownian path as a solve at h/2.
    """

    scale: float | None = None
    sigma_mode: str = "state_dependent"
    brownian_seed: int = 0
    substeps: int = 1

    def __post_init__(self):
        if self.scale is not None and self.scale < 0:
            raise ParameterDomainError("noise scale must be nonnegative")
        if self.sigma_mode not in ("frozen_on_X", "state_dependent"):
            raise ConfigurationError(f"unknown sigma_mode {self.sigma_mode!r}")
        if int(self.substeps) < 1:
            raise ParameterDomainError("substeps must be >= 1")


class BrownianIncrements:
    """Sequential Brownian increments over a step-h grid for a batch shape."""

    def __init__(self, seed, h: float, shape, substeps: int = 1):
        self.rng = make_rng("brownian", seed)
        self.shape = tuple(shape)
        self.sub = int(substeps)
        self.fine_sd = np.sqrt(h / self.sub)

    def next(self):
        if self.sub == 1:
            return self.rng.standard_normal(self.shape) * self.fine_sd
        return (self.rng.standard_normal((self.sub,) + self.shape) * self.fine_sd).sum(axis=0)


def _n_steps(h, T):
    if not h > 0:
        raise ParameterDomainError(f"step h must be positive, got {h}")
    if T < h * (1 - 1e-9):
        raise ParameterDomainError(f"horizon T={T} shorter than h={h}")
    return int(np.floor(T / h + 1e-9))


CHECK_EVERY = 64


def _check(x, j):
    # NaN fails the comparison, so this also catches non-finite states
    if not (np.abs(x) < DIVERGENCE_BOUND).all():
        raise DivergenceError(f"solution diverged at step {j}", step=j)


def _saved(N, save_every):
    save_every = int(save_every)
    if save_every < 1:
        raise ParameterDomainError("save_every must be >= 1")
    idx = np.arange(0, N + 1, save_every)
    if idx[-1] != N:
        idx = np.append(idx, N)
    return idx


def _ref_lookup(reference_path: Path, h: float, N: int):
    """Map solver step j to the reference grid index; grids must be nested."""
    if reference_path is None:
        raise ConfigurationError("frozen-sigma mode needs the deterministic reference path")
    hr = reference_path.spacing
    ratio = h / hr
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * max(1.0, ratio):
        raise ConfigurationError(f"solver step {h} is not a multiple of the reference spacing {hr}")
    if N * stride > len(reference_path.times) - 1:
        raise ConfigurationError("reference path does not cover the horizon")
    return stride


def _apply_sigma(S, dB):
    """S @ dB over any leading replicate axes; S is (p,p) or (R,p,p)."""
    if S.ndim == 2:
        return dB @ S.T
    return np.einsum("...ij,...j->...i", S, dB)


def _first_order(drift, x0, h, T, noise_fn=None, save_every=1, decay_alpha=None):
    N = _n_steps(h, T)
    keep = _saved(N, save_every)
    x = np.array(x0, dtype=float)
    out = np.empty((len(keep),) + x.shape)
    out[0] = x
    # per-step scalars precomputed; in-place updates keep the arithmetic order of x - step * drift(x) - kick
    if decay_alpha is None:
        steps, damps = [h] * N, None
    else:
        damps = [(j * h + 1.0) ** (-decay_alpha) for j in range(N)]
        steps = [h * d for d in damps]
    save_at = keep.tolist()
    s, nxt = 1, save_at[1] if len(save_at) > 1 else -1
    buf = np.empty_like(x)
    for j in range(N):
        np.multiply(steps[j], drift(x), out=buf)
        if noise_fn is not None:
            kick = noise_fn(j, x)
            if damps is not None:
                kick = kick * damps[j]
            x -= buf
            x -= kick
        else:
            x -= buf
        if (j + 1) % CHECK_EVERY == 0 or j + 1 == N:
            _check(x, j + 1)
        if j + 1 == nxt:
            out[s] = x
            s += 1
            nxt = save_at[s] if s < len(save_at) else -1
    return keep * h, out


def _second_order(drift, x0, h, T, eta, noise_fn=None, save_every=1):
    N = _n_steps(h, T)
    keep = _saved(N, save_every)
    eta = h if eta is None else float(eta)
    if not eta > 0:
        raise ParameterDomainError("eta_sing must be positive")
    x = np.array(x0, dtype=float)
    z = np.zeros_like(x)
    xs = np.empty((len(keep),) + x.shape)
    zs = np.empty_like(xs)
    xs[0], zs[0] = x, z
    # z <- z - h (3/max(t, eta) z + f) written as z (1 - 3h/max(t, eta)) - h f
    shrink = (1.0 - h * 3.0 / np.maximum(np.arange(N) * h, eta)).tolist()
    save_at = keep.tolist()
    s, nxt = 1, save_at[1] if len(save_at) > 1 else -1
    hz = np.empty_like(x)
    buf = np.empty_like(x)
    for j in range(N):
        np.multiply(h, drift(x), out=buf)
        np.multiply(h, z, out=hz)
        z *= shrink[j]
        z -= buf
        if noise_fn is not None:
            z -= noise_fn(j, x)
        x += hz
        if (j + 1) % CHECK_EVERY == 0 or j + 1 == N:
            _check(x, j + 1)
        if j + 1 == nxt:
            xs[s], zs[s] = x, z
            s += 1
            nxt = save_at[s] if s < len(save_at) else -1
    return keep * h, xs, zs


def solve_gd_ode(grad_field, x0, h, T, save_every=1, decay_alpha=None) -> Path:
    """Explicit Euler for X' = -grad_field(X)."""
    times, xs = _first_order(grad_field, x0, h, T, save_every=save_every, decay_alpha=decay_alpha)
    return Path(times, xs, meta={"solver": "gd_ode", "h": h, "noise_scale": 0.0})


def solve_nesterov_ode(grad_field, x0, h, T, eta_sing=None, save_every=1) -> Path:
    """Euler on X' = Z, Z' = -3/max(t, eta) Z - grad_field(X), X(0)=x0, Z(0)=0."""
    times, xs, zs = _second_order(grad_field, x0, h, T, eta_sing, save_every=save_every)
    return Path(times, xs, zs, meta={"solver": "nesterov_ode", "h": h, "eta_sing": eta_sing or h, "noise_scale": 0.0})


def _noise_fn(model, noise: NoiseSpec, scale, h, N, shape, reference_path):
    if scale == 0.0:
        return None
    bm = BrownianIncrements(noise.brownian_seed, h, shape, noise.substeps)
    if noise.sigma_mode == "frozen_on_X":
        stride = _ref_lookup(reference_path, h, N)
        ref = reference_path.states
        if ref.ndim != 2:
            raise ConfigurationError("reference path must be a single deterministic path")

        def fn(j, x):
            S = model.noise_sqrt(ref[j * stride])
            return scale * _apply_sigma(S, bm.next())

    else:

        def fn(j, x):
            return scale * _apply_sigma(model.noise_sqrt(x), bm.next())

    return fn


def solve_gd_sde(model, x0, delta, m, h, T, noise: NoiseSpec | None = None, reference_path: Path | None = None,
                 save_every=1, decay_alpha=None, drift=None) -> Path:
    """Euler-Maruyama for dX = -grad g(X) dt - sqrt(delta/m) sigma(.) dB.

    sigma is evaluated on ``reference_path`` (frozen_on_X) or on the current
    state (state_dependent).
    """
    noise = noise or NoiseSpec()
    if delta <= 0 or m < 1:
        raise ParameterDomainError("need delta > 0 and m >= 1")
    scale = np.sqrt(delta / m) if noise.scale is None else float(noise.scale)
    N = _n_steps(h, T)
    x0 = np.asarray(x0, dtype=float)
    fn = _noise_fn(model, noise, scale, h, N, x0.shape, reference_path)
    times, xs = _first_order(drift or model.grad, x0, h, T, fn, save_every, decay_alpha)
    meta = {"solver": "gd_sde", "h": h, "noise_scale": scale, "sigma_mode": noise.sigma_mode, "seed": noise.brownian_seed}
    return Path(times, xs, meta=meta)


def solve_nesterov_sde(model, x0, delta, m, h, T, eta_sing=None, noise: NoiseSpec | None = None,
                       reference_path: Path | None = None, save_every=1, drift=None) -> Path:
    """Euler-Maruyama on dX = Z dt, dZ = -[3/max(t,eta) Z + grad g(X)] dt - (delta/m^2)^(1/4) sigma dB."""
    noise = noise or NoiseSpec(sigma_mode="frozen_on_X")
    if delta <= 0 or m < 1:
        raise ParameterDomainError("need delta > 0 and m >= 1")
    scale = (delta / m**2) ** 0.25 if noise.scale is None else float(noise.scale)
    N = _n_steps(h, T)
    x0 = np.asarray(x0, dtype=float)
    fn = _noise_fn(model, noise, scale, h, N, x0.shape, reference_path)
    times, xs, zs = _second_order(drift or model.grad, x0, h, T, eta_sing, fn, save_every)
    meta = {"solver": "nesterov_sde", "h": h, "eta_sing": eta_sing or h, "noise_scale": scale,
            "sigma_mode": noise.sigma_mode, "seed": noise.brownian_seed}
    return Path(times, xs, zs, meta=meta)


def _ref_coeffs(model, reference_path, h, T):
    N = _n_steps(h, T)
    stride = _ref_lookup(reference_path, h, N)
    ref = reference_path.states
    if ref.ndim != 2:
        raise ConfigurationError("reference path must be a single deterministic path")
    pts = ref[: N * stride + 1 : stride]
    return N, model.hessian(pts), model.noise_sqrt(pts)


def solve_pi_ode(model, reference_path: Path, h, T, order="first", eta_sing=None) -> MatrixPath:
    """Pi' + H(X) Pi + sigma(X) = 0 (first order) or
    Pi'' + 3/t Pi' + H(X) Pi + sigma(X) = 0 (second order), Pi(0) = Pi'(0) = 0."""
    N, Hs, Ss = _ref_coeffs(model, reference_path, h, T)
    p = Hs.shape[-1]
    Pi = np.zeros((N + 1, p, p))
    eta = h if eta_sing is None else eta_sing
    dPi = np.zeros((p, p))
    for j in range(N):
        if order == "first":
            Pi[j + 1] = Pi[j] - h * (Hs[j] @ Pi[j] + Ss[j])
        elif order == "second":
            Pi[j + 1] = Pi[j] + h * dPi
            dPi = dPi - h * (3.0 / max(j * h, eta) * dPi + Hs[j] @ Pi[j] + Ss[j])
        else:
            raise ConfigurationError(f"order must be 'first' or 'second', got {order!r}")
    return MatrixPath(np.arange(N + 1) * h, Pi, meta={"order": order, "h": h})


def solve_limit_sde(model, reference_path: Path, h, T, order="first", eta_sing=None, brownian_seed=0, R=None,
                    save_every=1) -> Path:
    """dV = -H(X) V dt - sigma(X) dB (first order), or
    V'' + 3/t V' + H(X) V + sigma(X) B' = 0 (second order), started at rest at 0."""
    N, Hs, Ss = _ref_coeffs(model, reference_path, h, T)
    p = Hs.shape[-1]
    shape = (p,) if R is None else (int(R), p)
    bm = BrownianIncrements(brownian_seed, h, shape)
    keep = _saved(N, save_every)
    v = np.zeros(shape)
    w = np.zeros(shape)
    vs = np.empty((len(keep),) + shape)
    ws = np.empty_like(vs)
    vs[0] = ws[0] = 0.0
    eta = h if eta_sing is None else eta_sing
    s = 1
    for j in range(N):
        dB = bm.next()
        if order == "first":
            v = v - h * (v @ Hs[j].T) - dB @ Ss[j].T
        elif order == "second":
            v_new = v + h * w
            w = w - h * (3.0 / max(j * h, eta) * w + v @ Hs[j].T) - dB @ Ss[j].T
            v = v_new
        else:
            raise ConfigurationError(f"order must be 'first' or 'second', got {order!r}")
        if s < len(keep) and keep[s] == j + 1:
            vs[s], ws[s] = v, w
            s += 1
    return Path(keep * h, vs, ws if order == "second" else None,
                meta={"solver": f"limit_sde_{order}", "h": h, "seed": brownian_seed})


def lyapunov_stationary(H, S):
    """Symmetric solution of Gamma H + H Gamma = S for positive definite H."""
    H = np.asarray(H, dtype=float)
    S = np.asarray(S, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or S.shape != H.shape:
        raise ParameterDomainError("H and S must be square matrices of equal size")
    Hs = 0.5 * (H + H.T)
    if np.max(np.abs(H - Hs)) > 1e-12 * max(1.0, np.max(np.abs(H))):
        raise ParameterDomainError("H must be symmetric")
    if np.linalg.eigvalsh(Hs)[0] <= 0:
        raise ParameterDomainError("H must be positive definite for a stationary covariance")
    G = sla.solve_continuous_lyapunov(Hs, S)
    return 0.5 * (G + G.T)


def partial_sum_process(model, traj, reference_path: Path | None, m, delta, order="first", centering="iterate") -> Path:
    """Normalized cumulative sum of mini-batch gradient errors.

    H(t_k) = c * sum_{i<=k} [g_i - center_i], c = (m delta)^(1/2) (first order) or
    (m^2 delta)^(1/4) (second order), g_i the batch gradient used at step i.
    ``centering='reference'`` uses grad g(X(t_i)) on the deterministic path;
    ``centering='iterate'`` uses grad g at the point where g_i was taken,
    which removes the O(1) drift mismatch and leaves the martingale part.
    """
    if traj.grads is None:
        raise ConfigurationError("trajectory has no stored mini-batch gradients")
    if abs(traj.delta - delta) > 1e-12 * delta:
        raise ConfigurationError(f"trajectory step {traj.delta} does not match delta={delta}")
    K = traj.K
    if order == "first":
        c, tk = np.sqrt(m * delta), delta
        at = traj.iterates[:-1]
    elif order == "second":
        c, tk = (m * m * delta) ** 0.25, np.sqrt(delta)
        at = traj.aux[:-1] if traj.aux is not None else traj.iterates[:-1]
    else:
        raise ConfigurationError(f"order must be 'first' or 'second', got {order!r}")
    times = np.arange(K + 1) * tk
    if centering == "iterate":
        center = model.grad(at)
    elif centering == "reference":
        if reference_path is None:
            raise ConfigurationError("reference centering needs the deterministic path")
        hr = reference_path.spacing
        idx = np.rint(times[1:] / hr).astype(int)
        if np.any(np.abs(idx * hr - times[1:]) > 1e-9 * max(1.0, tk)) or idx[-1] >= len(reference_path.times):
            raise ConfigurationError("reference grid does not contain the iterate times")
        center = model.grad(reference_path.states[idx])
    else:
        raise ConfigurationError(f"unknown centering {centering!r}")
    H = np.zeros((K + 1,) + traj.grads.shape[1:])
    H[1:] = c * np.cumsum(traj.grads - center, axis=0)
    return Path(times, H, meta={"solver": "partial_sum", "order": order, "centering": centering, "h": tk})
