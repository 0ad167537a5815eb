"""Monte-Carlo ensembles and the finite-sample tests built on them."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import (InsufficientSampleError, ParameterDomainError, ReplicateError,
                     SgdLabError)
from .oracles import adaptive_simpson
from .seeding import hash64, make_rng

KS_CRITICAL = {0.05: 1.358, 0.01: 1.628}


@dataclass
class Ensemble:
    replicates: np.ndarray
    master_seed: int
    per_replicate_seeds: list
    meta: dict = field(default_factory=dict)

    @property
    def R(self) -> int:
        return self.replicates.shape[0]


@dataclass
class TestResult:
    statistic: float
    threshold: float
    passed: bool
    n_samples: int
    description: str
    name: str = ""
    criterion: int | None = None
    extra: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def as_dict(self):
        return {
            "name": self.name,
            "criterion": self.criterion,
            "statistic": float(self.statistic),
            "threshold": float(self.threshold),
            "passed": bool(self.passed),
            "n_samples": int(self.n_samples),
            "description": self.description,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["statistic"], d["threshold"], d["passed"], d["n_samples"], d["description"],
                   d.get("name", ""), d.get("criterion"), d.get("extra", {}))


def upper_test(statistic, threshold, n, description, **kw) -> TestResult:
    """passed iff statistic <= threshold."""
    statistic = float(statistic)
    return TestResult(statistic, float(threshold), bool(statistic <= threshold), int(n), description, **kw)


def resolve_threads(threads) -> int:
    if threads in (None, "auto", 0):
        return max(1, os.cpu_count() or 1)
    threads = int(threads)
    if threads < 1:
        raise ParameterDomainError("threads must be positive")
    return threads


def run_ensemble(sim, R: int, master_seed, threads=1, block_size: int | None = None) -> Ensemble:
    """Run R replicates of ``sim``.

    Per-replicate mode (``block_size=None``): ``sim(r, rng)`` returns the
    outcome vector of replicate r, with rng seeded by hash64(master_seed, r).

    Block mode: replicates are grouped into fixed blocks of ``block_size``;
    ``sim(b, rng, count)`` returns a ``(count, d)`` array for block b with
    rng seeded by hash64(master_seed, "block", b). Block boundaries never
    depend on the thread count, so results are bit-identical for any
    ``threads``.
    """
    R = int(R)
    if R < 2:
        raise ParameterDomainError("an ensemble needs R >= 2")
    threads = resolve_threads(threads)
    if block_size is None:
        seeds = [hash64(master_seed, r) for r in range(R)]

        def one(r):
            try:
                out = np.atleast_1d(np.asarray(sim(r, np.random.Generator(np.random.PCG64(seeds[r]))), dtype=float))
            except SgdLabError as exc:
                raise ReplicateError(f"replicate {r} failed: {exc}", replicate=r) from exc
            return out

        tasks = range(R)
    else:
        block_size = int(block_size)
        nb = -(-R // block_size)
        seeds = [hash64(master_seed, "block", b) for b in range(nb)]

        def one(b):
            count = min(block_size, R - b * block_size)
            try:
                out = np.asarray(sim(b, np.random.Generator(np.random.PCG64(seeds[b])), count), dtype=float)
            except SgdLabError as exc:
                raise ReplicateError(f"replicate block {b} (first replicate {b * block_size}) failed: {exc}",
                                     replicate=b * block_size) from exc
            return out.reshape(count, -1)

        tasks = range(nb)
    if threads == 1 or len(tasks) == 1:
        parts = [one(i) for i in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, tasks))
    reps = np.stack(parts) if block_size is None else np.concatenate(parts, axis=0)
    return Ensemble(reps, int(master_seed) if not isinstance(master_seed, str) else master_seed, seeds,
                    {"block_size": block_size})


def empirical_mean_cov(ensemble_or_array):
    x = ensemble_or_array.replicates if isinstance(ensemble_or_array, Ensemble) else np.asarray(ensemble_or_array, float)
    x = x.reshape(x.shape[0], -1)
    if x.shape[0] < 2:
        raise InsufficientSampleError("need at least two replicates")
    mean = x.mean(axis=0)
    d = x - mean
    return mean, d.T @ d / (x.shape[0] - 1)


def normal_cdf(x, mean=0.0, sd=1.0):
    return 0.5 * special.erfc(-(np.asarray(x, float) - mean) / (sd * math.sqrt(2.0)))


def ks_statistic(samples, cdf) -> float:
    """Two-sided one-sample Kolmogorov-Smirnov D against a vectorized CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_test(samples, cdf, level=0.01, description="KS", **kw) -> TestResult:
    if level not in KS_CRITICAL:
        raise ParameterDomainError(f"level must be one of {sorted(KS_CRITICAL)}")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 50:
        raise InsufficientSampleError(f"KS test needs >= 50 samples, got {x.size}")
    D = ks_statistic(x, cdf)
    return upper_test(D, KS_CRITICAL[level] / math.sqrt(x.size), x.size, description, **kw)


def ks_test_normal(samples, mean, sd, level=0.01, description=None, **kw) -> TestResult:
    if not sd > 0:
        raise ParameterDomainError("sd must be positive")
    desc = description or f"KS vs Normal({mean:.6g}, {sd:.6g}^2) at level {level}"
    return ks_test(samples, lambda x: normal_cdf(x, mean, sd), level, desc, **kw)


def rate_slope(scales, errors) -> float:
    """Least-squares slope of log(error) against log(scale)."""
    s = np.asarray(scales, dtype=float)
    e = np.asarray(errors, dtype=float)
    if s.size < 3 or s.shape != e.shape:
        raise ParameterDomainError("rate_slope needs >= 3 paired points")
    if np.any(s <= 0) or np.any(e <= 0):
        raise ParameterDomainError("scales and errors must be positive")
    return float(np.polyfit(np.log(s), np.log(e), 1)[0])


def escape_time(path, center, rho, times=None):
    """First grid time with ||X(t) - center|| > rho, or None if it never leaves.

    ``path`` is a solver Path or an array of states (N, p) / (N, R, p) with
    ``times``. For replicate stacks an array of times is returned, with NaN
    for replicates that stay inside the ball.
    """
    if hasattr(path, "states"):
        times, states = path.times, path.states
    else:
        states = np.asarray(path, dtype=float)
        if times is None:
            raise ParameterDomainError("times are required with a raw state array")
    if not rho > 0:
        raise ParameterDomainError("rho must be positive")
    times = np.asarray(times, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    dist = np.linalg.norm(states - np.asarray(center, dtype=float), axis=-1)
    if np.any(dist[0] > rho):
        raise ParameterDomainError("path starts outside the ball")
    out = dist > rho
    first = np.argmax(out, axis=0)
    hit = out.any(axis=0)
    if np.ndim(first) == 0:
        return float(times[first]) if hit else None
    return np.where(hit, times[first], np.nan)


def batch_means_tau(series, n_batches=20) -> float:
    """Integrated autocorrelation time (in samples) from batch means."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    b = n // n_batches
    if b < 2:
        raise InsufficientSampleError("series too short for batch means")
    x = x[: b * n_batches]
    v = x.var(axis=0, ddof=1)
    bm = x.reshape((n_batches, b) + x.shape[1:]).mean(axis=1).var(axis=0, ddof=1)
    tau = np.where(v > 0, b * bm / np.where(v > 0, v, 1.0), 1.0)
    return float(np.max(np.maximum(tau, 1.0)))


def thin_samples(series, burn_in_frac=0.5, factor=5.0):
    """Drop the first ``burn_in_frac`` of a (N, ...) series and thin it by
    ``factor`` times the batch-means autocorrelation time."""
    x = np.asarray(series, dtype=float)
    x = x[int(burn_in_frac * x.shape[0]):]
    lag = max(1, int(math.ceil(factor * batch_means_tau(x))))
    return x[::lag], lag


def gibbs_density(model, delta, m, lo, hi, sigma=None, tol=1e-10):
    """Normalized density p(x) proportional to exp(-2m g(x) / (delta sigma^2)) on [lo, hi].

    Returns (pdf, cdf) callables; the normalizer and CDF come from quadrature.
    """
    if sigma is None:
        sigma = float(np.sqrt(model.noise_cov(np.zeros(1))[0, 0]))
    beta = 2.0 * m / (delta * sigma**2)
    g0 = float(min(model.value(np.array([v])) for v in np.linspace(lo, hi, 201)))

    def unnorm(x):
        return math.exp(-beta * (float(model.value(np.array([x]))) - g0))

    Z, _ = adaptive_simpson(unnorm, lo, hi, tol=tol)
    grid = np.linspace(lo, hi, 2001)
    dens = np.array([unnorm(v) for v in grid]) / Z
    # cumulative trapezoid on a fine grid, then linear interpolation
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cum /= cum[-1]

    def pdf(x):
        return np.interp(x, grid, dens, left=0.0, right=0.0)

    def cdf(x):
        return np.interp(x, grid, cum, left=0.0, right=1.0)

    return pdf, cdf


def gibbs_density_check(model, delta, m, samples, method="chi2", level=0.01, bins=20, sigma=None, **kw) -> TestResult:
    """Goodness of fit of long-run SDE samples to the Gibbs density.

    ``method='chi2'``: 20 equiprobable bins, Pearson statistic against the
    chi-square quantile with bins-1 degrees of freedom. ``method='ks'``:
    Kolmogorov-Smirnov against the numerically integrated CDF.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1000:
        raise InsufficientSampleError(f"Gibbs check needs >= 1000 samples, got {x.size}")
    if sigma is None:
        sigma = float(np.sqrt(model.noise_cov(np.zeros(1))[0, 0]))
    spread = math.sqrt(delta * sigma**2 / (2.0 * m))
    center = float(np.median(x))
    width = max(12.0 * spread, 6.0 * float(np.std(x)), 1e-12)
    lo, hi = min(center - width, x.min()), max(center + width, x.max())
    _, cdf = gibbs_density(model, delta, m, lo, hi, sigma)
    if method == "ks":
        return ks_test(x, cdf, level, "KS vs Gibbs density", **kw)
    if method != "chi2":
        raise ParameterDomainError(f"unknown method {method!r}")
    probs = np.linspace(0, 1, bins + 1)
    grid = np.linspace(lo, hi, 20001)
    cg = cdf(grid)
    edges = np.interp(probs, cg, grid)
    edges[0], edges[-1] = -np.inf, np.inf
    counts, _ = np.histogram(x, edges)
    expected = x.size / bins
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    thr = float(special.gammainccinv((bins - 1) / 2.0, level) * 2.0)
    return upper_test(chi2, thr, x.size, f"chi-square ({bins} bins) vs Gibbs density at level {level}", **kw)


def fit_exponential_rate(times, values) -> float:
    """Slope of log(values) against times (least squares)."""
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    if np.any(v <= 0):
        raise ParameterDomainError("values must be positive")
    return float(np.polyfit(t, np.log(v), 1)[0])


def relative_frobenius(est, target) -> float:
    est = np.asarray(est, float)
    target = np.asarray(target, float)
    return float(np.linalg.norm(est - target) / np.linalg.norm(target))
