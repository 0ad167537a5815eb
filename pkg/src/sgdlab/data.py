"""Datasets drawn from Q, full-data gradients, and mini-batch sampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterDomainError, SamplingError, ShapeError

BATCH_MODES = ("population", "bootstrap", "without_replacement")


@dataclass(frozen=True)
class Dataset:
    records: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.records.shape[0]


@dataclass(frozen=True)
class Batch:
    records: np.ndarray
    mode: str
    source_indices: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.records.shape[-2]


def generate_dataset(model, n: int, seed: int) -> Dataset:
    """n i.i.d. draws from the model's data distribution; bit-identical per seed."""
    if int(n) < 1:
        raise ParameterDomainError(f"dataset size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    records = np.ascontiguousarray(model.sample_dataset(rng, int(n)), dtype=float)
    records.setflags(write=False)
    return Dataset(records=records, seed=int(seed))


def dump_dataset_csv(dataset: Dataset, path) -> Path:
    path = Path(path)
    q = dataset.records.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"u{j + 1}" for j in range(q)])
        for row in dataset.records:
            w.writerow([repr(float(v)) for v in row])
    return path


def empirical_grad(model, dataset: Dataset, theta):
    """Mean of the per-datum gradients over every record."""
    theta = model.check_theta(theta)
    if theta.ndim != 1:
        raise ShapeError("empirical_grad takes a single parameter vector")
    return model.datum_grad(theta, dataset.records).mean(axis=0)


def full_data_field(model, records):
    """Vectorized full-data gradient field theta -> grad L^n(theta).

    ``records`` may carry leading replicate axes ``(R, n, q)``, in which case
    the returned field maps ``(R, p)`` to ``(R, p)``. Affine models are reduced
    to sufficient statistics once.
    """
    stats = model.affine_stats(records)
    if stats is not None:
        A, b = stats

        def field(theta):
            return np.einsum("...ij,...j->...i", A, theta) - b

        return field

    def field(theta):
        return model.datum_grad(np.asarray(theta)[..., None, :], records).mean(axis=-2)

    return field


def _partial_fisher_yates(rng, n, m, reps=None):
    """First m entries of a uniformly random permutation of range(n)."""
    shape = () if reps is None else (reps,)
    idx = np.broadcast_to(np.arange(n), shape + (n,)).copy()
    rows = np.arange(reps) if reps is not None else None
    for i in range(m):
        j = i + rng.integers(0, n - i, size=shape)
        if reps is None:
            idx[i], idx[j] = idx[j], idx[i]
        else:
            tmp = idx[rows, i].copy()
            idx[rows, i] = idx[rows, j]
            idx[rows, j] = tmp
    return idx[..., :m]


def draw_indices(n: int, m: int, mode: str, rng, reps=None):
    if mode == "bootstrap":
        if m < 1:
            raise SamplingError("bootstrap batch size must be >= 1")
        shape = (m,) if reps is None else (reps, m)
        return rng.integers(0, n, size=shape)
    if mode == "without_replacement":
        if m > n:
            raise SamplingError(f"cannot draw {m} records without replacement from {n}")
        if m < 1:
            raise SamplingError("batch size must be >= 1")
        if m == n:
            # the only unordered sample of size n is the whole dataset
            full = np.arange(n)
            return full if reps is None else np.broadcast_to(full, (reps, n)).copy()
        # batches are unordered; store them in source order
        return np.sort(_partial_fisher_yates(rng, n, m, reps), axis=-1)
    raise SamplingError(f"unknown subsampling mode {mode!r}")


def draw_minibatch(model, source, m: int, mode: str, rng) -> Batch:
    """Draw one mini-batch.

    ``source`` is a Dataset for the bootstrap / without-replacement modes and
    is ignored (may be None) for population mode, which draws fresh data from Q.
    """
    if mode not in BATCH_MODES:
        raise SamplingError(f"unknown batch mode {mode!r}; choose from {BATCH_MODES}")
    m = int(m)
    if mode == "population":
        if m < 1:
            raise SamplingError("batch size must be >= 1")
        return Batch(records=model.sample(rng, m), mode=mode)
    if source is None:
        raise SamplingError(f"mode {mode!r} needs a dataset")
    idx = draw_indices(source.n, m, mode, rng)
    return Batch(records=source.records[idx], mode=mode, source_indices=idx)


def draw_minibatch_records(model, source, m: int, mode: str, rng, reps: int):
    """Records for ``reps`` independent batches at once, shape ``(reps, m, q)``."""
    if mode == "population":
        return model.sample(rng, (reps, m))
    idx = draw_indices(source.n, m, mode, rng, reps=reps)
    return source.records[idx]


def minibatch_grad(model, batch: Batch, theta):
    theta = model.check_theta(theta)
    if batch.records.shape[-2] < 1:
        raise SamplingError("empty batch")
    return model.datum_grad(theta[..., None, :], batch.records).mean(axis=-2)
