import numpy as np
import pytest

from sgdlab.analysis import rate_slope
from sgdlab.data import (Dataset, draw_indices, draw_minibatch, dump_dataset_csv, empirical_grad, full_data_field,
                         generate_dataset, minibatch_grad)
from sgdlab.errors import ParameterDomainError, SamplingError, ShapeError
from sgdlab.models import make_linreg_fixed, make_linreg_random, make_quadratic_mean, make_tensor4_d2

QM = make_quadratic_mean([0.0, 1.0], 1.0)


def test_generate_dataset_rejects_empty():
    with pytest.raises(ParameterDomainError):
        generate_dataset(QM, 0, 7)


def test_generate_dataset_clt_band_and_determinism():
    ds = generate_dataset(QM, 100_000, 7)
    assert abs(ds.records[:, 0].mean()) < 4 / np.sqrt(1e5)
    again = generate_dataset(QM, 100_000, 7)
    assert np.array_equal(ds.records, again.records)
    assert not np.array_equal(ds.records, generate_dataset(QM, 100_000, 8).records)
    assert ds.n == 100_000
    with pytest.raises(ValueError):
        ds.records[0, 0] = 1.0  # datasets are immutable


def test_exponential_coordinate_mean():
    ds = generate_dataset(make_quadratic_mean([0.0, 2.5], 1.0), 200_000, 1)
    u2 = ds.records[:, 1]
    assert u2.min() >= 0
    assert abs(u2.mean() - 2.5) < 4 * 2.5 / np.sqrt(2e5)


def test_empirical_grad_quadratic_mean_is_theta_minus_mean():
    ds = generate_dataset(QM, 500, 3)
    th = np.array([0.3, -0.2])
    assert np.allclose(empirical_grad(QM, ds, th), th - ds.records.mean(axis=0))
    one = Dataset(ds.records[:1], 0)
    assert np.allclose(empirical_grad(QM, one, th), QM.datum_grad(th, ds.records[0]))
    with pytest.raises(ShapeError):
        empirical_grad(QM, ds, [1.0, 2.0, 3.0])


def test_empirical_grad_linreg_fixed_brute_force():
    lf = make_linreg_fixed([1.0, -0.5], 0.1, 16)
    ds = generate_dataset(lf, 16, 5)
    th = np.array([0.2, 0.7])
    u1, u2 = ds.records[:, 0], ds.records[:, 1:]
    brute = np.zeros(2)
    for i in range(16):
        brute += -u2[i] * (u1[i] - u2[i] @ th)
    assert np.allclose(empirical_grad(lf, ds, th), brute / 16)


def test_full_data_field_matches_empirical_grad():
    for model in (QM, make_linreg_random(np.diag([1.0, 0.5]), 0.3, [0.1, 0.2]), make_tensor4_d2()):
        ds = generate_dataset(model, 300, 2)
        f = full_data_field(model, ds.records)
        th = np.array([0.6, 0.8])
        assert np.allclose(f(th), empirical_grad(model, ds, th))


def test_without_replacement_full_batch_is_permutation():
    ds = generate_dataset(QM, 50, 1)
    b = draw_minibatch(QM, ds, 50, "without_replacement", np.random.default_rng(0))
    assert sorted(map(tuple, b.records)) == sorted(map(tuple, ds.records))
    assert np.allclose(minibatch_grad(QM, b, [0.1, 0.2]), empirical_grad(QM, ds, [0.1, 0.2]))


def test_without_replacement_indices_distinct_and_uniform():
    rng = np.random.default_rng(9)
    idx = draw_indices(20, 5, "without_replacement", rng, reps=20_000)
    assert all(len(set(row)) == 5 for row in idx[:500])
    counts = np.bincount(idx.ravel(), minlength=20)
    expect = 20_000 * 5 / 20
    assert np.all(np.abs(counts - expect) < 4 * np.sqrt(expect))
    with pytest.raises(SamplingError):
        draw_indices(5, 6, "without_replacement", rng)


def test_bootstrap_frequencies_binomial_band():
    ds = generate_dataset(QM, 10, 4)
    b = draw_minibatch(QM, ds, 10_000, "bootstrap", np.random.default_rng(2))
    freq = np.bincount(b.source_indices, minlength=10)
    band = 4 * np.sqrt(10_000 * 0.1 * 0.9)
    assert np.all(np.abs(freq - 1000) <= band)


def test_population_uses_model_sampler():
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    b = draw_minibatch(QM, None, 3, "population", r1)
    assert np.array_equal(b.records, QM.sample(r2, 3))
    assert b.m == 3


def test_bad_modes():
    ds = generate_dataset(QM, 10, 4)
    with pytest.raises(SamplingError):
        draw_minibatch(QM, ds, 3, "stratified", np.random.default_rng(0))
    with pytest.raises(SamplingError):
        draw_minibatch(QM, None, 3, "bootstrap", np.random.default_rng(0))
    with pytest.raises(SamplingError):
        draw_minibatch(QM, ds, 11, "without_replacement", np.random.default_rng(0))


def test_minibatch_grad_is_theta_minus_batch_mean():
    ds = generate_dataset(QM, 100, 4)
    b = draw_minibatch(QM, ds, 7, "bootstrap", np.random.default_rng(1))
    assert np.allclose(minibatch_grad(QM, b, [1.0, 1.0]), 1.0 - b.records.mean(axis=0))


def test_bootstrap_conditional_unbiasedness():
    ds = generate_dataset(QM, 200, 6)
    rng = np.random.default_rng(3)
    th = np.array([0.5, 0.5])
    gs = np.array([minibatch_grad(QM, draw_minibatch(QM, ds, 10, "bootstrap", rng), th) for _ in range(10_000)])
    se = gs.std(axis=0, ddof=1) / np.sqrt(len(gs))
    assert np.all(np.abs(gs.mean(axis=0) - empirical_grad(QM, ds, th)) <= 4 * se)


def test_population_batch_variance_and_scaling():
    rng = np.random.default_rng(12)
    th = np.array([0.0, 0.0])
    sigma2 = np.diag(QM.noise_cov(th))
    var = {}
    for m in (10, 100, 1000):
        recs = QM.sample(rng, (10_000, m))
        g = QM.datum_grad(th[None, None, :], recs).mean(axis=1)
        var[m] = g.var(axis=0, ddof=1)
        assert np.all(np.abs(var[m] * m / sigma2 - 1) < 0.05)
    s = rate_slope(list(var), [v.sum() for v in var.values()])
    assert abs(s + 1) < 0.1


def test_batch_determinism():
    ds = generate_dataset(QM, 100, 4)
    a = draw_minibatch(QM, ds, 5, "without_replacement", np.random.default_rng(77))
    b = draw_minibatch(QM, ds, 5, "without_replacement", np.random.default_rng(77))
    assert np.array_equal(a.source_indices, b.source_indices)


def test_dump_dataset_csv(tmp_path):
    ds = generate_dataset(QM, 3, 4)
    p = dump_dataset_csv(ds, tmp_path / "d.csv")
    lines = p.read_text().split("\n")
    assert lines[0] == "u1,u2"
    assert np.allclose([float(v) for v in lines[1].split(",")], ds.records[0], rtol=0, atol=0)
