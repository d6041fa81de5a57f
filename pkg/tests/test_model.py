"""Tests for cloud/observation synthesis, seeding, and serialization."""

import numpy as np
import pytest

from gramcloud import (
    Cloud,
    ObservationBatch,
    SeedSpec,
    absorb64,
    mix64,
    read_batch_meta,
    read_cloud_csv,
    regenerate_batch,
    sample_cloud,
    sample_gram_mean,
    sample_haar_orthogonal,
    sample_observations,
    write_batch_meta,
    write_cloud_csv,
)
from gramcloud.errors import DegenerateCloudError, DimensionError
from gramcloud.model import _haar_batch, _wishart_identity


# --------------------------------------------------------------------------- #
# Seeding
# --------------------------------------------------------------------------- #

def test_mix64_avalanche():
    # Flipping one input bit should flip about half of the 64 output bits.
    rng = np.random.default_rng(20)
    flips = []
    for _ in range(2000):
        a = int(rng.integers(0, 1 << 64, dtype=np.uint64))
        bit = int(rng.integers(0, 64))
        b = a ^ (1 << bit)
        flips.append(bin(mix64(a) ^ mix64(b)).count("1"))
    mean = np.mean(flips)
    assert 30.0 <= mean <= 34.0
    assert mix64(0) != 0


def test_absorb64_order_sensitive():
    s = mix64(7)
    assert absorb64(absorb64(s, 1), 2) != absorb64(absorb64(s, 2), 1)


def test_seedspec_streams_are_distinct_and_reproducible():
    base = SeedSpec(123, 0)
    assert base.key() != SeedSpec(123, 1).key()
    assert base.key() != SeedSpec(124, 0).key()
    assert base.child(5).key() == SeedSpec(123, 5).key()
    a = base.rng().standard_normal(8)
    b = SeedSpec(123, 0).rng().standard_normal(8)
    assert np.array_equal(a, b)


# --------------------------------------------------------------------------- #
# Haar sampling
# --------------------------------------------------------------------------- #

@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_haar_orthogonality(d):
    q = sample_haar_orthogonal(d, SeedSpec(42, d))
    assert np.max(np.abs(q.T @ q - np.eye(d))) <= 1e-12
    assert abs(abs(np.linalg.det(q)) - 1.0) <= 1e-10


def test_haar_rejects_zero_dimension():
    with pytest.raises(DimensionError):
        sample_haar_orthogonal(0, SeedSpec(0, 0))


def test_haar_d1_is_a_fair_sign():
    vals = [sample_haar_orthogonal(1, SeedSpec(9, i))[0, 0] for i in range(1000)]
    assert set(vals) <= {1.0, -1.0}
    plus = sum(v == 1.0 for v in vals)
    # Binomial(1000, 1/2); window is about five standard errors wide.
    assert 420 <= plus <= 580


def test_haar_both_determinant_signs_occur():
    dets = [np.linalg.det(sample_haar_orthogonal(3, SeedSpec(11, i))) for i in range(200)]
    assert any(v > 0 for v in dets) and any(v < 0 for v in dets)


def test_haar_column_second_moment():
    # First column is uniform on the sphere, so E[q1 q1^T] = I/d.
    qs = _haar_batch(SeedSpec(77, 0).rng(), 100_000, 3)
    cols = qs[:, :, 0]
    second = cols.T @ cols / len(cols)
    assert np.max(np.abs(second - np.eye(3) / 3.0)) <= 0.01


def test_haar_trace_invariance():
    r = sample_haar_orthogonal(4, SeedSpec(5, 0))
    qs = _haar_batch(SeedSpec(5, 1).rng(), 10_000, 4)
    traces = np.einsum("ij,nji->n", r, qs)
    stderr = traces.std(ddof=1) / np.sqrt(len(traces))
    assert abs(traces.mean()) <= 5.0 * stderr


# --------------------------------------------------------------------------- #
# Cloud sampling and validation
# --------------------------------------------------------------------------- #

def test_sample_cloud_unit_scalar():
    x = sample_cloud(1, 1, SeedSpec(3, 0), unit_frobenius=True)
    assert x.entries[0, 0] in (1.0, -1.0)


def test_sample_cloud_unit_frobenius_norm():
    x = sample_cloud(3, 100, SeedSpec(8, 0), unit_frobenius=True)
    assert abs(x.frobenius_norm() - 1.0) <= 1e-12


def test_sample_cloud_always_full_rank():
    for i in range(1000):
        x = sample_cloud(3, 100, SeedSpec(100, i))
        assert x.sigma_min() > 0.0


def test_sample_cloud_rejects_k_below_d():
    with pytest.raises(DimensionError):
        sample_cloud(3, 2, SeedSpec(0, 0))


def test_cloud_validation():
    with pytest.raises(DimensionError):
        Cloud(np.zeros(3))
    with pytest.raises(DimensionError):
        Cloud(np.array([[np.inf, 0.0], [0.0, 1.0]]))
    flat = Cloud(np.array([[1.0, 2.0], [2.0, 4.0]]))
    assert not flat.is_full_rank()
    with pytest.raises(DegenerateCloudError):
        flat.require_full_rank()


def test_cloud_norms_match_numpy():
    x = sample_cloud(2, 6, SeedSpec(4, 0))
    m = x.entries
    assert x.frobenius_norm() == pytest.approx(np.linalg.norm(m), abs=0.0)
    assert x.operator_norm() == pytest.approx(np.linalg.norm(m, 2), abs=0.0)
    assert np.allclose(x.gram(), m.T @ m)


# --------------------------------------------------------------------------- #
# Observation batches
# --------------------------------------------------------------------------- #

def test_noiseless_observations_preserve_gram():
    x = sample_cloud(3, 7, SeedSpec(21, 0))
    batch = sample_observations(x, 0.0, 25, SeedSpec(21, 1))
    g = x.gram()
    for y in batch.observations:
        assert np.linalg.norm(y.T @ y - g) <= 1e-10


def test_observation_mean_is_zero():
    # E[Q X] = 0 under Haar rotations, so entrywise batch means vanish.
    x = sample_cloud(3, 20, SeedSpec(30, 0))
    batch = sample_observations(x, 1.0, 10_000, SeedSpec(30, 1))
    stacked = np.stack(batch.observations)
    mean = stacked.mean(axis=0)
    stderr = stacked.std(axis=0, ddof=1) / np.sqrt(len(batch.observations))
    assert np.all(np.abs(mean) <= 5.0 * stderr)


def test_observations_deterministic():
    x = sample_cloud(2, 4, SeedSpec(15, 0))
    b1 = sample_observations(x, 0.7, 50, SeedSpec(15, 1))
    b2 = sample_observations(x, 0.7, 50, SeedSpec(15, 1))
    for y1, y2 in zip(b1.observations, b2.observations):
        assert np.array_equal(y1, y2)


def test_observations_argument_errors():
    x = sample_cloud(2, 4, SeedSpec(15, 0))
    with pytest.raises(ValueError):
        sample_observations(x, 1.0, 0, SeedSpec(0, 0))
    with pytest.raises(ValueError):
        sample_observations(x, -0.5, 10, SeedSpec(0, 0))


def test_batch_validation():
    obs = [np.zeros((2, 3)), np.zeros((2, 4))]
    with pytest.raises(ValueError):
        ObservationBatch(obs, 1.0, 2, 3, 2, 0)


def test_gram_invariance_of_group_action():
    rng = np.random.default_rng(55)
    for i in range(100):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(d, d + 6))
        x = sample_cloud(d, k, SeedSpec(60, i))
        q = sample_haar_orthogonal(d, SeedSpec(61, i))
        assert np.linalg.norm((q @ x.entries).T @ (q @ x.entries) - x.gram()) <= 1e-10


# --------------------------------------------------------------------------- #
# Exact Gram-mean sampler
# --------------------------------------------------------------------------- #

def test_wishart_identity_moments():
    rng = SeedSpec(88, 0).rng()
    dof, k, reps = 37, 4, 4000
    acc = np.zeros((k, k))
    for _ in range(reps):
        acc += _wishart_identity(k, dof, rng)
    mean = acc / reps
    # E[W] = dof * I; Var(W_ii) = 2 dof, Var(W_ij) = dof.
    diag_se = np.sqrt(2.0 * dof / reps)
    off_se = np.sqrt(dof / reps)
    assert np.max(np.abs(np.diag(mean) - dof)) <= 5.0 * diag_se
    assert np.max(np.abs(mean - np.diag(np.diag(mean)))) <= 5.0 * off_se


def test_gram_mean_sampler_matches_direct_law():
    # One-shot sampler and brute-force averaging follow the same distribution:
    # compare first moments entrywise and the variance of a diagonal entry.
    x = sample_cloud(2, 3, SeedSpec(90, 0))
    sigma, n, reps = 1.5, 7, 3000
    direct = np.empty((reps, 3, 3))
    exact = np.empty((reps, 3, 3))
    for i in range(reps):
        batch = sample_observations(x, sigma, n, SeedSpec(91, i))
        stacked = np.stack(batch.observations).reshape(-1, 3)
        direct[i] = stacked.T @ stacked / n
        exact[i] = sample_gram_mean(x, sigma, n, SeedSpec(92, i))
    diff = direct.mean(axis=0) - exact.mean(axis=0)
    comb_se = np.sqrt(direct.var(axis=0, ddof=1) / reps + exact.var(axis=0, ddof=1) / reps)
    assert np.all(np.abs(diff) <= 5.0 * comb_se)
    v_direct = direct[:, 0, 0].var(ddof=1)
    v_exact = exact[:, 0, 0].var(ddof=1)
    assert 0.8 <= v_direct / v_exact <= 1.25


def test_gram_mean_sampler_validates_arguments():
    x = sample_cloud(2, 3, SeedSpec(90, 0))
    with pytest.raises(ValueError):
        sample_gram_mean(x, -1.0, 5, SeedSpec(0, 0))
    with pytest.raises(ValueError):
        sample_gram_mean(x, 1.0, 0, SeedSpec(0, 0))


# --------------------------------------------------------------------------- #
# Serialization
# --------------------------------------------------------------------------- #

def test_cloud_csv_roundtrip_exact(tmp_path):
    x = sample_cloud(3, 11, SeedSpec(70, 0))
    path = tmp_path / "cloud.csv"
    write_cloud_csv(x, path)
    back = read_cloud_csv(path)
    assert np.array_equal(back.entries, x.entries)
    text = path.read_text()
    assert "\r" not in text and text.endswith("\n")


def test_batch_meta_roundtrip_and_regeneration(tmp_path):
    x = sample_cloud(2, 5, SeedSpec(71, 0))
    meta_path = tmp_path / "meta.json"
    write_batch_meta(meta_path, d=2, k=5, sigma=0.3, n=20, master_seed=71,
                     cloud_csv=str(tmp_path / "cloud.csv"), unit_frobenius=False)
    meta = read_batch_meta(meta_path)
    assert meta["d"] == 2 and meta["k"] == 5 and meta["sigma"] == 0.3
    batch = regenerate_batch(meta, x)
    again = regenerate_batch(meta, x)
    assert batch.n == 20
    for y1, y2 in zip(batch.observations, again.observations):
        assert np.array_equal(y1, y2)
