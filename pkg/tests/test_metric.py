"""Tests for alignment, orbit distance, and canonical representatives."""

import numpy as np
import pytest

from gramcloud import (
    SeedSpec,
    canonical_representative,
    optimal_rotation,
    procrustes_distance,
    relative_error,
    sample_cloud,
    sample_haar_orthogonal,
)
from gramcloud.errors import DegenerateCloudError, DimensionError


def _pair(i, d=None, k=None):
    rng = np.random.default_rng(1000 + i)
    d = d or int(rng.integers(1, 4))
    k = k or int(rng.integers(d, d + 6))
    x1 = sample_cloud(d, k, SeedSpec(2000, 2 * i))
    x2 = sample_cloud(d, k, SeedSpec(2000, 2 * i + 1))
    return x1, x2


# --------------------------------------------------------------------------- #
# optimal_rotation
# --------------------------------------------------------------------------- #

def test_rotation_is_identity_for_spd_cross_product():
    x = sample_cloud(3, 5, SeedSpec(1, 0))
    align = optimal_rotation(x, x)
    assert np.allclose(align.rotation, np.eye(3), atol=1e-10)
    assert align.distance <= 1e-10


def test_rotation_recovers_class_equality():
    x = sample_cloud(3, 8, SeedSpec(2, 0))
    q = sample_haar_orthogonal(3, SeedSpec(2, 1))
    align = optimal_rotation(x, q @ x.entries)
    assert align.distance <= 1e-10
    assert np.linalg.norm(x.entries - align.rotation @ q @ x.entries) <= 1e-9


def test_rotation_identity_times_two():
    align = optimal_rotation(np.eye(2), 2.0 * np.eye(2))
    assert np.allclose(align.rotation, np.eye(2), atol=1e-12)
    assert align.distance == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_rotation_is_orthogonal_and_optimal():
    # The polar factor beats random orthogonal competitors.
    for i in range(20):
        x1, x2 = _pair(i)
        align = optimal_rotation(x1, x2)
        d = x1.d
        assert np.max(np.abs(align.rotation.T @ align.rotation - np.eye(d))) <= 1e-10
        assert align.distance == pytest.approx(
            np.linalg.norm(x1.entries - align.rotation @ x2.entries), rel=1e-12)
        for j in range(10):
            q = sample_haar_orthogonal(d, SeedSpec(3000 + i, j))
            assert align.distance <= np.linalg.norm(x1.entries - q @ x2.entries) + 1e-10


def test_rotation_dimension_mismatch():
    with pytest.raises(DimensionError):
        optimal_rotation(np.eye(2), np.ones((2, 3)))


# --------------------------------------------------------------------------- #
# procrustes_distance
# --------------------------------------------------------------------------- #

def test_distance_zero_on_same_orbit():
    for i in range(10):
        x, _ = _pair(i)
        q = sample_haar_orthogonal(x.d, SeedSpec(4000, i))
        assert procrustes_distance(x, q @ x.entries) <= 1e-10


def test_distance_sign_flip_d1():
    assert procrustes_distance(np.array([[3.0, 4.0]]), np.array([[-3.0, -4.0]])) <= 1e-12


def test_distance_identity_times_two():
    assert procrustes_distance(np.eye(2), 2.0 * np.eye(2)) == pytest.approx(
        np.sqrt(2.0), abs=1e-12)


def test_distance_symmetry():
    for i in range(100):
        x1, x2 = _pair(i)
        assert procrustes_distance(x1, x2) == pytest.approx(
            procrustes_distance(x2, x1), abs=1e-10)


def test_distance_triangle_inequality():
    for i in range(100):
        rng = np.random.default_rng(500 + i)
        d = int(rng.integers(1, 4))
        k = int(rng.integers(d, d + 5))
        xs = [sample_cloud(d, k, SeedSpec(5000 + i, j)) for j in range(3)]
        r12 = procrustes_distance(xs[0], xs[1])
        r23 = procrustes_distance(xs[1], xs[2])
        r13 = procrustes_distance(xs[0], xs[2])
        assert r13 <= r12 + r23 + 1e-8


def test_distance_bi_invariance():
    for i in range(50):
        x1, x2 = _pair(i)
        q1 = sample_haar_orthogonal(x1.d, SeedSpec(6000, 2 * i))
        q2 = sample_haar_orthogonal(x1.d, SeedSpec(6000, 2 * i + 1))
        assert procrustes_distance(q1 @ x1.entries, q2 @ x2.entries) == pytest.approx(
            procrustes_distance(x1, x2), abs=1e-9)


def test_distance_matches_singular_value_expansion():
    # rho^2 = ||X1||^2 + ||X2||^2 - 2 sum sv(X1 X2^T) away from the
    # cancellation regime at rho = 0.
    for i in range(50):
        x1, x2 = _pair(i)
        sv = np.linalg.svd(x1.entries @ x2.entries.T, compute_uv=False)
        expansion = (np.linalg.norm(x1.entries) ** 2
                     + np.linalg.norm(x2.entries) ** 2 - 2.0 * sv.sum())
        assert procrustes_distance(x1, x2) ** 2 == pytest.approx(expansion, rel=1e-8)


def test_distance_identifies_classes_through_grams():
    # rho vanishes exactly when the Gram matrices coincide.
    for i in range(30):
        x1, x2 = _pair(i)
        q = sample_haar_orthogonal(x1.d, SeedSpec(7000, i))
        same = q @ x1.entries
        assert procrustes_distance(x1, same) <= 1e-8
        assert np.linalg.norm(x1.gram() - same.T @ same) <= 1e-7
        if np.linalg.norm(x1.gram() - x2.gram()) > 1e-7:
            assert procrustes_distance(x1, x2) > 1e-8


# --------------------------------------------------------------------------- #
# relative_error
# --------------------------------------------------------------------------- #

def test_relative_error_zero_on_orbit():
    x = sample_cloud(2, 6, SeedSpec(8, 0))
    q = sample_haar_orthogonal(2, SeedSpec(8, 1))
    assert relative_error(x, q @ x.entries) <= 1e-10


def test_relative_error_of_zero_estimate_is_one():
    x = sample_cloud(3, 10, SeedSpec(8, 2), unit_frobenius=True)
    assert relative_error(x, np.zeros((3, 10))) == pytest.approx(1.0, abs=1e-12)


def test_relative_error_identity_times_two():
    # rho(I, 2I) = sqrt(2) and ||I|| = sqrt(2), so the ratio is exactly 1.
    assert relative_error(np.eye(2), 2.0 * np.eye(2)) == pytest.approx(1.0, abs=1e-12)


def test_relative_error_rejects_zero_reference():
    with pytest.raises(ValueError):
        relative_error(np.zeros((2, 2)), np.eye(2))


# --------------------------------------------------------------------------- #
# canonical_representative
# --------------------------------------------------------------------------- #

def test_canonical_fixed_point_on_upper_trapezoidal():
    x = np.array([[2.0, 1.0, 3.0], [0.0, 1.5, -1.0]])
    assert np.allclose(canonical_representative(x), x, atol=1e-12)


def test_canonical_permutation_example():
    out = canonical_representative(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(out, np.eye(2), atol=1e-12)


def test_canonical_is_class_invariant_and_idempotent():
    for i in range(25):
        x, _ = _pair(i)
        q = sample_haar_orthogonal(x.d, SeedSpec(9000, i))
        r1 = canonical_representative(x)
        r2 = canonical_representative(q @ x.entries)
        assert np.allclose(r1, r2, atol=1e-8)
        assert np.allclose(canonical_representative(r1), r1, atol=1e-10)
        assert np.linalg.norm(r1.T @ r1 - x.gram()) <= 1e-8
        assert np.all(np.diag(r1[:, :x.d]) >= 0.0)
        # Entries below the leading-block diagonal are exactly zero.
        assert np.all(r1[np.tril_indices(x.d, k=-1)[0], np.tril_indices(x.d, k=-1)[1]] == 0.0)


def test_canonical_rejects_deficient_leading_block():
    x = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]])
    with pytest.raises(DegenerateCloudError):
        canonical_representative(x)
