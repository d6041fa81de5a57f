"""The invariant-features estimator.

The averaged observation Gram matrix converges to X^T X + d sigma^2 I_k, so
the recipe is: average, subtract the noise shift, keep the top-d eigenpairs,
and factor. With sigma unknown, the trailing eigenvalues estimate it first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotPSDError, NumericalFailure
from .model import (
    Cloud,
    ObservationBatch,
    SeedSpec,
    _observation_blocks,
    as_matrix,
    format_float,
)

# Residual allowed when eigenpairs are asked to reconstruct their matrix.
EIG_RESIDUAL_TOL = 1e-8

# A Gram mean is PSD in exact arithmetic; eigenvalues below this (relative to
# the top eigenvalue, floored at 1) indicate a numerical problem.
GRAM_PSD_TOL = 1e-10

# factor_gram refuses inputs whose smallest eigenvalue is below this.
FACTOR_PSD_TOL = 1e-6


# --------------------------------------------------------------------------- #
# Gram estimate
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class GramEstimate:
    """A symmetric k-by-k matrix with its full eigendecomposition attached.

    Eigenvalues are sorted descending; ties keep the ascending index order of
    the backend's output. ``eigenvectors[:, i]`` matches ``eigenvalues[i]``.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_symmetric(cls, m: np.ndarray, require_psd: bool = False) -> "GramEstimate":
        """Symmetrize, decompose, and verify the decomposition.

        A reconstruction residual above EIG_RESIDUAL_TOL * ||M|| raises
        NumericalFailure instead of silently degrading downstream estimates.
        """
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        sym = (m + m.T) / 2.0
        w, v = np.linalg.eigh(sym)
        order = np.argsort(-w, kind="stable")
        w, v = w[order], v[:, order]
        norm = float(np.linalg.norm(sym))
        residual = float(np.linalg.norm((v * w) @ v.T - sym))
        if residual > EIG_RESIDUAL_TOL * max(norm, 1e-300):
            raise NumericalFailure(
                f"eigendecomposition residual {residual:.3e} exceeds "
                f"{EIG_RESIDUAL_TOL:g} * ||M||"
            )
        if require_psd:
            floor = -GRAM_PSD_TOL * max(1.0, float(w[0]))
            if w[-1] < floor:
                raise NumericalFailure(
                    f"matrix expected PSD has eigenvalue {w[-1]:.3e}"
                )
        return cls(matrix=sym, eigenvalues=w, eigenvectors=v)


def gram_mean(batch: ObservationBatch) -> GramEstimate:
    """(1/N) sum_i Y_i^T Y_i, symmetrized, with eigendecomposition."""
    obs = batch.observations
    if obs.shape[0] < 1:
        raise ValueError("cannot average an empty batch")
    stacked = obs.reshape(batch.n * batch.d, batch.k)
    m = stacked.T @ stacked / float(batch.n)
    return GramEstimate.from_symmetric(m, require_psd=True)


def gram_mean_streamed(x, sigma: float, n: int, seed: SeedSpec) -> GramEstimate:
    """Gram mean of the batch sample_observations(x, sigma, n, seed) would yield,
    accumulated block by block so the batch is never materialized.

    The generation order matches sample_observations draw for draw; only the
    summation grouping differs, so results agree to rounding (not bitwise).
    """
    mat = as_matrix(x)
    d, k = mat.shape
    acc = np.zeros((k, k))
    for block in _observation_blocks(mat, sigma, n, seed.rng()):
        flat = block.reshape(block.shape[0] * d, k)
        acc += flat.T @ flat
    return GramEstimate.from_symmetric(acc / float(n), require_psd=True)


def debias_gram(m: GramEstimate, sigma: float, d: int) -> np.ndarray:
    """Subtract the noise shift: returns M - d sigma^2 I_k.

    Every eigenvalue shifts by exactly -d sigma^2 and eigenvectors are shared,
    so downstream code may reuse ``m``'s eigendecomposition.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if not 1 <= d <= m.k:
        raise DimensionError(f"need 1 <= d <= k, got d={d}, k={m.k}")
    return m.matrix - d * sigma ** 2 * np.eye(m.k)


# --------------------------------------------------------------------------- #
# Estimation
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class EstimateReport:
    """Everything the estimator decided: representative, scales, diagnostics.

    ``alphas[i]`` is the Euclidean norm of row i of the estimate; rows are
    mutually orthogonal because they are scaled orthonormal eigenvectors.
    ``eigengap`` is lambda_d - lambda_{d+1} of the Gram mean (NaN when k = d);
    a non-positive gap means the top-d eigenspace, hence the estimate, is not
    uniquely determined — reported, never an error.
    """

    cloud_estimate: Cloud
    alphas: np.ndarray
    sigma_used: float
    sigma_estimated: bool
    eigengap: float
    top_eigenvalues: np.ndarray
    n: int


def estimate_from_gram(m: GramEstimate, sigma: float, d: int,
                       sigma_estimated: bool = False, n: int = 0) -> EstimateReport:
    """Shared core of both algorithms: all decisions are functions of the
    Gram mean alone, so batches with equal Gram means give equal estimates."""
    if not 1 <= d <= m.k:
        raise DimensionError(f"need 1 <= d <= k, got d={d}, k={m.k}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    top = m.eigenvalues[:d]
    alphas = np.sqrt(np.maximum(0.0, top - d * sigma ** 2))
    rows = alphas[:, None] * m.eigenvectors[:, :d].T
    gap = float(m.eigenvalues[d - 1] - m.eigenvalues[d]) if m.k > d else float("nan")
    return EstimateReport(
        cloud_estimate=Cloud(rows),
        alphas=alphas,
        sigma_used=float(sigma),
        sigma_estimated=sigma_estimated,
        eigengap=gap,
        top_eigenvalues=top.copy(),
        n=n,
    )


def estimate_with_sigma(batch: ObservationBatch, sigma: float) -> EstimateReport:
    """Estimator with the noise level given: average, debias by d sigma^2 on the
    top-d eigenvalues (clamped at zero), scale the eigenvectors."""
    return estimate_from_gram(gram_mean(batch), sigma, batch.d, n=batch.n)


def estimate_sigma(m: GramEstimate, d: int) -> float:
    """Noise level from the trailing eigenvalues of the Gram mean.

    sigma^2 = (trace(M) - sum of top-d eigenvalues) / (d (k - d)), using the
    trace instead of summing k - d eigenvalues explicitly. The numerator is a
    sum of trailing eigenvalues, hence nonnegative whenever M is PSD; rounding
    noise on that sum is clamped at zero so sigma is always real.
    """
    if not 1 <= d < m.k:
        raise DimensionError(f"sigma estimation requires k > d >= 1, got d={d}, k={m.k}")
    residual = float(np.trace(m.matrix)) - float(np.sum(m.eigenvalues[:d]))
    return float(np.sqrt(max(0.0, residual) / (d * (m.k - d))))


def estimate_unknown_sigma(batch: ObservationBatch) -> EstimateReport:
    """Estimator with the noise level unknown: estimate sigma first, then
    proceed exactly as with sigma known."""
    m = gram_mean(batch)
    sigma_hat = estimate_sigma(m, batch.d)
    return estimate_from_gram(m, sigma_hat, batch.d, sigma_estimated=True, n=batch.n)


def estimate_sigma_centered(batch: ObservationBatch) -> float:
    """Noise variance from row sums, for clouds whose points sum to zero.

    When X 1 = 0, each scalar (Y_i 1)_j / sqrt(k) is N(0, sigma^2), so the
    mean of their squares estimates sigma^2 (population mean is zero by the
    centering assumption — the caller's responsibility, unverifiable from the
    batch). For non-centered clouds the estimate is biased upward by
    ||X 1||^2 / (d k), which is documented behavior and not an error.
    """
    sums = batch.observations.sum(axis=2)  # (n, d)
    return float(np.mean(sums * sums) / batch.k)


# --------------------------------------------------------------------------- #
# PSD projection and factorization
# --------------------------------------------------------------------------- #

def psd_rank_d_project(g, d: int) -> np.ndarray:
    """Nearest (Frobenius) PSD matrix of rank at most d: keep the top-d
    eigenpairs with negative eigenvalues clamped to zero."""
    est = g if isinstance(g, GramEstimate) else GramEstimate.from_symmetric(g)
    if not 1 <= d <= est.k:
        raise DimensionError(f"need 1 <= d <= k, got d={d}, k={est.k}")
    w = np.maximum(0.0, est.eigenvalues[:d])
    v = est.eigenvectors[:, :d]
    return (v * w) @ v.T


def factor_gram(g, d: int) -> Cloud:
    """A d-by-k cloud whose Gram matrix is the best rank-d approximation of G.

    Rows are eigenvectors scaled by the square roots of the top-d eigenvalues.
    G must be PSD up to tolerance; an eigenvalue below -FACTOR_PSD_TOL is an
    error rather than something to clamp silently. The zero matrix factors to
    the zero cloud, which is rank deficient by construction (flagged via
    Cloud.is_full_rank, not an error).
    """
    est = g if isinstance(g, GramEstimate) else GramEstimate.from_symmetric(g)
    if not 1 <= d <= est.k:
        raise DimensionError(f"need 1 <= d <= k, got d={d}, k={est.k}")
    if est.eigenvalues[-1] < -FACTOR_PSD_TOL:
        raise NotPSDError(
            f"matrix has eigenvalue {est.eigenvalues[-1]:.3e} < -{FACTOR_PSD_TOL:g}"
        )
    alphas = np.sqrt(np.maximum(0.0, est.eigenvalues[:d]))
    return Cloud(alphas[:, None] * est.eigenvectors[:, :d].T)


# --------------------------------------------------------------------------- #
# Report serialization
# --------------------------------------------------------------------------- #

def write_report_json(report: EstimateReport, path) -> None:
    cloud = report.cloud_estimate
    gap = report.eigengap
    record = {
        "d": cloud.d,
        "k": cloud.k,
        "N": report.n,
        "sigma_used": report.sigma_used,
        "sigma_estimated": report.sigma_estimated,
        "eigengap": None if np.isnan(gap) else gap,
        "alphas": [float(format_float(a)) for a in report.alphas],
        "top_eigenvalues": [float(format_float(v)) for v in report.top_eigenvalues],
    }
    with open(path, "w", newline="") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
