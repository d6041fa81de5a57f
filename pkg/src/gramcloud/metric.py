"""Distance and alignment between clouds, modulo orthogonal transformations.

The distance between equivalence classes is

    rho([X1], [X2]) = min over orthogonal Q of ||X1 - Q X2||_F,

attained at the polar factor of X1 X2^T. Reflections are allowed: the
minimization runs over the full orthogonal group, not just rotations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloudError, DimensionError
from .model import RANK_TOL, as_matrix


@dataclass(frozen=True)
class Alignment:
    """An optimal aligner Q and the distance it achieves."""

    rotation: np.ndarray  # (d, d) orthogonal
    distance: float


def _shared_dims(x1, x2) -> tuple[np.ndarray, np.ndarray]:
    m1, m2 = as_matrix(x1), as_matrix(x2)
    if m1.shape != m2.shape:
        raise DimensionError(f"shape mismatch: {m1.shape} vs {m2.shape}")
    return m1, m2


def optimal_rotation(x1, x2) -> Alignment:
    """Orthogonal Q maximizing <X1, Q X2>, i.e. the polar factor of X1 X2^T.

    When X1 X2^T has repeated or zero singular values the maximizer is not
    unique; any SVD's U V^T is returned and the distance is unaffected.
    """
    m1, m2 = _shared_dims(x1, x2)
    u, _, vt = np.linalg.svd(m1 @ m2.T)
    q = u @ vt
    return Alignment(rotation=q, distance=float(np.linalg.norm(m1 - q @ m2)))


def procrustes_distance(x1, x2) -> float:
    """rho([X1], [X2]) = min over orthogonal Q of ||X1 - Q X2||.

    Algebraically rho^2 = ||X1||^2 + ||X2||^2 - 2 * sum of singular values of
    X1 X2^T, but that expansion cancels catastrophically near zero (identical
    classes come out around 1e-8 instead of 1e-16). Evaluating the aligned
    difference directly is exact to rounding at every distance, so that is
    what we return; the expansion is kept as a cross-check in the test suite.
    """
    return optimal_rotation(x1, x2).distance


def relative_error(x, xhat) -> float:
    """rho([X], [Xhat]) / ||X||; the scale-free figure of merit."""
    mx = as_matrix(x)
    norm = float(np.linalg.norm(mx))
    if norm <= 0.0:
        raise ValueError("relative error is undefined for a zero-norm cloud")
    return procrustes_distance(mx, xhat) / norm


def canonical_representative(x) -> np.ndarray:
    """Upper-trapezoidal class representative R = Q^T X with nonnegative diagonal.

    R is computed by an unpivoted QR factorization of X with the signs of
    the R diagonal folded away, so equal classes map to equal representatives
    and the map is idempotent. Requires the leading d-by-d submatrix of X to
    be invertible; column pivoting for the degenerate case is out of scope.
    """
    mat = as_matrix(x)
    d, k = mat.shape
    if k < d:
        raise DimensionError(f"representative requires k >= d, got d={d}, k={k}")
    lead = mat[:, :d]
    s = np.linalg.svd(lead, compute_uv=False)
    if not s[-1] > RANK_TOL * s[0]:
        raise DegenerateCloudError(
            "leading d-by-d submatrix is rank deficient; no canonical form without pivoting"
        )
    q, r = np.linalg.qr(lead)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    rep = (q * signs).T @ mat  # == diag(signs) @ Q^T X, upper-trapezoidal
    # Exact zeros below the diagonal: the QR already guarantees them up to
    # rounding on the leading block; enforce for bit-stable idempotence.
    rep[np.tril_indices(d, -1)] = 0.0
    return rep
