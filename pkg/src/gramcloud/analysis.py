"""Closed-form bounds, error formulas, and the Monte-Carlo audits backing them.

Three layers:

* the differential of X -> X^T X as a linear operator on tangent directions
  (``lx_apply``, ``horizontal_project``, ``lx_spectrum``);
* closed-form bounds and moment formulas with explicit applicability flags;
* randomized audits that hammer each bound and report violation counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ResourceLimitError
from .estimator import GramEstimate, psd_rank_d_project
from .metric import optimal_rotation, procrustes_distance
from .model import Cloud, SeedSpec, _gram_mean_draw, _haar_batch, as_matrix

# Slack allowed before a deterministic bound audit counts a violation.
AUDIT_SLACK_TOL = 1e-8

# Lipschitz constant of Gram inversion relative to sigma_d: 1/sqrt(2(sqrt(2)-1)).
GRAM_LIPSCHITZ = 1.0 / math.sqrt(2.0 * (math.sqrt(2.0) - 1.0))


# --------------------------------------------------------------------------- #
# The differential of X -> X^T X
# --------------------------------------------------------------------------- #

def _pair_dims(x, xdot) -> tuple[np.ndarray, np.ndarray]:
    mat = as_matrix(x)
    dot = as_matrix(xdot)
    if mat.shape != dot.shape:
        raise DimensionError(f"shape mismatch: {mat.shape} vs {dot.shape}")
    return mat, dot


def lx_apply(x, xdot) -> np.ndarray:
    """Directional derivative of the Gram map: X^T Xdot + Xdot^T X.

    Symmetric k-by-k by construction; vanishes exactly on the orbit
    directions Xdot = Omega X with Omega skew.
    """
    mat, dot = _pair_dims(x, xdot)
    m = mat.T @ dot
    return m + m.T


def horizontal_project(x, xdot) -> np.ndarray:
    """Orthogonal projection of a tangent direction onto the horizontal space
    { P : P X^T = X P^T }.

    The vertical component is Omega X for the skew Omega solving the
    Sylvester-type equation Omega XX^T + XX^T Omega = Xdot X^T - X Xdot^T,
    solved entrywise in the eigenbasis of XX^T (divide by lambda_i + lambda_j,
    positive for full-rank X).
    """
    mat, dot = _pair_dims(x, xdot)
    Cloud(mat).require_full_rank()
    rhs = dot @ mat.T - mat @ dot.T
    lam, u = np.linalg.eigh(mat @ mat.T)
    r = u.T @ rhs @ u
    omega = u @ (r / (lam[:, None] + lam[None, :])) @ u.T
    return dot - omega @ mat


@dataclass(frozen=True)
class OperatorSpectrum:
    """Singular values of the Gram differential restricted to the horizontal
    space, both in closed form and from an assembled matrix.

    Lists are descending and have length dk - d(d-1)/2. ``smallest`` equals
    sqrt(2) * sigma_d(X) whenever k > d; at k = d the third singular-value
    family is empty and the minimum is 2 * sigma_d(X) instead.
    """

    analytic: np.ndarray
    numeric: np.ndarray
    smallest: float


def _horizontal_basis(u: np.ndarray, s: np.ndarray, vt: np.ndarray,
                      k: int) -> list[np.ndarray]:
    """Orthonormal basis of H_X in the SVD frame X = U diag(s) Vt.

    Three families: diagonal frame matrices e_i e_i^T; symmetrized pairs
    (s_i e_i e_j^T + s_j e_j e_i^T)/sqrt(s_i^2+s_j^2) for i < j; and
    e_i e_j^T hitting the co-kernel columns j > d.
    """
    d = len(s)
    basis = []
    for i in range(d):
        basis.append(np.outer(u[:, i], vt[i]))
    for i in range(d):
        for j in range(i + 1, d):
            elem = s[i] * np.outer(u[:, i], vt[j]) + s[j] * np.outer(u[:, j], vt[i])
            basis.append(elem / math.sqrt(s[i] ** 2 + s[j] ** 2))
    for i in range(d):
        for j in range(d, k):
            basis.append(np.outer(u[:, i], vt[j]))
    return basis


def lx_spectrum(x) -> OperatorSpectrum:
    """Spectrum of the Gram differential on horizontal directions.

    Analytic values: 2 s_i; sqrt(2(s_i^2 + s_j^2)) for i < j; sqrt(2) s_i
    repeated k - d times. The numeric list is the SVD of the operator matrix
    assembled column by column from the basis images, with matrices flattened
    so the Frobenius inner product becomes the vector dot product.
    """
    mat = as_matrix(x)
    cloud = Cloud(mat).require_full_rank()
    d, k = cloud.d, cloud.k
    u, s, vt = np.linalg.svd(mat, full_matrices=True)
    analytic = [2.0 * si for si in s]
    analytic += [math.sqrt(2.0 * (s[i] ** 2 + s[j] ** 2))
                 for i in range(d) for j in range(i + 1, d)]
    analytic += [math.sqrt(2.0) * si for si in s for _ in range(k - d)]
    analytic = np.sort(np.asarray(analytic))[::-1]

    basis = _horizontal_basis(u, s, vt, k)
    op = np.column_stack([lx_apply(mat, b).ravel() for b in basis])
    numeric = np.linalg.svd(op, compute_uv=False)
    return OperatorSpectrum(analytic=analytic, numeric=numeric,
                            smallest=float(analytic[-1]))


# --------------------------------------------------------------------------- #
# Closed-form bounds
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class BoundReport:
    """A named bound evaluation.

    ``value`` is None whenever ``applicable`` is False: bounds are never
    extrapolated outside their hypotheses, because the audits would then be
    testing statements nobody proved.
    """

    bound_name: str
    inputs: dict
    value: float | None
    applicable: bool


def gram_inversion_bound(sigma_d: float, gram_gap: float) -> BoundReport:
    """Procrustes distance of two rank-d clouds in terms of their Gram gap:
    rho <= (sigma_d/sqrt(2)) (1 - sqrt(1 - 2 gap / sigma_d^2)),
    valid while gap <= sigma_d^2 / 2."""
    if sigma_d <= 0:
        raise ValueError(f"sigma_d must be positive, got {sigma_d}")
    if gram_gap < 0:
        raise ValueError(f"gram_gap must be nonnegative, got {gram_gap}")
    inputs = {"sigma_d": float(sigma_d), "gram_gap": float(gram_gap)}
    if gram_gap > sigma_d ** 2 / 2.0:
        return BoundReport("gram_inversion", inputs, None, False)
    radicand = max(0.0, 1.0 - 2.0 * gram_gap / sigma_d ** 2)
    value = sigma_d / math.sqrt(2.0) * (1.0 - math.sqrt(radicand))
    return BoundReport("gram_inversion", inputs, value, True)


def tu_lipschitz_bound(sigma_d: float, gram_gap: float) -> BoundReport:
    """Global Lipschitz form of the same comparison: rho <= L gap / sigma_d
    with L = 1/sqrt(2(sqrt(2)-1)) ~ 1.0986841."""
    if sigma_d <= 0:
        raise ValueError(f"sigma_d must be positive, got {sigma_d}")
    if gram_gap < 0:
        raise ValueError(f"gram_gap must be nonnegative, got {gram_gap}")
    inputs = {"sigma_d": float(sigma_d), "gram_gap": float(gram_gap)}
    return BoundReport("tu_lipschitz", inputs, GRAM_LIPSCHITZ * gram_gap / sigma_d, True)


def gram_diff_upper_bound(opnorm_x1: float, rho: float) -> BoundReport:
    """Reverse comparison: Gram gap <= (9/4) ||X1||_op rho, valid while
    rho <= ||X1||_op / 4."""
    if opnorm_x1 <= 0:
        raise ValueError(f"opnorm_x1 must be positive, got {opnorm_x1}")
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    inputs = {"opnorm_x1": float(opnorm_x1), "rho": float(rho)}
    if rho > opnorm_x1 / 4.0:
        return BoundReport("gram_diff", inputs, None, False)
    return BoundReport("gram_diff", inputs, 2.25 * opnorm_x1 * rho, True)


def concentration_bound(d: int, k: int, n: int, sigma: float,
                        opnorm_x: float, delta: float) -> BoundReport:
    """High-probability bound on the debiased, rank-d-projected Gram estimate:
    with probability at least 1 - delta,

        ||Gtilde_N - G|| <= 8 sqrt(2d) [ sqrt((2||X||_op^2 s^2 + d s^4)/N * t)
                                         + s^2/N * t ],   t = k log(10/delta).
    """
    if min(d, k, n) < 1:
        raise ValueError(f"d, k, n must be positive, got {(d, k, n)}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if opnorm_x < 0:
        raise ValueError(f"opnorm_x must be nonnegative, got {opnorm_x}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    t = k * math.log(10.0 / delta)
    value = 8.0 * math.sqrt(2.0 * d) * (
        math.sqrt((2.0 * opnorm_x ** 2 * sigma ** 2 + d * sigma ** 4) / n * t)
        + sigma ** 2 / n * t
    )
    inputs = {"d": d, "k": k, "n": n, "sigma": float(sigma),
              "opnorm_x": float(opnorm_x), "delta": float(delta)}
    return BoundReport("concentration", inputs, value, True)


# --------------------------------------------------------------------------- #
# Moment formulas
# --------------------------------------------------------------------------- #

def expected_gram_mse(d: int, k: int, n: int, sigma: float, frob2_x: float) -> float:
    """Mean squared Frobenius error of the debiased Gram estimate:
    (k+1) sigma^2 / N * (k sigma^2 d + ||X||_F^2)."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return (k + 1) * sigma ** 2 / n * (k * sigma ** 2 * d + frob2_x)


def gram_mean_covariance(g, sigma: float, n: int, d: int,
                         s: int, t: int, u: int, v: int) -> float:
    """Covariance of Gram-mean entries (s,t) and (u,v):

        (1/N) [ sigma^2 (d_tv G_su + d_sv G_tu + d_tu G_sv + d_su G_tv)
                + sigma^4 d (d_su d_tv + d_sv d_tu) ]

    with d_ab the Kronecker delta. ``d`` is the ambient rotation dimension,
    which the k-by-k matrix G does not determine on its own.
    """
    mat = as_matrix(g)
    if mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"G must be square, got shape {mat.shape}")
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be positive, got n={n}, d={d}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    k = mat.shape[0]
    for name, idx in (("s", s), ("t", t), ("u", u), ("v", v)):
        if not 0 <= idx < k:
            raise IndexError(f"index {name}={idx} out of range for k={k}")
    def delta(a: int, b: int) -> float:
        return 1.0 if a == b else 0.0
    second = (delta(t, v) * mat[s, u] + delta(s, v) * mat[t, u]
              + delta(t, u) * mat[s, v] + delta(s, u) * mat[t, v])
    fourth = delta(s, u) * delta(t, v) + delta(s, v) * delta(t, u)
    return (sigma ** 2 * second + sigma ** 4 * d * fourth) / n


def oracle_mle_mse(d: int, k: int, n: int, sigma: float) -> float:
    """MSE of the oracle that knows every rotation: sigma^2 d k / N."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return sigma ** 2 * d * k / n


def sign_test_error(norm_x: float, sigma: float) -> float:
    """Error probability of the optimal test between a cloud and its
    reflection from one observation: Phi(-||X|| / sigma).

    Evaluated through erfc, whose double-precision implementation is far
    inside the 1e-12 tolerance. Approaches 1/2 as the noise grows, which is
    the indistinguishability statement.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if norm_x < 0:
        raise ValueError(f"norm_x must be nonnegative, got {norm_x}")
    return 0.5 * math.erfc(norm_x / sigma / math.sqrt(2.0))


def delta_l_bound(d: int, l: int, rho: float) -> float:
    """Closed-form bound on the squared degree-l moment gap of two clouds at
    Procrustes distance rho: 12 (2d)^l rho^2. Stated for l >= 2 only."""
    if l < 2:
        raise ValueError(f"the bound requires l >= 2, got l={l}")
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    return 12.0 * (2.0 * d) ** l * rho ** 2


# --------------------------------------------------------------------------- #
# Monte-Carlo estimate of the moment gap
# --------------------------------------------------------------------------- #

class MonteCarloScalar(float):
    """A float that carries its own Monte-Carlo uncertainty.

    Compares and computes as the estimate itself; ``squared_stderr`` is the
    variance of the estimator (squared standard error) and ``samples`` the
    number of randomized draws consumed.
    """

    squared_stderr: float
    samples: int

    def __new__(cls, value: float, squared_stderr: float, samples: int):
        obj = super().__new__(cls, value)
        obj.squared_stderr = float(squared_stderr)
        obj.samples = int(samples)
        return obj


# Largest flattened moment tensor the interface admits, in entries.
DELTA_TENSOR_GUARD = 10 ** 6


_POWER_SUM_SPEC = {1: "ni->i", 2: "ni,nj->ij", 3: "ni,nj,nk->ijk"}


def delta_l_monte_carlo(x1, x2, l: int, samples: int, seed: SeedSpec) -> MonteCarloScalar:
    """Monte-Carlo estimate of ||Delta_l||^2, the squared norm of the
    difference between the degree-l rotation-averaged moment tensors of two
    clouds.

    The estimate is the squared norm of the empirical mean of
    T_i = vec(Q_i X1)^(x l) - vec(Q_i X2)^(x l) over Haar draws Q_i, so it is
    nonnegative and biased upward by exactly the variance of that mean; the
    bias IS the reported squared standard error, which is why a vanishing
    moment gap (always the case at l = 1) shows up as an estimate of the same
    order as ``squared_stderr``. The per-draw norms entering the variance
    collapse to powers of vector inner products and cost nothing extra.
    X2 is rotation-aligned to X1 first, a variance reduction that leaves the
    estimand unchanged because the rotation average is alignment-invariant.
    The same rotation drives both clouds in each draw, so identical clouds
    give exactly zero.
    """
    mat1, mat2 = _pair_dims(x1, x2)
    if l not in (1, 2, 3):
        raise ValueError(f"l must be 1, 2, or 3, got {l}")
    if samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")
    d, k = mat1.shape
    if float(d * k) ** l > DELTA_TENSOR_GUARD:
        raise ResourceLimitError(
            f"moment tensor would hold (d k)^l = {(d * k) ** l} entries, "
            f"over the {DELTA_TENSOR_GUARD} guard"
        )
    if not np.array_equal(mat1, mat2):
        # Alignment of an already-identical pair would inject rounding noise.
        mat2 = optimal_rotation(mat1, mat2).rotation @ mat2

    rng = seed.rng()
    spec = _POWER_SUM_SPEC[l]
    tensor_sum = None
    norm2 = []
    chunk = max(1, int(2_000_000 // max(d * k, 1)))
    done = 0
    while done < samples:
        c = min(chunk, samples - done)
        q = _haar_batch(rng, c, d)
        a = (q @ mat1).reshape(c, d * k)
        b = (q @ mat2).reshape(c, d * k)
        part = np.einsum(spec, *([a] * l)) - np.einsum(spec, *([b] * l))
        tensor_sum = part if tensor_sum is None else tensor_sum + part
        aa = np.einsum("ij,ij->i", a, a)
        ab = np.einsum("ij,ij->i", a, b)
        bb = np.einsum("ij,ij->i", b, b)
        norm2.append(aa ** l - 2.0 * ab ** l + bb ** l)
        done += c
    mean_tensor = tensor_sum / samples
    est = float(np.sum(mean_tensor * mean_tensor))
    norm2 = np.concatenate(norm2)
    if samples > 1:
        # Coordinate-summed variance of the mean tensor: (E||T||^2 - ||mean||^2)/(n-1).
        trace_cov = max(0.0, float(norm2.mean()) - est) * samples / (samples - 1)
        sq_se = trace_cov / samples
    else:
        sq_se = math.inf
    return MonteCarloScalar(est, sq_se, samples)


# --------------------------------------------------------------------------- #
# Bound audits
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class AuditRecord:
    """Outcome of one randomized bound audit.

    ``max_slack`` is the largest observed (actual - bound); a trial is a
    violation when its slack exceeds ``tolerance``. For probabilistic bounds
    ``tolerance`` is the allowed violation fraction instead, matching the
    bound's own failure probability.
    """

    audit_name: str
    trials: int
    violations: int
    max_slack: float
    tolerance: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "audit_name": self.audit_name,
            "trials": self.trials,
            "violations": self.violations,
            "max_slack": self.max_slack,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def _random_pair_dims(rng: np.random.Generator) -> tuple[int, int]:
    d = int(rng.integers(1, 4))
    k = int(rng.integers(d, d + 9))
    return d, k


def _full_rank_normal(rng: np.random.Generator, d: int, k: int) -> np.ndarray:
    # Gaussian matrices are full rank almost surely; loop for the measure-zero rest.
    while True:
        x = rng.standard_normal((d, k))
        s = np.linalg.svd(x, compute_uv=False)
        if s[-1] > 1e-8 * s[0]:
            return x


def audit_gram_inversion(trials: int, seed: SeedSpec,
                         bound_scale: float = 1.0) -> AuditRecord:
    """Random perturbed pairs inside the gap <= sigma_d^2/2 region: the
    Procrustes distance never exceeds gram_inversion_bound.

    ``bound_scale`` shrinks the bound for fault-injection tests; 1.0 is the
    honest audit.
    """
    rng = seed.rng()
    violations = 0
    max_slack = -math.inf
    for _ in range(trials):
        d = int(rng.integers(2, 4))
        k = int(rng.integers(d, d + 9))
        x1 = _full_rank_normal(rng, d, k)
        sigma_d = float(np.linalg.svd(x1, compute_uv=False)[-1])
        direction = rng.standard_normal((d, k))
        direction /= np.linalg.norm(direction)
        # First-order step toward a target gap anywhere in the region, then
        # shrink until the hypothesis actually holds.
        target = rng.uniform(0.05, 1.0) * sigma_d ** 2 / 2.0
        lin = lx_apply(x1, direction)
        step = target / max(float(np.linalg.norm(lin)), 1e-12)
        g1 = x1.T @ x1
        for _ in range(200):
            x2 = x1 + step * direction
            gap = float(np.linalg.norm(x2.T @ x2 - g1))
            if gap <= sigma_d ** 2 / 2.0:
                break
            step *= 0.5
        report = gram_inversion_bound(sigma_d, gap)
        slack = procrustes_distance(x1, x2) - bound_scale * report.value
        max_slack = max(max_slack, slack)
        if slack > AUDIT_SLACK_TOL:
            violations += 1
    return AuditRecord("gram_inversion_bound", trials, violations, max_slack,
                       AUDIT_SLACK_TOL, violations == 0)


def audit_tu_lipschitz(trials: int, seed: SeedSpec,
                       bound_scale: float = 1.0) -> AuditRecord:
    """Unconstrained random pairs: rho never exceeds L * gap / sigma_d."""
    rng = seed.rng()
    violations = 0
    max_slack = -math.inf
    for _ in range(trials):
        d, k = _random_pair_dims(rng)
        x1 = _full_rank_normal(rng, d, k)
        x2 = rng.uniform(0.0, 2.0) * rng.standard_normal((d, k))
        sigma_d = float(np.linalg.svd(x1, compute_uv=False)[-1])
        gap = float(np.linalg.norm(x2.T @ x2 - x1.T @ x1))
        report = tu_lipschitz_bound(sigma_d, gap)
        slack = procrustes_distance(x1, x2) - bound_scale * report.value
        max_slack = max(max_slack, slack)
        if slack > AUDIT_SLACK_TOL:
            violations += 1
    return AuditRecord("gram_gap_lipschitz", trials, violations, max_slack,
                       AUDIT_SLACK_TOL, violations == 0)


def audit_gram_diff(trials: int, seed: SeedSpec,
                    bound_scale: float = 1.0) -> AuditRecord:
    """Pairs with rho <= ||X1||_op/4: the Gram gap never exceeds
    (9/4) ||X1||_op rho."""
    rng = seed.rng()
    violations = 0
    max_slack = -math.inf
    for _ in range(trials):
        d, k = _random_pair_dims(rng)
        x1 = _full_rank_normal(rng, d, k)
        opnorm = float(np.linalg.norm(x1, 2))
        direction = rng.standard_normal((d, k))
        direction /= np.linalg.norm(direction)
        # ||X2 - X1|| <= op/4 forces rho <= op/4, so the hypothesis holds.
        x2 = x1 + rng.uniform(0.05, 1.0) * opnorm / 4.0 * direction
        rho = procrustes_distance(x1, x2)
        gap = float(np.linalg.norm(x2.T @ x2 - x1.T @ x1))
        report = gram_diff_upper_bound(opnorm, rho)
        slack = gap - bound_scale * report.value
        max_slack = max(max_slack, slack)
        if slack > AUDIT_SLACK_TOL:
            violations += 1
    return AuditRecord("gram_diff_bound", trials, violations, max_slack,
                       AUDIT_SLACK_TOL, violations == 0)


def audit_bound_ordering(seed: SeedSpec | None = None,
                         bound_scale: float = 1.0) -> AuditRecord:
    """Inside its applicability region the curved bound improves on the
    Lipschitz one. Checked on a deterministic 100x100 (sigma_d, gap) grid.

    The grid spans gap/(sigma_d^2/2) in [0.009, 0.9]: the two bounds provably
    cross at ~0.9175 of the boundary, so the comparison region stops short of
    the crossover (the ordering is a near-origin improvement statement, not a
    boundary one).
    """
    sigma_grid = np.geomspace(1e-2, 1e2, 100)
    fractions = np.linspace(0.009, 0.9, 100)
    violations = 0
    max_slack = -math.inf
    for sigma_d in sigma_grid:
        for frac in fractions:
            gap = frac * sigma_d ** 2 / 2.0
            curved = gram_inversion_bound(float(sigma_d), float(gap))
            linear = tu_lipschitz_bound(float(sigma_d), float(gap))
            slack = curved.value - bound_scale * linear.value
            max_slack = max(max_slack, slack)
            if slack > AUDIT_SLACK_TOL:
                violations += 1
    trials = len(sigma_grid) * len(fractions)
    return AuditRecord("bound_ordering", trials, violations, max_slack,
                       AUDIT_SLACK_TOL, violations == 0)


def audit_concentration(trials: int, seed: SeedSpec, delta: float = 0.1,
                        bound_scale: float = 1.0) -> AuditRecord:
    """Probabilistic audit of concentration_bound at (d=2, k=10) under two
    (sigma, N) settings: the violation fraction must stay at or below delta.
    """
    d, k = 2, 10
    rng = seed.rng()
    x = _full_rank_normal(rng, d, k)
    g = x.T @ x
    opnorm = float(np.linalg.norm(x, 2))
    violations = 0
    max_slack = -math.inf
    total = 0
    for sigma, n in ((1.0, 10 ** 3), (4.0, 10 ** 4)):
        bound = concentration_bound(d, k, n, sigma, opnorm, delta).value
        for _ in range(trials):
            m = _gram_mean_draw(x, sigma, n, rng)
            est = GramEstimate.from_symmetric(m - d * sigma ** 2 * np.eye(k))
            gtilde = psd_rank_d_project(est, d)
            slack = float(np.linalg.norm(gtilde - g)) - bound_scale * bound
            max_slack = max(max_slack, slack)
            if slack > 0.0:
                violations += 1
            total += 1
    return AuditRecord("debiased_projection_concentration", total, violations,
                       max_slack, delta, violations <= delta * total)
