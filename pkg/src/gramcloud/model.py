"""Ground-truth synthesis: clouds, uniform rotations, observation batches.

The observation model is ``Y_i = Q_i X + sigma * E_i`` where ``X`` is a
d-by-k cloud, each ``Q_i`` is an independent uniform (Haar) draw from the
orthogonal group O(d), and ``E_i`` has i.i.d. standard normal entries.

All sampling is deterministic given a :class:`SeedSpec`, so observation
batches are regenerated from small metadata records instead of being stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloudError, DimensionError

# Full-rank tolerance: a cloud is accepted iff sigma_d > RANK_TOL * sigma_1.
RANK_TOL = 1e-10

# Draws that fail the rank check are redrawn at most this many times.
MAX_RESAMPLE_ATTEMPTS = 8

# Observations are generated in fixed-size blocks so that streaming consumers
# and materialized batches see the identical random stream.
OBSERVATION_BLOCK = 8192

_MASK64 = (1 << 64) - 1


# --------------------------------------------------------------------------- #
# Seeding
# --------------------------------------------------------------------------- #

def mix64(z: int) -> int:
    """One round of a 64-bit avalanche hash (splitmix64 finalizer).

    Pure integer arithmetic, so the mapping is identical on every platform.
    Each input bit flips each output bit with probability ~1/2.
    """
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def absorb64(state: int, word: int) -> int:
    """Fold one 64-bit word into a running hash state."""
    return mix64(state ^ (word & _MASK64))


@dataclass(frozen=True)
class SeedSpec:
    """A (master_seed, stream_index) pair naming one reproducible RNG stream.

    Distinct pairs are hashed to distinct 64-bit keys (injective in practice),
    and distinct keys give statistically independent PCG64 streams.
    """

    master_seed: int
    stream_index: int = 0

    def key(self) -> int:
        state = mix64(self.master_seed & _MASK64)
        return absorb64(state, self.stream_index)

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.key())))

    def child(self, stream_index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, stream_index)


# --------------------------------------------------------------------------- #
# Domain types
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Cloud:
    """A real d-by-k point cloud, one point per column.

    The estimand of the whole package is the equivalence class of ``entries``
    under left multiplication by orthogonal matrices, so any two clouds with
    equal Gram matrices are "the same" cloud.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 2:
            raise DimensionError(f"cloud entries must be a 2-D matrix, got ndim={arr.ndim}")
        d, k = arr.shape
        if d < 1 or k < d:
            raise DimensionError(f"cloud requires k >= d >= 1, got d={d}, k={k}")
        if not np.all(np.isfinite(arr)):
            raise DimensionError("cloud entries must be finite")
        object.__setattr__(self, "entries", arr)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def k(self) -> int:
        return self.entries.shape[1]

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def operator_norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2))

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.entries, compute_uv=False)

    def sigma_min(self) -> float:
        """Smallest singular value sigma_d; positive iff the cloud is full rank."""
        return float(self.singular_values()[-1])

    def gram(self) -> np.ndarray:
        return self.entries.T @ self.entries

    def is_full_rank(self, tol: float = RANK_TOL) -> bool:
        s = self.singular_values()
        return bool(s[-1] > tol * s[0])

    def require_full_rank(self, tol: float = RANK_TOL) -> "Cloud":
        if not self.is_full_rank(tol):
            raise DegenerateCloudError(
                f"cloud is rank deficient: sigma_d <= {tol:g} * sigma_1"
            )
        return self


def as_matrix(x) -> np.ndarray:
    """Accept either a Cloud or a bare matrix and return the ndarray."""
    if isinstance(x, Cloud):
        return x.entries
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True)
class ObservationBatch:
    """N observations of one cloud under the rotation-plus-noise model.

    ``seed`` records the derived 64-bit stream key, which together with
    (d, k, n, sigma_true) and the cloud is enough to regenerate the batch.
    """

    observations: np.ndarray  # (n, d, k)
    sigma_true: float
    d: int
    k: int
    n: int
    seed: int

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim != 3 or obs.shape != (self.n, self.d, self.k):
            raise DimensionError(
                f"observations must have shape (n, d, k)=({self.n},{self.d},{self.k}), "
                f"got {obs.shape}"
            )
        if self.n < 1:
            raise DimensionError("a batch holds at least one observation")
        object.__setattr__(self, "observations", obs)


# --------------------------------------------------------------------------- #
# Samplers
# --------------------------------------------------------------------------- #

def _haar_batch(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """n independent Haar-uniform d-by-d orthogonal matrices, shape (n, d, d).

    QR of a standard Gaussian matrix, with the signs of the R diagonal folded
    into Q so the factorization is the unique one with nonnegative R diagonal.
    That correction is what makes the distribution exactly Haar.
    """
    z = rng.standard_normal((n, d, d))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.einsum("nii->ni", r))
    signs[signs == 0] = 1.0
    return q * signs[:, None, :]


def sample_haar_orthogonal(d: int, seed: SeedSpec) -> np.ndarray:
    """One Haar-uniform orthogonal matrix; both determinant signs occur."""
    if d < 1:
        raise DimensionError(f"dimension must be positive, got d={d}")
    return _haar_batch(seed.rng(), 1, d)[0]


def sample_cloud(d: int, k: int, seed: SeedSpec, unit_frobenius: bool = False) -> Cloud:
    """Cloud with i.i.d. standard normal entries, optionally scaled to ||X|| = 1.

    Gaussian draws are almost surely full rank; the bounded resampling loop
    exists only to reject pathological seeds, and failing it is an error.
    """
    if d < 1 or k < d:
        raise DimensionError(f"cloud requires k >= d >= 1, got d={d}, k={k}")
    rng = seed.rng()
    for _ in range(MAX_RESAMPLE_ATTEMPTS):
        entries = rng.standard_normal((d, k))
        if unit_frobenius:
            entries = entries / np.linalg.norm(entries)
        cloud = Cloud(entries)
        if cloud.is_full_rank():
            return cloud
    raise DegenerateCloudError(
        f"no full-rank draw in {MAX_RESAMPLE_ATTEMPTS} attempts (d={d}, k={k})"
    )


def _observation_blocks(x: np.ndarray, sigma: float, n: int,
                        rng: np.random.Generator, block: int = OBSERVATION_BLOCK):
    """Yield observation arrays of shape (b, d, k) in a fixed generation order."""
    d, k = x.shape
    done = 0
    while done < n:
        b = min(block, n - done)
        y = _haar_batch(rng, b, d) @ x
        if sigma > 0.0:
            y += sigma * rng.standard_normal((b, d, k))
        yield y
        done += b


def sample_observations(x, sigma: float, n: int, seed: SeedSpec) -> ObservationBatch:
    """Draw a batch Y_i = Q_i X + sigma * E_i, i = 1..n.

    Deterministic given (X, sigma, n, seed): the same call always returns a
    bit-identical batch.
    """
    mat = as_matrix(x)
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if n < 1:
        raise ValueError(f"batch size must be positive, got n={n}")
    d, k = mat.shape
    obs = np.concatenate(list(_observation_blocks(mat, sigma, n, seed.rng())), axis=0)
    return ObservationBatch(observations=obs, sigma_true=float(sigma),
                            d=d, k=k, n=n, seed=seed.key())


def _wishart_identity(k: int, dof: int, rng: np.random.Generator) -> np.ndarray:
    """Sample W ~ Wishart_k(dof, I) without forming a dof-by-k Gaussian.

    For dof >= k the Bartlett construction (lower-triangular factor with
    chi-square diagonal) costs O(k^2) draws regardless of dof; smaller dof
    gives a singular Wishart, sampled directly as B^T B.
    """
    if dof >= k:
        ell = np.zeros((k, k))
        low = np.tril_indices(k, -1)
        ell[low] = rng.standard_normal(len(low[0]))
        ell[np.diag_indices(k)] = np.sqrt(rng.chisquare(dof - np.arange(k)))
        return ell @ ell.T
    b = rng.standard_normal((dof, k))
    return b.T @ b


def sample_gram_mean(x, sigma: float, n: int, seed: SeedSpec) -> np.ndarray:
    """Sample the averaged observation Gram matrix (1/n) sum_i Y_i^T Y_i directly.

    Each observation's Gram matrix is rotation-free: Y_i^T Y_i equals
    (X + sigma * Q_i^T E_i)^T (X + sigma * Q_i^T E_i), and Q_i^T E_i is again
    a standard Gaussian matrix, independent across i. Stacking the n matrices
    X + sigma * E_i vertically and splitting the Gaussian noise into its
    component along the d-dimensional column space of the stacked signal and
    the orthogonal rest gives, exactly in distribution,

        (1/n) [ (sqrt(n) X + sigma E1)^T (sqrt(n) X + sigma E1) + sigma^2 W ]

    with E1 a single d-by-k standard Gaussian and W ~ Wishart_k(d*n - d, I).
    The Bartlett construction samples W in O(k^2) time independent of n, so
    this sampler reaches batch sizes that are far beyond materializing
    observations. Equality in law is validated against direct batch
    simulation in the test suite.
    """
    mat = as_matrix(x)
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if n < 1:
        raise ValueError(f"batch size must be positive, got n={n}")
    return _gram_mean_draw(mat, sigma, n, seed.rng())


def _gram_mean_draw(mat: np.ndarray, sigma: float, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """One draw from the exact Gram-mean law, consuming the given generator."""
    d, k = mat.shape
    a = np.sqrt(float(n)) * mat
    if sigma > 0.0:
        a = a + sigma * rng.standard_normal((d, k))
    m = a.T @ a
    dof = d * n - d
    if sigma > 0.0 and dof > 0:
        m += sigma ** 2 * _wishart_identity(k, dof, rng)
    m /= float(n)
    return (m + m.T) / 2.0


# --------------------------------------------------------------------------- #
# Serialization
# --------------------------------------------------------------------------- #

def format_float(value: float) -> str:
    """17 significant digits: enough to round-trip any float64 exactly."""
    return format(float(value), ".17g")


def write_cloud_csv(x, path) -> None:
    """d rows by k comma-separated columns, 17 significant digits, no header."""
    mat = as_matrix(x)
    lines = [",".join(format_float(v) for v in row) for row in mat]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cloud_csv(path) -> Cloud:
    rows = []
    with open(path, "r", newline="") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise DimensionError(f"no rows in cloud file {path!s}")
    return Cloud(np.asarray(rows, dtype=float))


def write_batch_meta(path, *, d: int, k: int, sigma: float, n: int,
                     master_seed: int, cloud_csv: str, unit_frobenius: bool) -> None:
    """Metadata sufficient to regenerate a batch (the batch itself is never stored)."""
    record = {
        "d": d,
        "k": k,
        "sigma": sigma,
        "n": n,
        "seed": master_seed,
        "cloud_csv": cloud_csv,
        "unit_frobenius": unit_frobenius,
    }
    with open(path, "w", newline="") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_batch_meta(path) -> dict:
    with open(path, "r") as fh:
        return json.load(fh)


# Stream indices used by the CLI when deriving per-purpose streams from one
# master seed. Constants so that written metadata stays regenerable.
CLOUD_STREAM = 0
BATCH_STREAM = 1


def regenerate_batch(meta: dict, cloud: Cloud) -> ObservationBatch:
    """Rebuild the exact batch a metadata record describes."""
    seed = SeedSpec(int(meta["seed"]), BATCH_STREAM)
    return sample_observations(cloud, float(meta["sigma"]), int(meta["n"]), seed)
