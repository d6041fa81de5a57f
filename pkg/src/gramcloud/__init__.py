"""Estimation of a point cloud, up to orthogonal transformations, from noisy
observations under unknown independent rotations.

The estimator averages observation Gram matrices (a complete degree-two
invariant of the rotation action), removes the additive noise shift, and
factors the top-d eigenspace back into a cloud representative.
"""

from .analysis import (
    AuditRecord,
    BoundReport,
    MonteCarloScalar,
    OperatorSpectrum,
    concentration_bound,
    delta_l_bound,
    delta_l_monte_carlo,
    expected_gram_mse,
    gram_diff_upper_bound,
    gram_inversion_bound,
    gram_mean_covariance,
    horizontal_project,
    lx_apply,
    lx_spectrum,
    oracle_mle_mse,
    sign_test_error,
    tu_lipschitz_bound,
)
from .errors import (
    ConfigError,
    DegenerateCloudError,
    DimensionError,
    NotPSDError,
    NumericalFailure,
    ResourceLimitError,
)
from .estimator import (
    EstimateReport,
    GramEstimate,
    debias_gram,
    estimate_sigma,
    estimate_sigma_centered,
    estimate_unknown_sigma,
    estimate_with_sigma,
    factor_gram,
    gram_mean,
    gram_mean_streamed,
    psd_rank_d_project,
)
from .experiments import (
    GridResult,
    MseResult,
    SweepConfig,
    derive_seed,
    run_mse_validation,
    run_phase_transition,
    run_sigma_benchmark,
    run_stability_audit,
)
from .metric import (
    Alignment,
    canonical_representative,
    optimal_rotation,
    procrustes_distance,
    relative_error,
)
from .model import (
    Cloud,
    ObservationBatch,
    SeedSpec,
    absorb64,
    format_float,
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

__version__ = "1.0.0"

__all__ = [
    "Alignment",
    "AuditRecord",
    "BoundReport",
    "Cloud",
    "ConfigError",
    "DegenerateCloudError",
    "DimensionError",
    "EstimateReport",
    "GramEstimate",
    "GridResult",
    "MonteCarloScalar",
    "MseResult",
    "NotPSDError",
    "NumericalFailure",
    "ObservationBatch",
    "OperatorSpectrum",
    "ResourceLimitError",
    "SeedSpec",
    "SweepConfig",
    "absorb64",
    "canonical_representative",
    "concentration_bound",
    "debias_gram",
    "delta_l_bound",
    "delta_l_monte_carlo",
    "derive_seed",
    "estimate_sigma",
    "estimate_sigma_centered",
    "estimate_unknown_sigma",
    "estimate_with_sigma",
    "expected_gram_mse",
    "factor_gram",
    "format_float",
    "gram_diff_upper_bound",
    "gram_inversion_bound",
    "gram_mean",
    "gram_mean_covariance",
    "gram_mean_streamed",
    "horizontal_project",
    "lx_apply",
    "lx_spectrum",
    "mix64",
    "optimal_rotation",
    "oracle_mle_mse",
    "procrustes_distance",
    "psd_rank_d_project",
    "read_batch_meta",
    "read_cloud_csv",
    "regenerate_batch",
    "relative_error",
    "run_mse_validation",
    "run_phase_transition",
    "run_sigma_benchmark",
    "run_stability_audit",
    "sample_cloud",
    "sample_gram_mean",
    "sample_haar_orthogonal",
    "sample_observations",
    "sign_test_error",
    "tu_lipschitz_bound",
    "write_batch_meta",
    "write_cloud_csv",
]
