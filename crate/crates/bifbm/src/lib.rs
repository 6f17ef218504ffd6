//! Bifractional Brownian motion toolkit: closed-form covariance kernels,
//! Gram-matrix positive-semidefiniteness checks, exact Gaussian path
//! sampling with decomposition-based alternatives, quadrature
//! reconstructions of the kernel integral representations, and numerical
//! exploration of the (H, K) parameter plane.

// Validations use the `!(x > 0.0)` form on purpose: unlike `x <= 0.0`,
// it sends NaN down the rejection path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod export;
pub mod gram;
pub mod grid;
pub mod kernels;
pub mod oracles;
pub mod region;
pub mod sampler;

pub use analysis::{
    f_counterexample, find_negative_a, increment_limit_error, kernel_agreement, lamperti_cov,
    lamperti_stationarity, p_variation, quasihelix_report, self_similarity_deviation,
    variogram_holder_estimate, AnalysisError, DeviationReport, PVariationLevel, QuasihelixReport,
    LAMPERTI_TOL, QUASIHELIX_TOL, SELF_SIMILARITY_TOL,
};
pub use gram::{
    build_gram, cholesky_psd, default_jitter_schedule, min_eigenvalue, psd_check, CholeskyPsd,
    GramMatrix, LinalgError, PsdReport, Verdict, DEFAULT_PSD_REL_TOL,
};
pub use grid::{GridError, TimeGrid};
pub use kernels::{
    c_gamma_const, classify_params, increment_variance, KernelError, KernelSpec, ParamVerdict,
    RegionLabel,
};
pub use oracles::{
    c_gamma_integral, oracle_report, power_integral, q_gamma_integral, OracleReport, QuadError,
    QuadratureConfig,
};
pub use region::{
    cell_min_eigenvalue, critical_k, default_exploration_grid, hk_trend, scan_region,
    CriticalKEstimate, CriticalKOutcome, RegionError, RegionScan, Transition, TrendPoint,
};
pub use sampler::{
    empirical_covariance, sample_bifbm_sum, sample_brownian, sample_fbm_decomposed,
    sample_gaussian, SampleError, SamplePaths, SeedSpec,
};
