//! Empirical-likelihood detection of coefficient changes in AR(p) series.
//!
//! The test compares, at every admissible split `k`, the empirical likelihood
//! of one AR model for the whole series against separate models before and
//! after `k`. The trimmed maximum of the resulting ratio statistic is
//! calibrated against a Gumbel limit or by a residual bootstrap, and binary
//! segmentation turns the single-change test into a multiple-change
//! detector.

pub mod el_solver;
pub mod error;
pub mod estimating;
pub mod exec;
pub mod scan;
pub mod segmentation;
pub mod simulate;

pub use el_solver::{
    h0_lagrangian, h0_saddle_point, h0_scores, implied_weights, neg2_log_lambda, segment_el, solve_lambda, z_h0, z_h1,
    ChangeModel, DualSolution, ElSolution, HypothesisFit, SolverSettings, SplitFit,
};
pub use error::{ElError, Result};
pub use estimating::{g_frame, ols_fit, residuals, ArFit, ArSpec, ChangeAlternative, GFrame, TimeSeries};
pub use scan::{
    bootstrap_pvalue, default_trim, gumbel_quantile, normalize, p_value_asymptotic, raw_threshold, trimmed_scan,
    u_of_n, BootstrapResult, CalibrationConstants, ScanOptions, ScanResult,
};
pub use segmentation::{binary_segment, NodeDecision, SegmentOptions, SegmentationResult};
pub use simulate::{
    empirical_critval_study, gen_ar_change, power_study, sample_noise, CritvalStudy, NoiseModel, PowerCell,
    PowerStudyConfig, PowerTable, DEFAULT_BURN_IN,
};
