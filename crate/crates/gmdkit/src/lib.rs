//! Structured low-rank matrix decomposition toolkit.
//!
//! The core object is the generalized least squares matrix decomposition:
//! the best rank-K approximation of a centered data matrix under the
//! transposable quadratic norm induced by a pair of symmetric positive
//! semi-definite operators (Q on rows, R on columns). On top of it the
//! crate provides generalized principal components, two-way penalized
//! (sparse / smooth) factorization, BIC-based penalty selection, and a
//! simulation harness for matrix-variate data with Kronecker-structured
//! noise.

pub mod data;
pub mod error;
pub mod gmd;
pub mod gpca;
pub mod gpmf;
pub mod io;
pub mod linalg;
pub mod quadop;
pub mod select;
pub mod sim;
pub mod sparse;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use gmd::{gmd_oracle, gmd_power, reconstruct, GmdFactors, GmdOptions, WhitenedForm};
pub use gpca::{cumulative_variance_regularized, gpc_scores, variance_explained, VarianceReport};
pub use gpmf::{
    gpmf, gpmf_single_factor, omega_factorize, omega_norm_regression, rnorm_lasso, soft_threshold,
    GpmfOptions, GpmfResult, LassoOptions, LassoSolution, OmegaFactorization, OmegaRegOptions,
    OmegaRegSolution, PenaltyKind, PenaltySpec, SingleFactor,
};
pub use quadop::{
    build_ar_precision, build_chain_laplacian, build_grid_laplacian, build_kernel_smoother,
    build_second_difference_gram, q_norm_vec, qr_norm, ArMode, OperatorKind, QuadraticOperator,
};
pub use select::{
    bic_score, default_lambda_grid, gpmf_auto, lasso_df, lasso_lambda_max, select_penalty,
    BicReport, FactorSelection, LambdaChoice, SelectStrategy, SidePenalty,
};
pub use sim::{
    generate, msse, roc_curve, run_experiment, spatio_temporal_preset, support, support_metrics,
    Experiment, ExperimentReport, RecoveryMetrics, ReportRow, SimulationSpec,
};
