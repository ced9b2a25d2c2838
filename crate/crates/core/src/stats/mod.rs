//! Linear mixed-effects models with random intercepts, fitted by REML or ML,
//! plus the tests built on them: likelihood-ratio tests with backward
//! selection, Type III Wald F tests and pairwise t contrasts with
//! Satterthwaite degrees of freedom.
//!
//! All fixed factors use sum-to-zero contrasts.

use alloc::string::String;
use alloc::vec::Vec;

pub mod data;
pub mod distributions;
pub mod inference;
pub mod linalg;
pub mod lmm;
pub mod selection;

pub use data::{Dataset, Factor, FactorInfo, ModelFormula, Term};
pub use distributions::{beta_inc, chi_square_sf, f_sf, gamma_q, ln_gamma, t_sf, t_two_sided_p};
pub use linalg::Matrix;
pub use inference::{
    cell_contrast, cell_contrast_vector, contrast_t_test, likelihood_ratio_test, pairwise_contrast,
    pairwise_contrast_in, satterthwaite_df, type3_anova, type3_term, wald_f_test, Satterthwaite,
    StatisticKind, TestResult,
};
pub use lmm::{fit_lmm, fit_lmm_with, ConvergenceReport, Criterion, FitOptions, FittedLmm, VarianceComponent};
pub use selection::{backward_model_selection, SelectionResult, TermTest};

/// Significance level used throughout the analysis.
pub const ALPHA: f64 = 0.05;

/// Variance ratios below this are treated as a boundary (singular) fit.
pub const SINGULAR_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("numerical routine did not converge: {0}")]
    NoConvergence(&'static str),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("unknown level `{level}`{}", factor.as_ref().map(|f| alloc::format!(" of factor `{f}`")).unwrap_or_default())]
    UnknownLevel { factor: Option<String>, level: String },
    #[error("term `{0}` is not part of the fitted model")]
    UnknownTerm(String),
    #[error("term `{0}` has no design columns")]
    EmptyTerm(String),
    #[error("grouping factor `{factor}` needs at least 2 levels, found {levels}")]
    TooFewLevels { factor: String, levels: usize },
    #[error("fixed-effect design is rank deficient; aliased columns: {}", aliased.join(", "))]
    RankDeficient { aliased: Vec<String> },
    #[error("optimizer did not converge after {iterations} iterations (last criterion {last_criterion}, gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        last_criterion: f64,
        gradient_norm: f64,
        trace: Vec<(usize, f64)>,
    },
    #[error("likelihood-ratio tests need ML fits; REML deviances are not comparable across fixed structures")]
    CriterionMismatch,
    #[error("models are not nested: {0}")]
    NotNested(String),
    #[error("Satterthwaite degrees of freedom need a REML fit")]
    NeedsReml,
    #[error("variance-parameter Hessian is not invertible (condition number {condition:e})")]
    NonInvertibleHessian { condition: f64 },
    #[error("contrast has length {got}, model has {expected} coefficients")]
    ContrastLength { expected: usize, got: usize },
}
