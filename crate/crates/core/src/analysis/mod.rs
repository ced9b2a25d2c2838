//! Scoring stimuli with a language model, deriving significance relations
//! between conditions, and checking them against expected N400 patterns.

mod compare;
mod derive;
mod records;

pub use compare::{classify, compare_patterns, Classification, PatternComparison, RelationVerdict, Verdict};
pub use derive::{
    derive_pattern, AnalysisConfig, DerivedPattern, Observed, PairResult, PairSource, PredictorResult, ITEM_FACTOR,
};
pub use records::{
    compute_surprisals, coverage, ConditionCoverage, Coverage, ExclusionReason, SurprisalRecord, COVERAGE_FLOOR,
};

use crate::stats::StatsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(alloc::string::String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
