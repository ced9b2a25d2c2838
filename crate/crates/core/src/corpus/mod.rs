//! Condition-tagged stimulus files, experiment designs and expected N400
//! patterns.

use alloc::string::String;
use core::fmt;

mod design;
mod pattern;
mod stimulus;

pub use design::{parse_design, CellSpec, DesignFactor, DesignSpec, DEFAULT_FACTOR};
pub use pattern::{parse_expected_pattern, ExpectedPattern, Relation, RelationKind};
pub use stimulus::{
    group_by_experiment, normalize_token, parse_stimulus_file, serialize_stimuli, validate_experiment,
    ExperimentSpec, StimulusItem, STIMULUS_HEADER,
};

/// A rejected input, with the 1-based line it came from (0 when the problem
/// is not tied to one line).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusError {
    pub line: usize,
    pub kind: CorpusErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusErrorKind {
    MissingHeader,
    ColumnCount { found: usize },
    EmptyField(&'static str),
    MissingTarget,
    AmbiguousTarget { markers: usize },
    StrayMarker(String),
    EmptyTarget,
    EmptySentence,
    DuplicateKey { first_line: usize },
    NoItems,
    MixedExperiments { expected: String, found: String },
    UncoveredCondition(String),
    EmptyCondition(String),
    Syntax(String),
    UnknownLabel(String),
    Contradiction { first_line: usize },
}

impl CorpusError {
    pub(crate) fn new(line: usize, kind: CorpusErrorKind) -> Self {
        Self { line, kind }
    }
}

impl fmt::Display for CorpusErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CorpusErrorKind::*;
        match self {
            MissingHeader => write!(f, "missing header row `{}`", STIMULUS_HEADER.replace('\t', "\\t")),
            ColumnCount { found } => write!(f, "expected 4 tab-separated columns, found {found}"),
            EmptyField(name) => write!(f, "empty {name} field"),
            MissingTarget => f.write_str("no *target* marker in sentence"),
            AmbiguousTarget { markers } => write!(f, "{markers} *target* markers in sentence, expected one"),
            StrayMarker(tok) => write!(f, "stray `*` in token `{tok}`"),
            EmptyTarget => f.write_str("target marker encloses no word"),
            EmptySentence => f.write_str("sentence has no tokens"),
            DuplicateKey { first_line } => {
                write!(f, "duplicate (experiment, item, condition) key, first seen on line {first_line}")
            }
            NoItems => f.write_str("experiment has no items"),
            MixedExperiments { expected, found } => {
                write!(f, "item belongs to experiment `{found}`, expected `{expected}`")
            }
            UncoveredCondition(c) => write!(f, "condition `{c}` is not covered by the declared design"),
            EmptyCondition(c) => write!(f, "condition `{c}` has no items"),
            Syntax(msg) => f.write_str(msg),
            UnknownLabel(l) => write!(f, "unknown condition label `{l}`"),
            Contradiction { first_line } => {
                write!(f, "relation contradicts the one on line {first_line}")
            }
        }
    }
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.kind)
        } else {
            fmt::Display::fmt(&self.kind, f)
        }
    }
}

impl core::error::Error for CorpusError {}
