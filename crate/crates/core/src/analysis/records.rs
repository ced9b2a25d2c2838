use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::corpus::StimulusItem;
use crate::lm::{surprisal, tokenize, LstmParams, Vocabulary, UNK_ID};

/// Fewer analyzed targets than this triggers a coverage warning.
pub const COVERAGE_FLOOR: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    OovTarget,
    TokenizationFailure,
    ModelFailure,
}

impl ExclusionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExclusionReason::OovTarget => "oov_target",
            ExclusionReason::TokenizationFailure => "tokenization_failure",
            ExclusionReason::ModelFailure => "model_failure",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExclusionReason {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "oov_target" => Ok(ExclusionReason::OovTarget),
            "tokenization_failure" => Ok(ExclusionReason::TokenizationFailure),
            "model_failure" => Ok(ExclusionReason::ModelFailure),
            _ => Err(()),
        }
    }
}

/// Target-word surprisal of one stimulus, or the reason it has none.
#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalRecord {
    pub experiment: String,
    pub item: String,
    pub condition: String,
    pub target: String,
    /// Bits; `None` exactly when `excluded` is set.
    pub surprisal: Option<f64>,
    pub excluded: Option<ExclusionReason>,
}

impl SurprisalRecord {
    pub fn is_analyzed(&self) -> bool {
        self.surprisal.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionCoverage {
    pub condition: String,
    pub analyzed: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Coverage {
    /// In first-appearance order of the conditions.
    pub per_condition: Vec<ConditionCoverage>,
    pub analyzed: usize,
    pub excluded: usize,
    pub warnings: Vec<String>,
}

/// Analyzed and excluded counts per condition.
pub fn coverage(records: &[SurprisalRecord]) -> Coverage {
    let mut cov = Coverage::default();
    for r in records {
        let idx = match cov.per_condition.iter().position(|c| c.condition == r.condition) {
            Some(i) => i,
            None => {
                cov.per_condition.push(ConditionCoverage {
                    condition: r.condition.clone(),
                    analyzed: 0,
                    excluded: 0,
                });
                cov.per_condition.len() - 1
            }
        };
        if r.is_analyzed() {
            cov.per_condition[idx].analyzed += 1;
            cov.analyzed += 1;
        } else {
            cov.per_condition[idx].excluded += 1;
            cov.excluded += 1;
        }
    }
    if cov.analyzed < COVERAGE_FLOOR {
        cov.warnings.push(format!(
            "only {} target words analyzed (fewer than {COVERAGE_FLOOR})",
            cov.analyzed
        ));
    }
    cov
}

fn score(params: &LstmParams, vocab: &Vocabulary, item: &StimulusItem) -> Result<f64, ExclusionReason> {
    if item.target_index >= item.tokens.len()
        || item.tokens.iter().any(|t| t.is_empty() || t.contains(char::is_whitespace))
    {
        return Err(ExclusionReason::TokenizationFailure);
    }
    let (ids, _) = tokenize(&item.tokens, vocab);
    if ids[item.target_index + 1] == UNK_ID {
        return Err(ExclusionReason::OovTarget);
    }
    if params.dims.vocab_size != vocab.len() {
        return Err(ExclusionReason::ModelFailure);
    }
    match surprisal(params, &ids, item.target_index) {
        Ok(s) if s.is_finite() && s >= 0.0 => Ok(s),
        _ => Err(ExclusionReason::ModelFailure),
    }
}

/// One record per item, in input order. Failures become exclusions.
pub fn compute_surprisals(
    params: &LstmParams,
    vocab: &Vocabulary,
    items: &[StimulusItem],
) -> (Vec<SurprisalRecord>, Coverage) {
    let records: Vec<SurprisalRecord> = items
        .iter()
        .map(|it| {
            let result = score(params, vocab, it);
            SurprisalRecord {
                experiment: it.experiment.clone(),
                item: it.item.clone(),
                condition: it.condition.clone(),
                target: it.tokens.get(it.target_index).cloned().unwrap_or_default(),
                surprisal: result.ok(),
                excluded: result.err(),
            }
        })
        .collect();
    let mut cov = coverage(&records);
    if params.dims.vocab_size != vocab.len() {
        cov.warnings.push(format!(
            "model expects {} words but the vocabulary has {}",
            params.dims.vocab_size,
            vocab.len()
        ));
    }
    (records, cov)
}
