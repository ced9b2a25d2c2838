use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::derive::{DerivedPattern, Observed};
use crate::corpus::{ExpectedPattern, Relation, RelationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Match,
    Mismatch,
    /// A condition of the relation has no analyzed items, or the pair was
    /// never tested. Left out of the classification.
    Unevaluable,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Match => "MATCH",
            Verdict::Mismatch => "MISMATCH",
            Verdict::Unevaluable => "UNEVALUABLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    FullMatch,
    Partial,
    Mismatch,
    /// No relation could be evaluated.
    Unevaluable,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::FullMatch => "FULL_MATCH",
            Classification::Partial => "PARTIAL",
            Classification::Mismatch => "MISMATCH",
            Classification::Unevaluable => "UNEVALUABLE",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationVerdict {
    pub expected: Relation,
    pub observed: Option<Observed>,
    pub estimate: Option<f64>,
    pub p_value: Option<f64>,
    pub verdict: Verdict,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternComparison {
    pub experiment: String,
    pub relations: Vec<RelationVerdict>,
    pub classification: Classification,
    pub n_items_analyzed: usize,
    pub n_excluded: usize,
}

impl PatternComparison {
    pub fn unevaluable(&self) -> usize {
        self.relations.iter().filter(|r| r.verdict == Verdict::Unevaluable).count()
    }
}

/// FULL_MATCH iff every evaluable verdict matches, MISMATCH iff none does,
/// PARTIAL otherwise.
pub fn classify(verdicts: &[Verdict]) -> Classification {
    let evaluable = verdicts.iter().filter(|v| **v != Verdict::Unevaluable).count();
    let matched = verdicts.iter().filter(|v| **v == Verdict::Match).count();
    if evaluable == 0 {
        Classification::Unevaluable
    } else if matched == evaluable {
        Classification::FullMatch
    } else if matched == 0 {
        Classification::Mismatch
    } else {
        Classification::Partial
    }
}

pub fn compare_patterns(derived: &DerivedPattern, expected: &ExpectedPattern) -> PatternComparison {
    let relations: Vec<RelationVerdict> = expected
        .relations
        .iter()
        .map(|rel| {
            let missing = [&rel.a, &rel.b]
                .into_iter()
                .find(|l| !derived.labels.iter().any(|x| x == *l));
            if let Some(l) = missing {
                return RelationVerdict {
                    expected: rel.clone(),
                    observed: None,
                    estimate: None,
                    p_value: None,
                    verdict: Verdict::Unevaluable,
                    note: Some(alloc::format!("`{l}` has no analyzed items")),
                };
            }
            match derived.relation(&rel.a, &rel.b) {
                None => RelationVerdict {
                    expected: rel.clone(),
                    observed: None,
                    estimate: None,
                    p_value: None,
                    verdict: Verdict::Unevaluable,
                    note: Some("pair was not tested".into()),
                },
                Some((obs, pair)) => {
                    let ok = match rel.kind {
                        RelationKind::Lower => obs == Observed::Lower,
                        RelationKind::NoDifference => obs == Observed::NoDifference,
                    };
                    let flip = pair.a != rel.a;
                    RelationVerdict {
                        expected: rel.clone(),
                        observed: Some(obs),
                        estimate: pair.estimate.map(|e| if flip { -e } else { e }),
                        p_value: pair.p_value,
                        verdict: if ok { Verdict::Match } else { Verdict::Mismatch },
                        note: None,
                    }
                }
            }
        })
        .collect();
    let verdicts: Vec<Verdict> = relations.iter().map(|r| r.verdict).collect();
    PatternComparison {
        experiment: derived.experiment.clone(),
        classification: classify(&verdicts),
        relations,
        n_items_analyzed: derived.n_analyzed,
        n_excluded: derived.n_excluded,
    }
}
