//! From surprisal records to significance relations between conditions:
//! backward selection over the configured factors, a REML refit of the
//! selected model, then pairwise t contrasts.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::records::SurprisalRecord;
use super::AnalysisError;
use crate::corpus::DesignSpec;
use crate::stats::{
    backward_model_selection, cell_contrast, fit_lmm, pairwise_contrast_in, type3_anova, Criterion, Dataset, Factor,
    FittedLmm, ModelFormula, Term, TestResult,
};

/// Grouping factor carrying the random intercept.
pub const ITEM_FACTOR: &str = "item";

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub design: DesignSpec,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: crate::stats::ALPHA,
            design: DesignSpec::default(),
        }
    }
}

/// How a pair's test was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    /// Marginal contrast of a factor kept by selection, on the REML refit of
    /// the selected model.
    Selected,
    /// The factor was dropped by selection; the pair is non-significant by
    /// construction and carries no test.
    Dropped,
    /// Configured cell contrast, tested on the REML fit of the full model.
    Forced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub a: String,
    pub b: String,
    /// Factor whose levels `a` and `b` are; `None` for forced cell contrasts.
    pub factor: Option<String>,
    /// Fitted `mean(a) - mean(b)` in the response unit.
    pub estimate: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub source: PairSource,
    pub test: Option<TestResult>,
}

/// Observed relation of an ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observed {
    /// First is significantly lower.
    Lower,
    /// First is significantly higher.
    Higher,
    NoDifference,
}

impl Observed {
    pub fn flipped(self) -> Self {
        match self {
            Observed::Lower => Observed::Higher,
            Observed::Higher => Observed::Lower,
            Observed::NoDifference => Observed::NoDifference,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Observed::Lower => "LOWER",
            Observed::Higher => "HIGHER",
            Observed::NoDifference => "NO_DIFFERENCE",
        }
    }
}

impl PairResult {
    pub fn observed(&self) -> Observed {
        match (self.significant, self.estimate) {
            (true, Some(e)) if e < 0.0 => Observed::Lower,
            (true, Some(e)) if e > 0.0 => Observed::Higher,
            _ => Observed::NoDifference,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorResult {
    pub term: String,
    pub retained: bool,
    pub lrt: TestResult,
    pub dropped_at_step: Option<usize>,
    pub protected: bool,
}

#[derive(Debug, Clone)]
pub struct DerivedPattern {
    pub experiment: String,
    pub alpha: f64,
    pub pairs: Vec<PairResult>,
    pub predictors: Vec<PredictorResult>,
    pub full_formula: ModelFormula,
    pub selected_formula: ModelFormula,
    /// REML fit of the selected model.
    pub selected_fit: FittedLmm,
    /// Type III tests on the selected model.
    pub type3: Vec<TestResult>,
    /// Condition labels and factor levels present among analyzed records.
    pub labels: Vec<String>,
    pub n_analyzed: usize,
    pub n_excluded: usize,
    pub notes: Vec<String>,
}

impl DerivedPattern {
    /// Observed relation of `a` versus `b`, if that pair was tested.
    pub fn relation(&self, a: &str, b: &str) -> Option<(Observed, &PairResult)> {
        self.pairs.iter().find_map(|p| {
            if p.a == a && p.b == b {
                Some((p.observed(), p))
            } else if p.a == b && p.b == a {
                Some((p.observed().flipped(), p))
            } else {
                None
            }
        })
    }
}

/// Fit the configured model to the analyzed records of one experiment and
/// derive pairwise relations.
pub fn derive_pattern(records: &[SurprisalRecord], config: &AnalysisConfig) -> Result<DerivedPattern, AnalysisError> {
    let experiment = records
        .first()
        .map(|r| r.experiment.clone())
        .ok_or_else(|| AnalysisError::InsufficientData("no records".into()))?;
    if let Some(other) = records.iter().find(|r| r.experiment != experiment) {
        return Err(AnalysisError::InsufficientData(format!(
            "records mix experiments `{experiment}` and `{}`",
            other.experiment
        )));
    }
    let analyzed: Vec<&SurprisalRecord> = records.iter().filter(|r| r.is_analyzed()).collect();
    let n_excluded = records.len() - analyzed.len();

    let mut conditions: Vec<(String, usize)> = Vec::new();
    for r in &analyzed {
        match conditions.iter_mut().find(|(c, _)| c == &r.condition) {
            Some((_, n)) => *n += 1,
            None => conditions.push((r.condition.clone(), 1)),
        }
    }
    let populated = conditions.iter().filter(|(_, n)| *n >= 2).count();
    if populated < 2 {
        return Err(AnalysisError::InsufficientData(format!(
            "{experiment}: need at least 2 conditions with 2 analyzed items each"
        )));
    }
    let design = config.design.resolved(conditions.iter().map(|(c, _)| c.as_str()));
    let mut notes = Vec::new();

    // fixed factors, restricted to levels that survived exclusion
    let mut fixed = Vec::new();
    let mut labels: Vec<String> = conditions.iter().map(|(c, _)| c.clone()).collect();
    for f in &design.factors {
        let mut row_levels = Vec::with_capacity(analyzed.len());
        for r in &analyzed {
            let level = design.level_of(&r.condition, &f.name).ok_or_else(|| {
                AnalysisError::InsufficientData(format!(
                    "{experiment}: condition `{}` is not covered by the design",
                    r.condition
                ))
            })?;
            row_levels.push(level);
        }
        let present: Vec<&str> = f
            .levels
            .iter()
            .map(String::as_str)
            .filter(|l| row_levels.contains(l))
            .collect();
        for l in &present {
            if !labels.iter().any(|x| x == l) {
                labels.push((*l).to_owned());
            }
        }
        if present.len() < 2 {
            notes.push(format!("factor `{}` has fewer than 2 analyzed levels and is left out", f.name));
            continue;
        }
        fixed.push(Factor::with_levels(&f.name, &present, &row_levels)?);
    }
    if fixed.is_empty() {
        return Err(AnalysisError::InsufficientData(format!(
            "{experiment}: no factor has 2 analyzed levels"
        )));
    }

    let items: Vec<&str> = analyzed.iter().map(|r| r.item.as_str()).collect();
    let item_factor = Factor::from_labels(ITEM_FACTOR, &items);
    let repeated = item_factor.levels().len() < items.len();
    let random: Vec<String> = if repeated && item_factor.levels().len() >= 2 {
        alloc::vec![ITEM_FACTOR.to_owned()]
    } else {
        notes.push("no item occurs in more than one analyzed condition; random intercept for item omitted".into());
        Vec::new()
    };
    let response: Vec<f64> = analyzed.iter().map(|r| r.surprisal.expect("analyzed")).collect();
    let data = Dataset::new(response, fixed.clone(), alloc::vec![item_factor])?;

    let factor_names: Vec<String> = fixed.iter().map(|f| f.name().to_owned()).collect();
    let mut terms: Vec<Term> = factor_names.iter().map(|n| Term::main(n)).collect();
    for inter in &design.interactions {
        if inter.iter().all(|f| factor_names.contains(f)) {
            terms.push(Term::interaction(inter));
        } else {
            notes.push(format!("interaction `{}` left out: a factor is missing", inter.join(":")));
        }
    }
    let full_formula = ModelFormula::new(terms, random);

    let selection = backward_model_selection(&data, &full_formula, config.alpha)?;
    let selected_formula = selection.formula.clone();
    let selected_fit = fit_lmm(&data, &selected_formula, Criterion::Reml)?;
    if selected_fit.is_singular() {
        notes.push("selected model is singular: item variance estimated at 0".into());
    }

    let mut pairs = Vec::new();
    for f in &fixed {
        let levels = f.levels();
        let kept = selected_formula.has_term(&Term::main(f.name()));
        for i in 0..levels.len() {
            for j in i + 1..levels.len() {
                let (a, b) = (&levels[i], &levels[j]);
                if kept {
                    let t = pairwise_contrast_in(&selected_fit, f.name(), a, b)?;
                    pairs.push(PairResult {
                        a: a.clone(),
                        b: b.clone(),
                        factor: Some(f.name().to_owned()),
                        estimate: t.estimate,
                        p_value: Some(t.p_value),
                        significant: t.p_value < config.alpha,
                        source: PairSource::Selected,
                        test: Some(t),
                    });
                } else {
                    pairs.push(PairResult {
                        a: a.clone(),
                        b: b.clone(),
                        factor: Some(f.name().to_owned()),
                        estimate: None,
                        p_value: None,
                        significant: false,
                        source: PairSource::Dropped,
                        test: None,
                    });
                }
            }
        }
    }

    if !design.forced_contrasts.is_empty() {
        let full_fit = fit_lmm(&data, &full_formula, Criterion::Reml)?;
        for (a, b) in &design.forced_contrasts {
            let present = |c: &str| conditions.iter().any(|(x, _)| x == c);
            if !present(a) || !present(b) {
                notes.push(format!("forced contrast {a} vs {b} skipped: a condition has no analyzed items"));
                continue;
            }
            let cell = |c: &str| -> Vec<(&str, &str)> {
                fixed
                    .iter()
                    .map(|f| (f.name(), design.level_of(c, f.name()).expect("covered")))
                    .collect()
            };
            let mut t = cell_contrast(&full_fit, &cell(a), &cell(b))?;
            t.label = format!("{a} - {b}");
            pairs.retain(|p| !((p.a == *a && p.b == *b) || (p.a == *b && p.b == *a)));
            pairs.push(PairResult {
                a: a.clone(),
                b: b.clone(),
                factor: None,
                estimate: t.estimate,
                p_value: Some(t.p_value),
                significant: t.p_value < config.alpha,
                source: PairSource::Forced,
                test: Some(t),
            });
        }
    }

    let type3 = if selected_formula.fixed.is_empty() {
        Vec::new()
    } else {
        type3_anova(&selected_fit)?
    };

    let predictors = selection
        .tests
        .iter()
        .map(|t| PredictorResult {
            term: format!("{}", t.term),
            retained: t.retained,
            lrt: t.result.clone(),
            dropped_at_step: t.dropped_at_step,
            protected: t.protected,
        })
        .collect();

    Ok(DerivedPattern {
        experiment,
        alpha: config.alpha,
        pairs,
        predictors,
        full_formula,
        selected_formula,
        selected_fit,
        type3,
        labels,
        n_analyzed: analyzed.len(),
        n_excluded,
        notes,
    })
}
