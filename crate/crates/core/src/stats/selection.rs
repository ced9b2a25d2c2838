//! Backward elimination of fixed terms by likelihood-ratio tests on ML fits.

use alloc::vec::Vec;

use super::data::{Dataset, ModelFormula, Term};
use super::inference::{likelihood_ratio_test, TestResult};
use super::lmm::{fit_lmm, Criterion, FittedLmm};
use super::StatsError;

#[derive(Debug, Clone, PartialEq)]
pub struct TermTest {
    pub term: Term,
    /// LRT of removing the term: at its drop step for dropped terms, against
    /// the final model for retained ones.
    pub result: TestResult,
    pub retained: bool,
    pub dropped_at_step: Option<usize>,
    /// The term was never eligible for removal because a higher-order term
    /// containing it stayed in the model.
    pub protected: bool,
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub formula: ModelFormula,
    /// One entry per candidate term, in declaration order.
    pub tests: Vec<TermTest>,
    pub steps: usize,
    /// ML fit of the selected model.
    pub fit: FittedLmm,
}

impl SelectionResult {
    pub fn test_for(&self, term: &Term) -> Option<&TermTest> {
        self.tests.iter().find(|t| &t.term == term)
    }
}

fn droppable(formula: &ModelFormula, term: &Term) -> bool {
    !formula
        .fixed
        .iter()
        .any(|other| other != term && term.is_marginal_to(other))
}

/// Starting from `initial`, repeatedly drop the removable term with the
/// largest LRT p-value among those with `p >= alpha`, refitting after each
/// drop. A term is removable when no remaining higher-order term contains it.
/// Equal p-values drop the later-declared term.
pub fn backward_model_selection(
    data: &Dataset,
    initial: &ModelFormula,
    alpha: f64,
) -> Result<SelectionResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Domain("alpha must lie in (0, 1)"));
    }
    let mut current = initial.clone();
    let mut full = fit_lmm(data, &current, Criterion::Ml)?;
    let mut dropped: Vec<TermTest> = Vec::new();
    let mut step = 0;

    loop {
        let mut best: Option<(Term, TestResult, FittedLmm)> = None;
        for term in current.fixed.clone() {
            if !droppable(&current, &term) {
                continue;
            }
            let reduced_formula = current.without_term(&term);
            let reduced = fit_lmm(data, &reduced_formula, Criterion::Ml)?;
            let mut result = likelihood_ratio_test(&full, &reduced)?;
            result.label = alloc::format!("{term}");
            if result.p_value < alpha {
                continue;
            }
            let better = match &best {
                None => true,
                Some((_, b, _)) => result.p_value >= b.p_value,
            };
            if better {
                best = Some((term, result, reduced));
            }
        }
        let Some((term, result, reduced)) = best else { break };
        step += 1;
        current = current.without_term(&term);
        full = reduced;
        dropped.push(TermTest {
            term,
            result,
            retained: false,
            dropped_at_step: Some(step),
            protected: false,
        });
    }

    let mut tests = Vec::with_capacity(initial.fixed.len());
    for term in &initial.fixed {
        if let Some(d) = dropped.iter().find(|d| &d.term == term) {
            tests.push(d.clone());
            continue;
        }
        let reduced = fit_lmm(data, &current.without_term(term), Criterion::Ml)?;
        let mut result = likelihood_ratio_test(&full, &reduced)?;
        result.label = alloc::format!("{term}");
        tests.push(TermTest {
            term: term.clone(),
            result,
            retained: true,
            dropped_at_step: None,
            protected: !droppable(&current, term),
        });
    }
    Ok(SelectionResult {
        formula: current,
        tests,
        steps: step,
        fit: full,
    })
}
