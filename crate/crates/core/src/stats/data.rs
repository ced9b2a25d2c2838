use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use super::linalg::{aliased_columns, Matrix};
use super::StatsError;

/// A categorical column: a level registry plus one level code per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    name: String,
    levels: Vec<String>,
    codes: Vec<usize>,
}

impl Factor {
    /// Levels are registered in order of first appearance.
    pub fn from_labels<S: AsRef<str>>(name: &str, labels: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                match levels.iter().position(|x| x == l) {
                    Some(i) => i,
                    None => {
                        levels.push(l.to_owned());
                        levels.len() - 1
                    }
                }
            })
            .collect();
        Self {
            name: name.to_owned(),
            levels,
            codes,
        }
    }

    /// Levels are registered in the given order; every label must be one of them.
    pub fn with_levels<L: AsRef<str>, S: AsRef<str>>(
        name: &str,
        levels: &[L],
        labels: &[S],
    ) -> Result<Self, StatsError> {
        let levels: Vec<String> = levels.iter().map(|l| l.as_ref().to_owned()).collect();
        let codes = labels
            .iter()
            .map(|l| {
                levels
                    .iter()
                    .position(|x| x == l.as_ref())
                    .ok_or_else(|| StatsError::UnknownLevel {
                        factor: Some(name.to_owned()),
                        level: l.as_ref().to_owned(),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            name: name.to_owned(),
            levels,
            codes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn level_of(&self, row: usize) -> &str {
        &self.levels[self.codes[row]]
    }

    /// Number of registered levels that actually occur in the rows.
    pub fn observed_levels(&self) -> usize {
        let mut seen = vec![false; self.levels.len()];
        for &c in &self.codes {
            seen[c] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }
}

/// Response values with fixed and grouping factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response: Vec<f64>,
    fixed: Vec<Factor>,
    grouping: Vec<Factor>,
}

impl Dataset {
    pub fn new(
        response: Vec<f64>,
        fixed: Vec<Factor>,
        grouping: Vec<Factor>,
    ) -> Result<Self, StatsError> {
        let n = response.len();
        if n < 2 {
            return Err(StatsError::InvalidData(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::InvalidData(format!(
                "response in row {i} is not finite"
            )));
        }
        let mut names: Vec<&str> = Vec::new();
        for f in fixed.iter().chain(&grouping) {
            if f.codes.len() != n {
                return Err(StatsError::InvalidData(format!(
                    "factor `{}` has {} rows, response has {n}",
                    f.name,
                    f.codes.len()
                )));
            }
            if names.contains(&f.name.as_str()) {
                return Err(StatsError::InvalidData(format!(
                    "factor `{}` declared twice",
                    f.name
                )));
            }
            names.push(&f.name);
        }
        Ok(Self {
            response,
            fixed,
            grouping,
        })
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn fixed_factors(&self) -> &[Factor] {
        &self.fixed
    }

    pub fn grouping_factors(&self) -> &[Factor] {
        &self.grouping
    }

    pub fn fixed_factor(&self, name: &str) -> Option<&Factor> {
        self.fixed.iter().find(|f| f.name == name)
    }

    pub fn grouping_factor(&self, name: &str) -> Option<&Factor> {
        self.grouping.iter().find(|f| f.name == name)
    }

    /// Same factors, new response vector.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self, StatsError> {
        Self::new(response, self.fixed.clone(), self.grouping.clone())
    }

    /// Order-sensitive hash of the full contents; used to check that two fits
    /// were made on the same data.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for v in &self.response {
            h.write(&v.to_bits().to_le_bytes());
        }
        for f in self.fixed.iter().chain(&self.grouping) {
            h.write(f.name.as_bytes());
            h.write(&[0xff]);
            for level in &f.levels {
                h.write(level.as_bytes());
                h.write(&[0xfe]);
            }
            for &c in &f.codes {
                h.write(&(c as u64).to_le_bytes());
            }
        }
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// A fixed-effect term: a main effect (one factor) or an interaction.
#[derive(Debug, Clone, Eq)]
pub struct Term {
    factors: Vec<String>,
}

impl Term {
    pub fn main(factor: &str) -> Self {
        Self {
            factors: vec![factor.to_owned()],
        }
    }

    pub fn interaction<S: AsRef<str>>(factors: &[S]) -> Self {
        Self {
            factors: factors.iter().map(|f| f.as_ref().to_owned()).collect(),
        }
    }

    pub fn factors(&self) -> &[String] {
        &self.factors
    }

    pub fn is_main_effect(&self) -> bool {
        self.factors.len() == 1
    }

    /// True when every factor of `self` also appears in `other` and `other` is larger.
    pub fn is_marginal_to(&self, other: &Term) -> bool {
        other.factors.len() > self.factors.len()
            && self.factors.iter().all(|f| other.factors.contains(f))
    }

    fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.factors.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.sorted() == other.sorted()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.factors.join(":"))
    }
}

/// Fixed terms plus grouping factors, each grouping factor contributing a
/// random intercept. The overall intercept is always present.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFormula {
    pub fixed: Vec<Term>,
    pub random: Vec<String>,
}

impl ModelFormula {
    pub fn new(fixed: Vec<Term>, random: Vec<String>) -> Self {
        Self { fixed, random }
    }

    pub fn main_effects<S: AsRef<str>>(factors: &[S], random: &[S]) -> Self {
        Self {
            fixed: factors.iter().map(|f| Term::main(f.as_ref())).collect(),
            random: random.iter().map(|r| r.as_ref().to_owned()).collect(),
        }
    }

    pub fn with_term(mut self, term: Term) -> Self {
        if !self.fixed.contains(&term) {
            self.fixed.push(term);
        }
        self
    }

    pub fn without_term(&self, term: &Term) -> Self {
        Self {
            fixed: self.fixed.iter().filter(|t| *t != term).cloned().collect(),
            random: self.random.clone(),
        }
    }

    pub fn has_term(&self, term: &Term) -> bool {
        self.fixed.contains(term)
    }

    /// Fixed terms of `self` are a subset of those of `other`, random terms equal.
    pub fn is_nested_in(&self, other: &ModelFormula) -> bool {
        self.fixed.iter().all(|t| other.fixed.contains(t)) && self.random == other.random
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("response ~ 1")?;
        for t in &self.fixed {
            write!(f, " + {t}")?;
        }
        for r in &self.random {
            write!(f, " + (1 | {r})")?;
        }
        Ok(())
    }
}

/// Name and level registry of a fixed factor used by a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorInfo {
    pub name: String,
    pub levels: Vec<String>,
}

impl FactorInfo {
    /// Sum-to-zero coding of `level`: unit vector for all but the last level,
    /// all `-1` for the last.
    pub fn coding(&self, level: usize) -> Vec<f64> {
        let k = self.levels.len() - 1;
        if level == k {
            vec![-1.0; k]
        } else {
            let mut v = vec![0.0; k];
            v[level] = 1.0;
            v
        }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

/// Fixed-effect design matrix with sum-to-zero contrasts.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub x: Matrix,
    pub labels: Vec<String>,
    pub term_columns: Vec<(Term, Range<usize>)>,
    pub factors: Vec<FactorInfo>,
}

/// Design row for a (partial) cell: factors missing from `cell` are averaged
/// over, which under sum-to-zero coding means their codes are zero.
pub(crate) fn design_row(
    factors: &[FactorInfo],
    term_columns: &[(Term, Range<usize>)],
    p: usize,
    cell: &[(usize, usize)],
) -> Vec<f64> {
    let mut row = vec![0.0; p];
    row[0] = 1.0;
    for (term, range) in term_columns {
        let mut block = vec![1.0];
        let mut complete = true;
        for name in term.factors() {
            let fi = factors.iter().position(|f| &f.name == name).expect("term factor registered");
            match cell.iter().find(|(f, _)| *f == fi) {
                Some(&(_, level)) => {
                    let code = factors[fi].coding(level);
                    block = kron(&block, &code);
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            row[range.clone()].copy_from_slice(&block);
        }
    }
    row
}

fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

pub(crate) fn build_design(data: &Dataset, formula: &ModelFormula) -> Result<Design, StatsError> {
    let mut factors: Vec<FactorInfo> = Vec::new();
    let mut factor_refs: Vec<&Factor> = Vec::new();
    for term in &formula.fixed {
        if term.factors().is_empty() {
            return Err(StatsError::EmptyTerm(term.to_string()));
        }
        for name in term.factors() {
            let f = data
                .fixed_factor(name)
                .ok_or_else(|| StatsError::UnknownFactor(name.clone()))?;
            if !factors.iter().any(|fi| &fi.name == name) {
                factors.push(FactorInfo {
                    name: name.clone(),
                    levels: f.levels().to_vec(),
                });
                factor_refs.push(f);
            }
        }
    }
    for fi in &factors {
        if fi.levels.len() < 2 {
            return Err(StatsError::EmptyTerm(fi.name.clone()));
        }
    }

    let mut labels = vec!["(Intercept)".to_string()];
    let mut term_columns = Vec::new();
    for term in &formula.fixed {
        let start = labels.len();
        let mut names = vec![String::new()];
        for (k, name) in term.factors().iter().enumerate() {
            let fi = factors.iter().find(|f| &f.name == name).expect("registered");
            let mut next = Vec::new();
            for prefix in &names {
                for level in &fi.levels[..fi.levels.len() - 1] {
                    let sep = if k == 0 { "" } else { ":" };
                    next.push(format!("{prefix}{sep}{name}[{level}]"));
                }
            }
            names = next;
        }
        labels.extend(names);
        term_columns.push((term.clone(), start..labels.len()));
    }

    let n = data.len();
    let p = labels.len();
    let mut x = Matrix::zeros(n, p);
    for row in 0..n {
        let cell: Vec<(usize, usize)> = factor_refs
            .iter()
            .enumerate()
            .map(|(fi, f)| (fi, f.codes()[row]))
            .collect();
        let r = design_row(&factors, &term_columns, p, &cell);
        x.row_mut(row).copy_from_slice(&r);
    }

    let aliased = aliased_columns(&x, 1e-9);
    if !aliased.is_empty() {
        return Err(StatsError::RankDeficient {
            aliased: aliased.into_iter().map(|j| labels[j].clone()).collect(),
        });
    }
    if n <= p {
        return Err(StatsError::InvalidData(format!(
            "{n} rows cannot support {p} fixed-effect columns"
        )));
    }
    Ok(Design {
        x,
        labels,
        term_columns,
        factors,
    })
}
