use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::design::DesignSpec;
use super::{CorpusError, CorpusErrorKind};

pub const STIMULUS_HEADER: &str = "experiment\titem\tcondition\tsentence";

/// One sentence with a marked target word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusItem {
    pub experiment: String,
    pub item: String,
    pub condition: String,
    /// Normalized, lower-cased words.
    pub tokens: Vec<String>,
    pub target_index: usize,
}

impl StimulusItem {
    pub fn target(&self) -> &str {
        &self.tokens[self.target_index]
    }

    /// Sentence text with the target re-marked, as written by
    /// [`serialize_stimuli`].
    pub fn marked_sentence(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            if i == self.target_index {
                out.push('*');
                out.push_str(t);
                out.push('*');
            } else {
                out.push_str(t);
            }
        }
        out
    }
}

fn is_punct(c: char) -> bool {
    (c.is_ascii_punctuation() && c != '*')
        || matches!(
            c,
            '\u{201C}' | '\u{201D}' | '\u{2018}' | '\u{2019}' | '\u{00AB}' | '\u{00BB}' | '\u{2014}' | '\u{2013}'
                | '\u{2026}' | '\u{00BF}' | '\u{00A1}'
        )
}

/// Strip leading and trailing punctuation and lower-case. Returns an empty
/// string for pure-punctuation tokens.
pub fn normalize_token(raw: &str) -> String {
    raw.trim_matches(is_punct).to_lowercase()
}

fn parse_sentence(sentence: &str, line: usize) -> Result<(Vec<String>, usize), CorpusError> {
    let mut tokens = Vec::new();
    let mut targets = Vec::new();
    for raw in sentence.split_whitespace() {
        let edge = raw.trim_matches(is_punct);
        let (word, marked) = if edge.len() >= 2 && edge.starts_with('*') && edge.ends_with('*') {
            (&edge[1..edge.len() - 1], true)
        } else {
            (edge, false)
        };
        if word.contains('*') {
            return Err(CorpusError::new(line, CorpusErrorKind::StrayMarker(raw.to_owned())));
        }
        let norm = normalize_token(word);
        if norm.is_empty() {
            if marked {
                return Err(CorpusError::new(line, CorpusErrorKind::EmptyTarget));
            }
            continue;
        }
        if marked {
            targets.push(tokens.len());
        }
        tokens.push(norm);
    }
    if tokens.is_empty() {
        return Err(CorpusError::new(line, CorpusErrorKind::EmptySentence));
    }
    match targets.as_slice() {
        [t] => Ok((tokens, *t)),
        [] => Err(CorpusError::new(line, CorpusErrorKind::MissingTarget)),
        many => Err(CorpusError::new(
            line,
            CorpusErrorKind::AmbiguousTarget { markers: many.len() },
        )),
    }
}

/// Parse a tab-separated stimulus file.
pub fn parse_stimulus_file(text: &str) -> Result<Vec<StimulusItem>, CorpusError> {
    let mut items = Vec::new();
    let mut seen: BTreeMap<(String, String, String), usize> = BTreeMap::new();
    let mut header_seen = false;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if content.trim().is_empty() || content.trim_start().starts_with('#') {
            continue;
        }
        if !header_seen {
            if content.trim_end() != STIMULUS_HEADER {
                return Err(CorpusError::new(line, CorpusErrorKind::MissingHeader));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = content.split('\t').collect();
        if cols.len() != 4 {
            return Err(CorpusError::new(line, CorpusErrorKind::ColumnCount { found: cols.len() }));
        }
        let names = ["experiment", "item", "condition"];
        for (c, name) in cols.iter().zip(names) {
            let c = c.trim();
            if c.is_empty() {
                return Err(CorpusError::new(line, CorpusErrorKind::EmptyField(name)));
            }
            if c.contains(char::is_whitespace) {
                return Err(CorpusError::new(
                    line,
                    CorpusErrorKind::Syntax(format!("{name} `{c}` contains whitespace")),
                ));
            }
        }
        let (tokens, target_index) = parse_sentence(cols[3], line)?;
        let key = (
            cols[0].trim().to_owned(),
            cols[1].trim().to_owned(),
            cols[2].trim().to_owned(),
        );
        if let Some(&first_line) = seen.get(&key) {
            return Err(CorpusError::new(line, CorpusErrorKind::DuplicateKey { first_line }));
        }
        seen.insert(key.clone(), line);
        items.push(StimulusItem {
            experiment: key.0,
            item: key.1,
            condition: key.2,
            tokens,
            target_index,
        });
    }
    if !header_seen {
        return Err(CorpusError::new(0, CorpusErrorKind::MissingHeader));
    }
    Ok(items)
}

/// Write items in the stimulus file format; parsing the result yields the
/// same items.
pub fn serialize_stimuli(items: &[StimulusItem]) -> String {
    let mut out = String::from(STIMULUS_HEADER);
    out.push('\n');
    for it in items {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            it.experiment,
            it.item,
            it.condition,
            it.marked_sentence()
        ));
    }
    out
}

/// Split items by experiment, keeping first-appearance order.
pub fn group_by_experiment(items: &[StimulusItem]) -> Vec<(String, Vec<StimulusItem>)> {
    let mut groups: Vec<(String, Vec<StimulusItem>)> = Vec::new();
    for it in items {
        match groups.iter_mut().find(|(e, _)| e == &it.experiment) {
            Some((_, v)) => v.push(it.clone()),
            None => groups.push((it.experiment.clone(), alloc::vec![it.clone()])),
        }
    }
    groups
}

/// A validated experiment: its items, the conditions they use and the design
/// those conditions map onto.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: String,
    /// Observed condition labels in first-appearance order.
    pub conditions: Vec<String>,
    pub items: Vec<StimulusItem>,
    pub design: DesignSpec,
    /// Item count per condition, in `conditions` order.
    pub condition_counts: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

impl ExperimentSpec {
    pub fn count(&self, condition: &str) -> usize {
        self.condition_counts
            .iter()
            .find(|(c, _)| c == condition)
            .map_or(0, |(_, n)| *n)
    }

    pub fn to_stimulus_text(&self) -> String {
        serialize_stimuli(&self.items)
    }
}

/// Check that `items` form one experiment whose conditions are all covered
/// by `design`. Unbalanced condition counts produce a warning only.
pub fn validate_experiment(items: &[StimulusItem], design: &DesignSpec) -> Result<ExperimentSpec, CorpusError> {
    let first = items.first().ok_or(CorpusError::new(0, CorpusErrorKind::NoItems))?;
    let experiment = first.experiment.clone();
    let mut counts: Vec<(String, usize)> = Vec::new();
    for it in items {
        if it.experiment != experiment {
            return Err(CorpusError::new(
                0,
                CorpusErrorKind::MixedExperiments {
                    expected: experiment,
                    found: it.experiment.clone(),
                },
            ));
        }
        match counts.iter_mut().find(|(c, _)| c == &it.condition) {
            Some((_, n)) => *n += 1,
            None => counts.push((it.condition.clone(), 1)),
        }
    }
    let design = design.resolved(counts.iter().map(|(c, _)| c.as_str()));
    for (c, _) in &counts {
        if design.cell(c).is_none() {
            return Err(CorpusError::new(0, CorpusErrorKind::UncoveredCondition(c.clone())));
        }
    }
    for cell in &design.cells {
        if !counts.iter().any(|(c, _)| c == &cell.condition) {
            return Err(CorpusError::new(0, CorpusErrorKind::EmptyCondition(cell.condition.clone())));
        }
    }
    let mut warnings = Vec::new();
    let min = counts.iter().map(|(_, n)| *n).min().unwrap_or(0);
    let max = counts.iter().map(|(_, n)| *n).max().unwrap_or(0);
    if min != max {
        let listing: Vec<String> = counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
        warnings.push(format!("unbalanced condition counts: {}", listing.join(", ")));
    }
    Ok(ExperimentSpec {
        experiment,
        conditions: counts.iter().map(|(c, _)| c.clone()).collect(),
        items: items.to_vec(),
        design,
        condition_counts: counts,
        warnings,
    })
}
