//! Expected N400 amplitude relations between conditions, one per line:
//! `experiment: A LOWER B` or `experiment: A NO_DIFFERENCE B`. Lines starting
//! with `#` are collected into the provenance note.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{CorpusError, CorpusErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    /// The first condition elicited a significantly smaller N400.
    Lower,
    NoDifference,
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationKind::Lower => "LOWER",
            RelationKind::NoDifference => "NO_DIFFERENCE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub a: String,
    pub b: String,
    pub kind: RelationKind,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.a, self.kind, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedPattern {
    pub experiment: String,
    pub relations: Vec<Relation>,
    pub provenance_note: String,
}

impl ExpectedPattern {
    /// Reject relations naming labels outside `known`.
    pub fn check_labels<S: AsRef<str>>(&self, known: &[S]) -> Result<(), CorpusError> {
        for r in &self.relations {
            for l in [&r.a, &r.b] {
                if !known.iter().any(|k| k.as_ref() == l) {
                    return Err(CorpusError::new(0, CorpusErrorKind::UnknownLabel(l.clone())));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in self.provenance_note.lines() {
            out.push_str(&format!("# {l}\n"));
        }
        for r in &self.relations {
            out.push_str(&format!("{}: {r}\n", self.experiment));
        }
        out
    }
}

fn same_pair(x: &Relation, y: &Relation) -> bool {
    (x.a == y.a && x.b == y.b) || (x.a == y.b && x.b == y.a)
}

fn contradicts(x: &Relation, y: &Relation) -> bool {
    if !same_pair(x, y) {
        return false;
    }
    match (x.kind, y.kind) {
        (RelationKind::Lower, RelationKind::Lower) => x.a != y.a,
        (RelationKind::NoDifference, RelationKind::NoDifference) => false,
        _ => true,
    }
}

pub fn parse_expected_pattern(text: &str) -> Result<ExpectedPattern, CorpusError> {
    let mut experiment: Option<String> = None;
    let mut relations: Vec<(usize, Relation)> = Vec::new();
    let mut notes: Vec<&str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        if let Some(note) = content.strip_prefix('#') {
            notes.push(note.trim());
            continue;
        }
        let err = |m: String| CorpusError::new(line, CorpusErrorKind::Syntax(m));
        let (exp, rest) = content
            .split_once(':')
            .ok_or_else(|| err("expected `experiment: A RELATION B`".into()))?;
        let exp = exp.trim();
        if exp.is_empty() || exp.contains(char::is_whitespace) {
            return Err(err(format!("bad experiment id `{exp}`")));
        }
        match &experiment {
            None => experiment = Some(exp.to_owned()),
            Some(e) if e != exp => {
                return Err(CorpusError::new(
                    line,
                    CorpusErrorKind::MixedExperiments {
                        expected: e.clone(),
                        found: exp.to_owned(),
                    },
                ))
            }
            Some(_) => {}
        }
        let words: Vec<&str> = rest.split_whitespace().collect();
        let [a, kind, b] = words.as_slice() else {
            return Err(err("expected `experiment: A RELATION B`".into()));
        };
        let kind = match *kind {
            "LOWER" => RelationKind::Lower,
            "NO_DIFFERENCE" => RelationKind::NoDifference,
            other => return Err(err(format!("unknown relation `{other}`"))),
        };
        if a == b {
            return Err(err(format!("relation compares `{a}` with itself")));
        }
        let rel = Relation {
            a: (*a).to_owned(),
            b: (*b).to_owned(),
            kind,
        };
        if let Some((first_line, _)) = relations.iter().find(|(_, r)| contradicts(r, &rel)) {
            return Err(CorpusError::new(
                line,
                CorpusErrorKind::Contradiction { first_line: *first_line },
            ));
        }
        relations.push((line, rel));
    }
    let experiment = experiment.ok_or_else(|| CorpusError::new(0, CorpusErrorKind::Syntax("no relations".into())))?;
    Ok(ExpectedPattern {
        experiment,
        relations: relations.into_iter().map(|(_, r)| r).collect(),
        provenance_note: notes.join("\n"),
    })
}
