//! Factor structure of an experiment: which fixed factors exist and which
//! level combination each condition label stands for.
//!
//! Text format, one declaration per line (`#` starts a comment):
//!
//! ```text
//! factor typicality typical atypical
//! factor quantifier most few
//! cell typical_most typicality=typical quantifier=most
//! interaction typicality quantifier
//! contrast typical_most typical_few
//! ```
//!
//! With a single factor and no `cell` lines every level is its own
//! condition. An empty design means one factor named `condition` whose
//! levels are the observed condition labels.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{CorpusError, CorpusErrorKind};

pub const DEFAULT_FACTOR: &str = "condition";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignFactor {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSpec {
    pub condition: String,
    /// `(factor, level)` for every declared factor, in factor order.
    pub levels: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DesignSpec {
    pub factors: Vec<DesignFactor>,
    pub cells: Vec<CellSpec>,
    /// Interaction terms to include in the full model.
    pub interactions: Vec<Vec<String>>,
    /// Extra condition pairs to test with a t contrast on the full model.
    pub forced_contrasts: Vec<(String, String)>,
}

fn syntax(line: usize, msg: String) -> CorpusError {
    CorpusError::new(line, CorpusErrorKind::Syntax(msg))
}

impl DesignSpec {
    /// Fill in the implicit parts: the default factor when none is declared,
    /// identity cells for a lone factor without `cell` lines.
    pub fn resolved<'a>(&self, observed: impl Iterator<Item = &'a str>) -> DesignSpec {
        let mut out = self.clone();
        if out.factors.is_empty() {
            out.factors.push(DesignFactor {
                name: DEFAULT_FACTOR.to_owned(),
                levels: observed.map(str::to_owned).collect(),
            });
        }
        if out.factors.len() == 1 && out.cells.is_empty() {
            let f = &out.factors[0];
            out.cells = f
                .levels
                .iter()
                .map(|l| CellSpec {
                    condition: l.clone(),
                    levels: alloc::vec![(f.name.clone(), l.clone())],
                })
                .collect();
        }
        out
    }

    pub fn cell(&self, condition: &str) -> Option<&CellSpec> {
        self.cells.iter().find(|c| c.condition == condition)
    }

    pub fn factor(&self, name: &str) -> Option<&DesignFactor> {
        self.factors.iter().find(|f| f.name == name)
    }

    /// Level of `factor` in the cell named `condition`.
    pub fn level_of(&self, condition: &str, factor: &str) -> Option<&str> {
        self.cell(condition)?
            .levels
            .iter()
            .find(|(f, _)| f == factor)
            .map(|(_, l)| l.as_str())
    }

    /// Condition labels and factor levels: everything a relation may name.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.cells.iter().map(|c| c.condition.clone()).collect();
        for f in &self.factors {
            for l in &f.levels {
                if !out.contains(l) {
                    out.push(l.clone());
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.factors {
            out.push_str(&format!("factor {} {}\n", f.name, f.levels.join(" ")));
        }
        for c in &self.cells {
            let lv: Vec<String> = c.levels.iter().map(|(f, l)| format!("{f}={l}")).collect();
            out.push_str(&format!("cell {} {}\n", c.condition, lv.join(" ")));
        }
        for i in &self.interactions {
            out.push_str(&format!("interaction {}\n", i.join(" ")));
        }
        for (a, b) in &self.forced_contrasts {
            out.push_str(&format!("contrast {a} {b}\n"));
        }
        out
    }
}

pub fn parse_design(text: &str) -> Result<DesignSpec, CorpusError> {
    let mut d = DesignSpec::default();
    let mut contrast_lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        let keyword = words.next().unwrap_or("");
        let args: Vec<&str> = words.collect();
        match keyword {
            "factor" => {
                let [name, levels @ ..] = args.as_slice() else {
                    return Err(syntax(line, "factor needs a name".into()));
                };
                if levels.len() < 2 {
                    return Err(syntax(line, format!("factor `{name}` needs at least two levels")));
                }
                if d.factor(name).is_some() {
                    return Err(syntax(line, format!("factor `{name}` declared twice")));
                }
                let mut lv: Vec<String> = Vec::new();
                for l in levels {
                    if lv.iter().any(|x| x == l) {
                        return Err(syntax(line, format!("level `{l}` repeated")));
                    }
                    lv.push((*l).to_owned());
                }
                d.factors.push(DesignFactor {
                    name: (*name).to_owned(),
                    levels: lv,
                });
            }
            "cell" => {
                let [cond, assigns @ ..] = args.as_slice() else {
                    return Err(syntax(line, "cell needs a condition label".into()));
                };
                if d.cell(cond).is_some() {
                    return Err(syntax(line, format!("cell `{cond}` declared twice")));
                }
                let mut levels = Vec::new();
                for f in &d.factors {
                    let found = assigns
                        .iter()
                        .filter_map(|a| a.split_once('='))
                        .find(|(name, _)| *name == f.name);
                    let Some((_, level)) = found else {
                        return Err(syntax(line, format!("cell `{cond}` gives no level for factor `{}`", f.name)));
                    };
                    if !f.levels.iter().any(|l| l == level) {
                        return Err(CorpusError::new(line, CorpusErrorKind::UnknownLabel(level.to_owned())));
                    }
                    levels.push((f.name.clone(), level.to_owned()));
                }
                for a in assigns {
                    match a.split_once('=') {
                        Some((name, _)) if d.factor(name).is_some() => {}
                        _ => return Err(syntax(line, format!("`{a}` is not `factor=level` for a declared factor"))),
                    }
                }
                if let Some(other) = d.cells.iter().find(|c| c.levels == levels) {
                    return Err(syntax(line, format!("cell `{cond}` repeats the levels of `{}`", other.condition)));
                }
                d.cells.push(CellSpec {
                    condition: (*cond).to_owned(),
                    levels,
                });
            }
            "interaction" => {
                if args.len() < 2 {
                    return Err(syntax(line, "interaction needs at least two factors".into()));
                }
                for a in &args {
                    if d.factor(a).is_none() {
                        return Err(syntax(line, format!("interaction names undeclared factor `{a}`")));
                    }
                }
                d.interactions.push(args.iter().map(|a| (*a).to_owned()).collect());
            }
            "contrast" => {
                let [a, b] = args.as_slice() else {
                    return Err(syntax(line, "contrast needs exactly two condition labels".into()));
                };
                d.forced_contrasts.push(((*a).to_owned(), (*b).to_owned()));
                contrast_lines.push(line);
            }
            other => return Err(syntax(line, format!("unknown declaration `{other}`"))),
        }
    }
    if !d.cells.is_empty() || d.factors.len() == 1 {
        let resolved = d.resolved(core::iter::empty());
        for ((a, b), &line) in d.forced_contrasts.iter().zip(&contrast_lines) {
            for l in [a, b] {
                if resolved.cell(l).is_none() {
                    return Err(CorpusError::new(line, CorpusErrorKind::UnknownLabel(l.clone())));
                }
            }
        }
    }
    if d.factors.len() > 1 && d.cells.is_empty() {
        return Err(syntax(0, "several factors declared but no cells map conditions onto them".into()));
    }
    Ok(d)
}
