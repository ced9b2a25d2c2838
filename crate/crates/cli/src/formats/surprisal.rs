//! Long-format surprisal table:
//! `experiment,item,condition,target,surprisal,excluded,reason`.
//!
//! Written with `# key=value` provenance lines before the header; reading
//! accepts files with or without them, so tables produced elsewhere can be
//! analyzed directly. `excluded` is `true`/`false` (also `1`/`0`), and
//! `surprisal` is empty for excluded rows.

use std::io::Read;

use anyhow::{anyhow, bail, Context};
use n400_core::analysis::{ExclusionReason, SurprisalRecord};

pub const SURPRISAL_FORMAT_VERSION: u32 = 1;
pub const SURPRISAL_COLUMNS: [&str; 7] = ["experiment", "item", "condition", "target", "surprisal", "excluded", "reason"];

pub fn write_surprisals(records: &[SurprisalRecord], header: &str) -> String {
    let mut out = String::from(header);
    out.push_str(&SURPRISAL_COLUMNS.join(","));
    out.push('\n');
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in records {
        let s = r.surprisal.map(|v| format!("{v:?}")).unwrap_or_default();
        let reason = r.excluded.map(|e| e.as_str()).unwrap_or("");
        w.write_record([
            r.experiment.as_str(),
            &r.item,
            &r.condition,
            &r.target,
            &s,
            if r.excluded.is_some() { "true" } else { "false" },
            reason,
        ])
        .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"));
    out
}

pub fn read_surprisals(text: &str) -> anyhow::Result<Vec<SurprisalRecord>> {
    read_surprisals_from(text.as_bytes())
}

pub fn read_surprisals_from<R: Read>(input: R) -> anyhow::Result<Vec<SurprisalRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().context("reading surprisal header")?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required: Vec<usize> = SURPRISAL_COLUMNS[..5]
        .iter()
        .map(|c| col(c).ok_or_else(|| anyhow!("surprisal file lacks the `{c}` column")))
        .collect::<Result<_, _>>()?;
    let (excluded_col, reason_col) = (col("excluded"), col("reason"));
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.with_context(|| format!("surprisal row {}", i + 1))?;
        let line = row.position().map_or(i + 2, |p| p.line() as usize);
        let field = |k: usize| row.get(k).unwrap_or("");
        let excluded = match excluded_col.map(field).unwrap_or("") {
            "" => None,
            "true" | "1" | "TRUE" | "True" => Some(true),
            "false" | "0" | "FALSE" | "False" => Some(false),
            other => bail!("line {line}: `excluded` must be true or false, found `{other}`"),
        };
        let reason = reason_col.map(field).unwrap_or("");
        let value = field(required[4]);
        let surprisal = if value.is_empty() {
            None
        } else {
            let v: f64 = value
                .parse()
                .map_err(|_| anyhow!("line {line}: surprisal `{value}` is not a number"))?;
            if !v.is_finite() || v < 0.0 {
                bail!("line {line}: surprisal must be finite and non-negative, found {v}");
            }
            Some(v)
        };
        let excluded_reason = match (excluded, surprisal) {
            (Some(true), _) | (None, None) => Some(if reason.is_empty() {
                ExclusionReason::ModelFailure
            } else {
                reason
                    .parse::<ExclusionReason>()
                    .map_err(|_| anyhow!("line {line}: unknown exclusion reason `{reason}`"))?
            }),
            (Some(false), None) => bail!("line {line}: row is not excluded but has no surprisal"),
            (_, Some(_)) => None,
        };
        let surprisal = if excluded_reason.is_some() { None } else { surprisal };
        for k in &required[..3] {
            if field(*k).is_empty() {
                bail!("line {line}: empty `{}` field", headers.get(*k).unwrap_or("?"));
            }
        }
        out.push(SurprisalRecord {
            experiment: field(required[0]).to_owned(),
            item: field(required[1]).to_owned(),
            condition: field(required[2]).to_owned(),
            target: field(required[3]).to_owned(),
            surprisal,
            excluded: excluded_reason,
        });
    }
    Ok(out)
}
