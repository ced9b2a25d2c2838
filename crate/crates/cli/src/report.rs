//! Report bundle: `report.json`, `report.txt` and `fits/<experiment>.txt`.
//!
//! Floating-point values are rounded to 8 significant digits so the bundle
//! does not depend on last-bit differences between platforms.

use std::fmt::Write as _;
use std::path::Path;

use n400_core::analysis::{Classification, Coverage, DerivedPattern, PairSource, PatternComparison, Verdict};
use n400_core::stats::{StatisticKind, TestResult};
use serde::Serialize;

use crate::io::StagedWrites;

pub const REPORT_FORMAT_VERSION: u32 = 1;

pub const FIT_LIMITATIONS: &str = "\
# Models use a random intercept for items only. Random slopes are not
# fitted, so by-item variation in condition effects is absorbed into the
# residual and tests may be anti-conservative when such variation exists.
";

pub struct ComparisonOutcome {
    pub variant: Option<String>,
    pub file: String,
    pub result: Result<PatternComparison, String>,
}

pub struct ExperimentOutcome {
    pub experiment: String,
    pub coverage: Coverage,
    pub derived: Result<DerivedPattern, String>,
    pub comparisons: Vec<ComparisonOutcome>,
}

impl ExperimentOutcome {
    /// Classification per pattern variant; UNEVALUABLE when there is no
    /// pattern or the comparison failed.
    pub fn classifications(&self) -> Vec<(Option<&str>, Classification)> {
        if self.comparisons.is_empty() {
            return vec![(None, Classification::Unevaluable)];
        }
        self.comparisons
            .iter()
            .map(|c| {
                let class = c.result.as_ref().map_or(Classification::Unevaluable, |r| r.classification);
                (c.variant.as_deref(), class)
            })
            .collect()
    }

    pub fn is_evaluable(&self) -> bool {
        self.classifications().iter().any(|(_, c)| *c != Classification::Unevaluable)
    }
}

pub struct ReportContext {
    pub config_hash: String,
    pub seed: u64,
    pub alpha: f64,
    pub surprisal_sha256: String,
}

pub fn round8(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.7e}").parse().expect("formatted float")
}

fn r8(x: f64) -> Option<f64> {
    x.is_finite().then(|| round8(x))
}

fn r8o(x: Option<f64>) -> Option<f64> {
    x.and_then(r8)
}

fn num(x: Option<f64>) -> String {
    match r8o(x) {
        Some(v) => format!("{v}"),
        None => "-".to_owned(),
    }
}

fn pval(p: Option<f64>) -> String {
    match r8o(p) {
        Some(v) if v < 1e-4 => format!("{v:.2e}"),
        Some(v) => format!("{v:.4}"),
        None => "-".to_owned(),
    }
}

#[derive(Serialize)]
struct TestJson {
    label: String,
    kind: &'static str,
    statistic: Option<f64>,
    df: Option<f64>,
    df_denominator: Option<f64>,
    p_value: Option<f64>,
    estimate: Option<f64>,
    std_error: Option<f64>,
}

fn kind_name(k: StatisticKind) -> &'static str {
    match k {
        StatisticKind::ChiSquare => "chi_square",
        StatisticKind::T => "t",
        StatisticKind::F => "F",
    }
}

fn test_json(t: &TestResult) -> TestJson {
    TestJson {
        label: t.label.clone(),
        kind: kind_name(t.kind),
        statistic: r8(t.statistic),
        df: r8(t.df),
        df_denominator: r8o(t.df_denominator),
        p_value: r8(t.p_value),
        estimate: r8o(t.estimate),
        std_error: r8o(t.std_error),
    }
}

#[derive(Serialize)]
struct ConditionJson {
    condition: String,
    analyzed: usize,
    excluded: usize,
}

#[derive(Serialize)]
struct CoverageJson {
    analyzed: usize,
    excluded: usize,
    per_condition: Vec<ConditionJson>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct ComponentJson {
    group: String,
    levels: usize,
    variance: Option<f64>,
    singular: bool,
}

#[derive(Serialize)]
struct CoefficientJson {
    label: String,
    estimate: Option<f64>,
    std_error: Option<f64>,
}

#[derive(Serialize)]
struct ModelJson {
    full_formula: String,
    selected_formula: String,
    reml_criterion: Option<f64>,
    converged: bool,
    singular: bool,
    variance_components: Vec<ComponentJson>,
    residual_variance: Option<f64>,
    coefficients: Vec<CoefficientJson>,
    type3: Vec<TestJson>,
}

#[derive(Serialize)]
struct PredictorJson {
    term: String,
    retained: bool,
    protected: bool,
    dropped_at_step: Option<usize>,
    lrt: TestJson,
}

#[derive(Serialize)]
struct PairJson {
    a: String,
    b: String,
    factor: Option<String>,
    source: &'static str,
    observed: &'static str,
    significant: bool,
    estimate: Option<f64>,
    std_error: Option<f64>,
    t: Option<f64>,
    df: Option<f64>,
    p_value: Option<f64>,
}

#[derive(Serialize)]
struct RelationJson {
    expected: String,
    observed: Option<&'static str>,
    estimate: Option<f64>,
    p_value: Option<f64>,
    verdict: &'static str,
    note: Option<String>,
}

#[derive(Serialize)]
struct ComparisonJson {
    variant: Option<String>,
    pattern_file: String,
    classification: &'static str,
    error: Option<String>,
    matched: usize,
    mismatched: usize,
    unevaluable: usize,
    relations: Vec<RelationJson>,
}

#[derive(Serialize)]
struct ExperimentJson {
    experiment: String,
    status: &'static str,
    error: Option<String>,
    coverage: CoverageJson,
    model: Option<ModelJson>,
    predictors: Vec<PredictorJson>,
    pairs: Vec<PairJson>,
    comparisons: Vec<ComparisonJson>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct SummaryJson {
    experiment: String,
    variant: Option<String>,
    classification: &'static str,
    matched: usize,
    mismatched: usize,
    unevaluable: usize,
    analyzed: usize,
    excluded: usize,
}

#[derive(Serialize)]
struct ReportJson {
    format_version: u32,
    toolkit_version: &'static str,
    config_hash: String,
    seed: u64,
    alpha: Option<f64>,
    surprisal_sha256: String,
    summary: Vec<SummaryJson>,
    experiments: Vec<ExperimentJson>,
}

fn source_name(s: PairSource) -> &'static str {
    match s {
        PairSource::Selected => "selected",
        PairSource::Dropped => "dropped",
        PairSource::Forced => "forced",
    }
}

fn counts(c: &PatternComparison) -> (usize, usize, usize) {
    let n = |v: Verdict| c.relations.iter().filter(|r| r.verdict == v).count();
    (n(Verdict::Match), n(Verdict::Mismatch), n(Verdict::Unevaluable))
}

fn model_json(d: &DerivedPattern) -> ModelJson {
    let fit = &d.selected_fit;
    let se = fit.standard_errors();
    ModelJson {
        full_formula: d.full_formula.to_string(),
        selected_formula: d.selected_formula.to_string(),
        reml_criterion: r8(fit.reml_deviance()),
        converged: fit.convergence().converged,
        singular: fit.is_singular(),
        variance_components: fit
            .variance_components()
            .iter()
            .map(|v| ComponentJson {
                group: v.group.clone(),
                levels: v.levels,
                variance: r8(v.variance),
                singular: v.singular,
            })
            .collect(),
        residual_variance: r8(fit.residual_variance()),
        coefficients: fit
            .column_labels()
            .iter()
            .zip(fit.coefficients())
            .zip(&se)
            .map(|((l, b), s)| CoefficientJson {
                label: l.clone(),
                estimate: r8(*b),
                std_error: r8(*s),
            })
            .collect(),
        type3: d.type3.iter().map(test_json).collect(),
    }
}

fn experiment_json(o: &ExperimentOutcome) -> ExperimentJson {
    let cov = &o.coverage;
    let coverage = CoverageJson {
        analyzed: cov.analyzed,
        excluded: cov.excluded,
        per_condition: cov
            .per_condition
            .iter()
            .map(|c| ConditionJson {
                condition: c.condition.clone(),
                analyzed: c.analyzed,
                excluded: c.excluded,
            })
            .collect(),
        warnings: cov.warnings.clone(),
    };
    let comparisons = o
        .comparisons
        .iter()
        .map(|c| match &c.result {
            Ok(r) => {
                let (m, mm, u) = counts(r);
                ComparisonJson {
                    variant: c.variant.clone(),
                    pattern_file: c.file.clone(),
                    classification: r.classification.as_str(),
                    error: None,
                    matched: m,
                    mismatched: mm,
                    unevaluable: u,
                    relations: r
                        .relations
                        .iter()
                        .map(|rel| RelationJson {
                            expected: rel.expected.to_string(),
                            observed: rel.observed.map(|x| x.as_str()),
                            estimate: r8o(rel.estimate),
                            p_value: r8o(rel.p_value),
                            verdict: rel.verdict.as_str(),
                            note: rel.note.clone(),
                        })
                        .collect(),
                }
            }
            Err(e) => ComparisonJson {
                variant: c.variant.clone(),
                pattern_file: c.file.clone(),
                classification: Classification::Unevaluable.as_str(),
                error: Some(e.clone()),
                matched: 0,
                mismatched: 0,
                unevaluable: 0,
                relations: Vec::new(),
            },
        })
        .collect();
    match &o.derived {
        Ok(d) => ExperimentJson {
            experiment: o.experiment.clone(),
            status: "analyzed",
            error: None,
            coverage,
            model: Some(model_json(d)),
            predictors: d
                .predictors
                .iter()
                .map(|p| PredictorJson {
                    term: p.term.clone(),
                    retained: p.retained,
                    protected: p.protected,
                    dropped_at_step: p.dropped_at_step,
                    lrt: test_json(&p.lrt),
                })
                .collect(),
            pairs: d
                .pairs
                .iter()
                .map(|p| PairJson {
                    a: p.a.clone(),
                    b: p.b.clone(),
                    factor: p.factor.clone(),
                    source: source_name(p.source),
                    observed: p.observed().as_str(),
                    significant: p.significant,
                    estimate: r8o(p.estimate),
                    std_error: r8o(p.test.as_ref().and_then(|t| t.std_error)),
                    t: r8o(p.test.as_ref().map(|t| t.statistic)),
                    df: r8o(p.test.as_ref().map(|t| t.df)),
                    p_value: r8o(p.p_value),
                })
                .collect(),
            comparisons,
            notes: d.notes.clone(),
        },
        Err(e) => ExperimentJson {
            experiment: o.experiment.clone(),
            status: "failed",
            error: Some(e.clone()),
            coverage,
            model: None,
            predictors: Vec::new(),
            pairs: Vec::new(),
            comparisons,
            notes: Vec::new(),
        },
    }
}

fn summary(outcomes: &[ExperimentOutcome]) -> Vec<SummaryJson> {
    let mut rows = Vec::new();
    for o in outcomes {
        let base = |variant: Option<String>, class: Classification, c: (usize, usize, usize)| SummaryJson {
            experiment: o.experiment.clone(),
            variant,
            classification: class.as_str(),
            matched: c.0,
            mismatched: c.1,
            unevaluable: c.2,
            analyzed: o.coverage.analyzed,
            excluded: o.coverage.excluded,
        };
        if o.comparisons.is_empty() {
            rows.push(base(None, Classification::Unevaluable, (0, 0, 0)));
        }
        for c in &o.comparisons {
            rows.push(match &c.result {
                Ok(r) => base(c.variant.clone(), r.classification, counts(r)),
                Err(_) => base(c.variant.clone(), Classification::Unevaluable, (0, 0, 0)),
            });
        }
    }
    rows
}

pub fn report_json(ctx: &ReportContext, outcomes: &[ExperimentOutcome]) -> String {
    let report = ReportJson {
        format_version: REPORT_FORMAT_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION"),
        config_hash: ctx.config_hash.clone(),
        seed: ctx.seed,
        alpha: r8(ctx.alpha),
        surprisal_sha256: ctx.surprisal_sha256.clone(),
        summary: summary(outcomes),
        experiments: outcomes.iter().map(experiment_json).collect(),
    };
    let mut s = serde_json::to_string_pretty(&report).expect("serializable report");
    s.push('\n');
    s
}

fn header(ctx: &ReportContext, title: &str) -> String {
    format!(
        "# {title}\n# config_hash={}\n# seed={}\n# alpha={}\n# surprisal_sha256={}\n",
        ctx.config_hash,
        ctx.seed,
        num(Some(ctx.alpha)),
        ctx.surprisal_sha256
    )
}

fn table(out: &mut String, rows: &[Vec<String>]) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            if c + 1 == r.len() {
                line.push_str(cell);
            } else {
                let _ = write!(line, "{cell:<w$}  ", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

pub fn report_text(ctx: &ReportContext, outcomes: &[ExperimentOutcome]) -> String {
    let mut out = header(ctx, "n400 report");
    out.push('\n');
    let mut rows = vec![vec![
        "experiment".to_owned(),
        "classification".to_owned(),
        "match".to_owned(),
        "mismatch".to_owned(),
        "unevaluable".to_owned(),
        "analyzed".to_owned(),
        "excluded".to_owned(),
    ]];
    for s in summary(outcomes) {
        let name = match &s.variant {
            Some(v) => format!("{}.{v}", s.experiment),
            None => s.experiment.clone(),
        };
        rows.push(vec![
            name,
            s.classification.to_owned(),
            s.matched.to_string(),
            s.mismatched.to_string(),
            s.unevaluable.to_string(),
            s.analyzed.to_string(),
            s.excluded.to_string(),
        ]);
    }
    table(&mut out, &rows);

    for o in outcomes {
        let _ = write!(out, "\n== {} ==\n", o.experiment);
        let per: Vec<String> = o
            .coverage
            .per_condition
            .iter()
            .map(|c| format!("{} {}/{}", c.condition, c.analyzed, c.analyzed + c.excluded))
            .collect();
        let _ = writeln!(out, "coverage: {} ({})", o.coverage.analyzed, per.join(", "));
        let d = match &o.derived {
            Ok(d) => d,
            Err(e) => {
                let _ = writeln!(out, "analysis failed: {e}");
                continue;
            }
        };
        let _ = writeln!(out, "selected model: {}", d.selected_formula);
        let mut rows = vec![vec!["pair".to_owned(), "estimate".into(), "t".into(), "df".into(), "p".into(), "observed".into()]];
        for p in &d.pairs {
            let t = p.test.as_ref();
            let mut obs = p.observed().as_str().to_owned();
            if p.source != PairSource::Selected {
                let _ = write!(obs, " ({})", source_name(p.source));
            }
            rows.push(vec![
                format!("{} vs {}", p.a, p.b),
                num(p.estimate),
                num(t.map(|t| t.statistic)),
                num(t.map(|t| t.df)),
                pval(p.p_value),
                obs,
            ]);
        }
        table(&mut out, &rows);
        for c in &o.comparisons {
            let title = match &c.variant {
                Some(v) => format!("expected pattern ({v})"),
                None => "expected pattern".to_owned(),
            };
            match &c.result {
                Err(e) => {
                    let _ = writeln!(out, "{title}: UNEVALUABLE: {e}");
                }
                Ok(r) => {
                    let _ = writeln!(out, "{title}: {}", r.classification);
                    let mut rows = Vec::new();
                    for rel in &r.relations {
                        rows.push(vec![
                            format!("  {}", rel.expected),
                            format!("observed {}", rel.observed.map_or("-", |x| x.as_str())),
                            format!("p {}", pval(rel.p_value)),
                            match &rel.note {
                                Some(n) => format!("{} ({n})", rel.verdict.as_str()),
                                None => rel.verdict.as_str().to_owned(),
                            },
                        ]);
                    }
                    table(&mut out, &rows);
                }
            }
        }
        if o.comparisons.is_empty() {
            out.push_str("expected pattern: none (UNEVALUABLE)\n");
        }
        for n in &d.notes {
            let _ = writeln!(out, "note: {n}");
        }
    }
    out
}

fn fmt_test(t: &TestResult) -> Vec<String> {
    let df = match t.df_denominator {
        Some(d) => format!("{}, {}", num(Some(t.df)), num(Some(d))),
        None => num(Some(t.df)),
    };
    vec![t.label.clone(), kind_name(t.kind).to_owned(), num(Some(t.statistic)), df, pval(Some(t.p_value))]
}

pub fn fit_text(ctx: &ReportContext, o: &ExperimentOutcome) -> String {
    let mut out = header(ctx, &format!("model fits for {}", o.experiment));
    out.push_str(FIT_LIMITATIONS);
    out.push('\n');
    let d = match &o.derived {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(out, "analysis failed: {e}");
            return out;
        }
    };
    let _ = writeln!(out, "full model:     {}", d.full_formula);
    let _ = writeln!(out, "selected model: {}", d.selected_formula);
    let _ = writeln!(out, "observations:   {} analyzed, {} excluded", d.n_analyzed, d.n_excluded);

    out.push_str("\nbackward selection (ML likelihood-ratio tests)\n");
    let mut rows = vec![vec!["term".to_owned(), "chi2".into(), "df".into(), "p".into(), "decision".into()]];
    for p in &d.predictors {
        let decision = match (p.retained, p.dropped_at_step, p.protected) {
            (_, Some(s), _) => format!("dropped at step {s}"),
            (true, None, true) => "retained (in an interaction)".to_owned(),
            (true, None, false) => "retained".to_owned(),
            (false, None, _) => "dropped".to_owned(),
        };
        rows.push(vec![p.term.clone(), num(Some(p.lrt.statistic)), num(Some(p.lrt.df)), pval(Some(p.lrt.p_value)), decision]);
    }
    table(&mut out, &rows);

    let fit = &d.selected_fit;
    let conv = fit.convergence();
    out.push_str("\nselected model, REML fit\n");
    let _ = writeln!(
        out,
        "REML criterion {}; {} iterations; converged {}; singular {}",
        num(Some(fit.reml_deviance())),
        conv.iterations,
        conv.converged,
        fit.is_singular()
    );
    let mut rows = vec![vec!["variance component".to_owned(), "levels".into(), "variance".into()]];
    for v in fit.variance_components() {
        let mut var = num(Some(v.variance));
        if v.singular {
            var.push_str(" (boundary)");
        }
        rows.push(vec![v.group.clone(), v.levels.to_string(), var]);
    }
    rows.push(vec!["residual".to_owned(), "-".into(), num(Some(fit.residual_variance()))]);
    table(&mut out, &rows);

    out.push('\n');
    let se = fit.standard_errors();
    let mut rows = vec![vec!["coefficient".to_owned(), "estimate".into(), "std. error".into()]];
    for ((l, b), s) in fit.column_labels().iter().zip(fit.coefficients()).zip(&se) {
        rows.push(vec![l.clone(), num(Some(*b)), num(Some(*s))]);
    }
    table(&mut out, &rows);

    if !d.type3.is_empty() {
        out.push_str("\nType III tests (Satterthwaite)\n");
        let mut rows = vec![vec!["term".to_owned(), "test".into(), "statistic".into(), "df".into(), "p".into()]];
        rows.extend(d.type3.iter().map(fmt_test));
        table(&mut out, &rows);
    }

    out.push_str("\npairwise contrasts (Satterthwaite t)\n");
    let mut rows = vec![vec!["contrast".to_owned(), "source".into(), "estimate".into(), "std. error".into(), "t".into(), "df".into(), "p".into()]];
    for p in &d.pairs {
        let t = p.test.as_ref();
        rows.push(vec![
            format!("{} - {}", p.a, p.b),
            source_name(p.source).to_owned(),
            num(p.estimate),
            num(t.and_then(|t| t.std_error)),
            num(t.map(|t| t.statistic)),
            num(t.map(|t| t.df)),
            pval(p.p_value),
        ]);
    }
    table(&mut out, &rows);
    for n in &d.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

/// Write the whole bundle under `dir` in one all-or-nothing step.
pub fn write_report(dir: &Path, ctx: &ReportContext, outcomes: &[ExperimentOutcome]) -> anyhow::Result<()> {
    let mut staged = StagedWrites::new();
    staged.add(&dir.join("report.json"), report_json(ctx, outcomes).as_bytes())?;
    staged.add(&dir.join("report.txt"), report_text(ctx, outcomes).as_bytes())?;
    for o in outcomes {
        staged.add(&dir.join("fits").join(format!("{}.txt", o.experiment)), fit_text(ctx, o).as_bytes())?;
    }
    staged.commit()
}
