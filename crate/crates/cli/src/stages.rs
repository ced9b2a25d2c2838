//! The four batch stages: train, surprisal, analyze, pipeline.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use log::{info, warn};
use n400_core::analysis::{compare_patterns, compute_surprisals, coverage, derive_pattern, AnalysisConfig, SurprisalRecord};
use n400_core::corpus::{
    group_by_experiment, normalize_token, parse_design, parse_expected_pattern, parse_stimulus_file, validate_experiment,
    DesignSpec, ExpectedPattern, StimulusItem,
};
use n400_core::lm::{build_vocab, train, LstmParams, TrainingReport, Vocabulary};

use crate::config::{require, sibling, RunConfig};
use crate::formats::{
    hex, provenance_header, read_surprisals, read_vocabulary, read_weights, vocabulary_hash, write_surprisals,
    write_vocabulary, write_weights, WeightsHeader,
};
use crate::io::{read_text, write_atomic, StagedWrites};
use crate::report::{write_report, ComparisonOutcome, ExperimentOutcome, ReportContext};

pub struct ModelFiles {
    pub weights: PathBuf,
    pub vocab: PathBuf,
    pub log: PathBuf,
}

impl ModelFiles {
    pub fn at(weights: &Path) -> Self {
        Self {
            weights: weights.to_path_buf(),
            vocab: sibling(weights, "vocab"),
            log: sibling(weights, "train.tsv"),
        }
    }
}

pub struct LoadedModel {
    pub header: WeightsHeader,
    pub params: LstmParams,
    pub vocab: Vocabulary,
}

/// Sentences of a plain-text training corpus, one per line.
pub fn read_training_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| {
            l.split_whitespace()
                .map(normalize_token)
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

fn training_log(report: &TrainingReport, model_hash: &str, seed: u64) -> String {
    let mut out = format!("# n400 training log\n# model_hash={model_hash}\n# seed={seed}\n");
    out.push_str(&format!(
        "# train_sentences={} heldout_sentences={} steps={}\n",
        report.train_sentences, report.heldout_sentences, report.steps
    ));
    out.push_str("epoch\ttrain_loss\theldout_perplexity\n");
    out.push_str(&format!("0\t\t{:?}\n", report.initial_heldout_perplexity));
    for e in &report.epochs {
        out.push_str(&format!("{}\t{:?}\t{:?}\n", e.epoch, e.train_loss, e.heldout_perplexity));
    }
    out
}

pub fn run_train(cfg: &RunConfig) -> anyhow::Result<ModelFiles> {
    let corpus_path = require(&cfg.paths.train_corpus, "train_corpus")?;
    let bytes = std::fs::read(corpus_path)
        .with_context(|| format!("cannot read training corpus {}", corpus_path.display()))?;
    let text = String::from_utf8(bytes).map_err(|_| anyhow!("training corpus {} is not UTF-8", corpus_path.display()))?;
    let files = ModelFiles::at(&cfg.model_path());
    let sentences = read_training_corpus(&text);
    if sentences.is_empty() {
        bail!("training corpus {} has no sentences", corpus_path.display());
    }
    let vocab = build_vocab(sentences.iter().flatten().map(String::as_str), cfg.model.max_vocab)?;
    let ids: Vec<Vec<usize>> = sentences.iter().map(|s| vocab.encode(s)).collect();
    let dims = cfg.dims(vocab.len());
    info!(
        "training on {} sentences, vocabulary {} words, {} parameters",
        ids.len(),
        vocab.len(),
        dims.param_count()
    );
    let (params, report) = train(&ids, &dims, &cfg.training_config()).map_err(|e| anyhow!("training failed: {e}"))?;
    info!(
        "held-out perplexity {:.3} -> {:.3}",
        report.initial_heldout_perplexity,
        report.epochs.last().map_or(f64::NAN, |e| e.heldout_perplexity)
    );
    let model_hash = cfg.model_hash(text.as_bytes());
    let header = WeightsHeader {
        vocab_hash: vocabulary_hash(&vocab),
        config_hash: model_hash,
        seed: cfg.seed,
        dims,
    };
    let mut weights = Vec::new();
    write_weights(&mut weights, &header, &params)?;
    let prov = format!("# model_hash={}\n# seed={}\n", hex(&model_hash), cfg.seed);
    let mut staged = StagedWrites::new();
    staged.add(&files.weights, &weights)?;
    staged.add(&files.vocab, write_vocabulary(&vocab, &prov).as_bytes())?;
    staged.add(&files.log, training_log(&report, &hex(&model_hash), cfg.seed).as_bytes())?;
    staged.commit()?;
    info!("wrote {}", files.weights.display());
    Ok(files)
}

pub fn load_model(weights: &Path) -> anyhow::Result<LoadedModel> {
    let files = ModelFiles::at(weights);
    let vocab = read_vocabulary(&read_text(&files.vocab, "vocabulary file")?)
        .with_context(|| format!("in {}", files.vocab.display()))?;
    let mut f = std::fs::File::open(weights).with_context(|| format!("cannot open weight file {}", weights.display()))?;
    let (header, params) =
        read_weights(&mut f, Some(&vocabulary_hash(&vocab))).with_context(|| format!("in {}", weights.display()))?;
    Ok(LoadedModel { header, params, vocab })
}

/// Stimuli from every `*.tsv` file of `dir`, in file-name order.
pub fn load_stimuli(dir: &Path) -> anyhow::Result<Vec<StimulusItem>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot list corpus directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv") && p.is_file())
        .collect();
    files.sort();
    let mut items: Vec<StimulusItem> = Vec::new();
    let mut keys = std::collections::HashMap::new();
    for f in &files {
        let parsed = parse_stimulus_file(&read_text(f, "stimulus file")?)
            .map_err(|e| anyhow!("{}: {e}", f.display()))?;
        for it in parsed {
            let key = (it.experiment.clone(), it.item.clone(), it.condition.clone());
            if let Some(prev) = keys.insert(key, f.clone()) {
                bail!(
                    "{}: item ({}, {}, {}) already defined in {}",
                    f.display(),
                    it.experiment,
                    it.item,
                    it.condition,
                    prev.display()
                );
            }
            items.push(it);
        }
    }
    Ok(items)
}

/// `<experiment>.design` from the corpus directory, then the pattern
/// directory; the default single-factor design when neither has one.
pub fn load_design(cfg: &RunConfig, experiment: &str) -> anyhow::Result<DesignSpec> {
    for dir in [&cfg.paths.corpus_dir, &cfg.paths.patterns_dir].into_iter().flatten() {
        let path = dir.join(format!("{experiment}.design"));
        if path.is_file() {
            return parse_design(&read_text(&path, "design file")?).map_err(|e| anyhow!("{}: {e}", path.display()));
        }
    }
    Ok(DesignSpec::default())
}

/// Expected-pattern files for `experiment`: `<experiment>.pattern` and any
/// `<experiment>.<variant>.pattern`, ordered by variant name.
pub fn pattern_files(dir: &Path, experiment: &str) -> anyhow::Result<Vec<(Option<String>, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list pattern directory {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".pattern") else {
            continue;
        };
        if stem == experiment {
            out.push((None, path));
        } else if let Some(variant) = stem.strip_prefix(experiment).and_then(|r| r.strip_prefix('.')) {
            if !variant.is_empty() && !variant.contains('.') {
                out.push((Some(variant.to_owned()), path));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn load_pattern(path: &Path, experiment: &str, design: &DesignSpec) -> anyhow::Result<ExpectedPattern> {
    let pattern = parse_expected_pattern(&read_text(path, "pattern file")?).map_err(|e| anyhow!("{e}"))?;
    if pattern.experiment != experiment {
        bail!("file describes experiment `{}`, not `{experiment}`", pattern.experiment);
    }
    pattern.check_labels(&design.labels()).map_err(|e| anyhow!("{e}"))?;
    Ok(pattern)
}

pub fn run_surprisal(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let model_path = cfg.model_path();
    let corpus_dir = require(&cfg.paths.corpus_dir, "corpus_dir")?;
    if !corpus_dir.is_dir() {
        bail!("corpus directory {} does not exist", corpus_dir.display());
    }
    let model = load_model(&model_path)?;
    let items = load_stimuli(corpus_dir)?;
    let groups: Vec<(String, Vec<StimulusItem>)> = group_by_experiment(&items)
        .into_iter()
        .filter(|(e, _)| cfg.experiments.accepts(e))
        .collect();
    if groups.is_empty() {
        bail!("no stimuli in {} pass the experiment filter", corpus_dir.display());
    }
    let mut records = Vec::new();
    for (experiment, items) in &groups {
        let design = load_design(cfg, experiment)?;
        let spec = validate_experiment(items, &design).map_err(|e| anyhow!("experiment {experiment}: {e}"))?;
        for w in &spec.warnings {
            warn!("{experiment}: {w}");
        }
        let (recs, cov) = compute_surprisals(&model.params, &model.vocab, &spec.items);
        let per: Vec<String> = cov
            .per_condition
            .iter()
            .map(|c| format!("{} {}/{}", c.condition, c.analyzed, c.analyzed + c.excluded))
            .collect();
        info!(
            "{experiment}: {} analyzed, {} excluded ({})",
            cov.analyzed,
            cov.excluded,
            per.join(", ")
        );
        for w in &cov.warnings {
            warn!("{experiment}: {w}");
        }
        records.extend(recs);
    }
    let out = cfg.surprisal_path();
    let header = format!(
        "{}# model_hash={}\n",
        provenance_header(&hex(&cfg.config_hash()), cfg.seed),
        hex(&model.header.config_hash)
    );
    write_atomic(&out, write_surprisals(&records, &header).as_bytes())?;
    info!("wrote {} rows to {}", records.len(), out.display());
    Ok(out)
}

/// Per-experiment analysis; failures are recorded, not propagated.
pub fn analyze_records(cfg: &RunConfig, records: &[SurprisalRecord]) -> anyhow::Result<Vec<ExperimentOutcome>> {
    let mut order: Vec<String> = Vec::new();
    for r in records {
        if !order.contains(&r.experiment) {
            order.push(r.experiment.clone());
        }
    }
    for e in &cfg.experiments.include {
        if !order.contains(e) {
            warn!("experiment `{e}` was requested but has no surprisal records");
        }
    }
    let mut outcomes = Vec::new();
    for experiment in order.into_iter().filter(|e| cfg.experiments.accepts(e)) {
        let recs: Vec<SurprisalRecord> = records.iter().filter(|r| r.experiment == experiment).cloned().collect();
        let cov = coverage(&recs);
        let design = load_design(cfg, &experiment)?;
        let resolved = design.resolved(cov.per_condition.iter().map(|c| c.condition.as_str()));
        let derived = derive_pattern(
            &recs,
            &AnalysisConfig {
                alpha: cfg.alpha,
                design,
            },
        )
        .map_err(|e| e.to_string());
        if let Err(e) = &derived {
            warn!("{experiment}: analysis failed: {e}");
        }
        let patterns = match &cfg.paths.patterns_dir {
            Some(dir) => pattern_files(dir, &experiment)?,
            None => Vec::new(),
        };
        if patterns.is_empty() {
            warn!("{experiment}: no expected-pattern file; reported as UNEVALUABLE");
        }
        let comparisons = patterns
            .into_iter()
            .map(|(variant, path)| {
                let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let result = load_pattern(&path, &experiment, &resolved)
                    .map_err(|e| format!("{file}: {e:#}"))
                    .and_then(|p| match &derived {
                        Ok(d) => Ok(compare_patterns(d, &p)),
                        Err(e) => Err(format!("analysis failed: {e}")),
                    });
                ComparisonOutcome { variant, file, result }
            })
            .collect();
        outcomes.push(ExperimentOutcome {
            experiment,
            coverage: cov,
            derived,
            comparisons,
        });
    }
    Ok(outcomes)
}

pub fn run_analyze(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let path = cfg.surprisal_path();
    let text = read_text(&path, "surprisal file")?;
    let records = read_surprisals(&text).with_context(|| format!("in {}", path.display()))?;
    if records.is_empty() {
        bail!("surprisal file {} has no rows", path.display());
    }
    let outcomes = analyze_records(cfg, &records)?;
    if outcomes.is_empty() {
        bail!("no experiment in {} passes the experiment filter", path.display());
    }
    let ctx = ReportContext {
        config_hash: hex(&cfg.config_hash()),
        seed: cfg.seed,
        alpha: cfg.alpha,
        surprisal_sha256: crate::formats::sha256_hex(text.as_bytes()),
    };
    let dir = &cfg.paths.output_dir;
    write_report(dir, &ctx, &outcomes)?;
    let evaluable = outcomes.iter().filter(|o| o.is_evaluable()).count();
    for o in &outcomes {
        for (variant, class) in o.classifications() {
            let name = match variant {
                Some(v) => format!("{}.{v}", o.experiment),
                None => o.experiment.clone(),
            };
            info!("{name}: {class}");
        }
    }
    info!("wrote report to {}", dir.display());
    if evaluable == 0 {
        bail!("no experiment could be evaluated against an expected pattern");
    }
    Ok(dir.join("report.json"))
}

pub enum ModelSource {
    /// An explicitly given model file; never retrained.
    Given,
    /// The configured location: reused when its settings hash matches,
    /// retrained otherwise.
    Default { retrain: bool },
}

pub fn run_pipeline(cfg: &RunConfig, source: ModelSource) -> anyhow::Result<PathBuf> {
    let model_path = cfg.model_path();
    match source {
        ModelSource::Given => {
            load_model(&model_path).context("train stage: cannot load the given model")?;
            info!("using model {}", model_path.display());
        }
        ModelSource::Default { retrain } => {
            let corpus = require(&cfg.paths.train_corpus, "train_corpus").context("train stage")?;
            let bytes = std::fs::read(corpus)
                .with_context(|| format!("train stage: cannot read training corpus {}", corpus.display()))?;
            let wanted = cfg.model_hash(&bytes);
            let reusable = !retrain
                && model_path.is_file()
                && load_model(&model_path).is_ok_and(|m| m.header.config_hash == wanted);
            if reusable {
                info!("reusing trained model {} (settings unchanged)", model_path.display());
            } else {
                run_train(cfg).context("train stage")?;
            }
        }
    }
    run_surprisal(cfg).context("surprisal stage")?;
    run_analyze(cfg).context("analyze stage")
}
