//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! seed = 1
//! alpha = 0.05
//!
//! [paths]
//! train_corpus = "train.txt"   # one sentence per line
//! corpus_dir = "stimuli"       # *.tsv stimulus files and <experiment>.design
//! patterns_dir = "patterns"    # <experiment>[.<variant>].pattern
//! model = "model.bin"          # default <output_dir>/model.bin
//! surprisals = "s.csv"         # default <output_dir>/surprisals.csv
//! output_dir = "out"
//!
//! [training]
//! epochs = 10
//! learning_rate = 1.0
//! batch_size = 16
//! bptt_window = 20
//! clip_norm = 5.0
//! heldout_every = 10
//!
//! [model]
//! embed_dim = 64
//! hidden = [64, 64]
//! max_vocab = 10000
//!
//! [experiments]
//! include = []                 # empty means every experiment
//! exclude = []
//! ```
//!
//! Relative paths in the file resolve against the file's directory; paths
//! given on the command line resolve against the working directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use n400_core::lm::{LstmDims, TrainingConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub bptt_window: usize,
    pub clip_norm: f64,
    pub heldout_every: usize,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let d = TrainingConfig::default();
        Self {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            bptt_window: d.bptt_window,
            clip_norm: d.clip_norm,
            heldout_every: d.heldout_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub max_vocab: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden: vec![64, 64],
            max_vocab: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentFilter {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

impl ExperimentFilter {
    pub fn accepts(&self, experiment: &str) -> bool {
        (self.include.is_empty() || self.include.iter().any(|e| e == experiment))
            && !self.exclude.iter().any(|e| e == experiment)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PathsSection {
    train_corpus: Option<PathBuf>,
    corpus_dir: Option<PathBuf>,
    patterns_dir: Option<PathBuf>,
    model: Option<PathBuf>,
    surprisals: Option<PathBuf>,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    seed: Option<u64>,
    alpha: Option<f64>,
    paths: PathsSection,
    training: TrainingSettings,
    model: ModelSettings,
    experiments: ExperimentFilter,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub train_corpus: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub patterns_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub surprisals: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub experiments: Option<Vec<String>>,
    pub output_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub train_corpus: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub patterns_dir: Option<PathBuf>,
    pub surprisals: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    pub paths: Paths,
    pub training: TrainingSettings,
    pub model: ModelSettings,
    pub experiments: ExperimentFilter,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

impl RunConfig {
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let (parsed, base) = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                let parsed: ConfigFile =
                    toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))?;
                (parsed, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (ConfigFile::default(), PathBuf::new()),
        };
        let rel = |p: Option<PathBuf>| p.map(|p| base.join(p));
        let p = parsed.paths;
        let mut experiments = parsed.experiments;
        if let Some(list) = &overrides.experiments {
            experiments.include = list.clone();
        }
        let config = RunConfig {
            seed: overrides.seed.or(parsed.seed).unwrap_or(DEFAULT_SEED),
            alpha: overrides.alpha.or(parsed.alpha).unwrap_or(n400_core::stats::ALPHA),
            paths: Paths {
                train_corpus: overrides.train_corpus.clone().or(rel(p.train_corpus)),
                corpus_dir: overrides.corpus_dir.clone().or(rel(p.corpus_dir)),
                patterns_dir: overrides.patterns_dir.clone().or(rel(p.patterns_dir)),
                model: overrides.model.clone().or(rel(p.model)),
                surprisals: overrides.surprisals.clone().or(rel(p.surprisals)),
                output_dir: overrides
                    .output_dir
                    .clone()
                    .or(rel(p.output_dir))
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            },
            training: parsed.training,
            model: parsed.model,
            experiments,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), found {}", self.alpha);
        }
        self.training_config()
            .validate()
            .map_err(|e| anyhow::anyhow!("invalid [training] settings: {e}"))?;
        if self.model.max_vocab < 4 {
            bail!("model.max_vocab must be at least 4");
        }
        if self.model.embed_dim == 0 || self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            bail!("model.embed_dim and every model.hidden width must be positive");
        }
        Ok(())
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            bptt_window: t.bptt_window,
            seed: self.seed,
            clip_norm: t.clip_norm,
            heldout_every: t.heldout_every,
        }
    }

    pub fn dims(&self, vocab_size: usize) -> LstmDims {
        LstmDims {
            vocab_size,
            embed_dim: self.model.embed_dim,
            hidden: self.model.hidden.clone(),
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths
            .model
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("model.bin"))
    }

    pub fn surprisal_path(&self) -> PathBuf {
        self.paths
            .surprisals
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("surprisals.csv"))
    }

    /// Hash of every setting that affects analytical outputs. Paths are left
    /// out so the same run in another directory hashes the same.
    pub fn config_hash(&self) -> [u8; 32] {
        #[derive(Serialize)]
        struct Settings<'a> {
            seed: u64,
            alpha: f64,
            training: &'a TrainingSettings,
            model: &'a ModelSettings,
            experiments: &'a ExperimentFilter,
        }
        let s = Settings {
            seed: self.seed,
            alpha: self.alpha,
            training: &self.training,
            model: &self.model,
            experiments: &self.experiments,
        };
        Sha256::digest(serde_json::to_vec(&s).expect("serializable")).into()
    }

    /// Hash of what determines the trained weights: seed, training and model
    /// settings, and the training corpus content.
    pub fn model_hash(&self, corpus: &[u8]) -> [u8; 32] {
        #[derive(Serialize)]
        struct Settings<'a> {
            seed: u64,
            training: &'a TrainingSettings,
            model: &'a ModelSettings,
            corpus_sha256: String,
        }
        let s = Settings {
            seed: self.seed,
            training: &self.training,
            model: &self.model,
            corpus_sha256: crate::formats::sha256_hex(corpus),
        };
        Sha256::digest(serde_json::to_vec(&s).expect("serializable")).into()
    }
}

/// Sibling path with a different extension: `out/model.bin` → `out/model.vocab`.
pub fn sibling(path: &Path, extension: &str) -> PathBuf {
    path.with_extension(extension)
}

pub fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> anyhow::Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("missing required path `paths.{key}` (set it in the config file or on the command line)"))
}
