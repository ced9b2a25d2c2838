use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn n400(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_n400"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

const CONFIG: &str = r#"seed = 3

[paths]
train_corpus = "train.txt"
corpus_dir = "."
patterns_dir = "."

[training]
epochs = 2
learning_rate = 0.5
batch_size = 4
bptt_window = 8
heldout_every = 5

[model]
embed_dim = 4
hidden = [4]
max_vocab = 100
"#;

/// A tiny project: corpus, two experiments, a pattern for one of them.
fn project() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("config.toml"), CONFIG).unwrap();
    let mut corpus = String::new();
    for i in 0..40 {
        let obj = ["bone", "ball", "stick", "cat"][i % 4];
        corpus.push_str(&format!("the dog chased the {obj} .\nthe cat saw the {obj} .\n"));
    }
    std::fs::write(p.join("train.txt"), corpus).unwrap();
    let mut stimuli = String::from("experiment\titem\tcondition\tsentence\n");
    let objects = ["bone", "ball", "stick", "cat"];
    for i in 0..8 {
        let (a, b) = (objects[i % 4], objects[(i / 2 + 1) % 4]);
        let agent = ["dog", "cat"][i % 2];
        stimuli.push_str(&format!("e1\t{i}\tT\tthe {agent} chased the *{a}* .\n"));
        stimuli.push_str(&format!("e1\t{i}\tA\tthe {agent} saw the *{b}* .\n"));
        stimuli.push_str(&format!("e2\t{i}\tX\tthe {agent} saw the *{a}* .\n"));
        stimuli.push_str(&format!("e2\t{i}\tY\tthe {agent} chased the *{b}* .\n"));
    }
    std::fs::write(p.join("stimuli.tsv"), stimuli).unwrap();
    std::fs::write(p.join("e1.pattern"), "e1: T LOWER A\n").unwrap();
    dir
}

#[test]
fn version_lists_format_versions() {
    let o = n400(Path::new("."), &["--version"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for what in ["weights format 1", "vocabulary format 1", "surprisal table format 1", "report format 1"] {
        assert!(text.contains(what), "{text}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let d = project();
    assert_eq!(n400(d.path(), &["train", "--bogus"]).status.code(), Some(2));
    let o = n400(d.path(), &["pipeline", "--config", "config.toml", "--model", "m.bin", "--retrain"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(n400(d.path(), &["analyze", "--alpha", "1.5"]).status.code(), Some(2));
}

#[test]
fn missing_training_corpus_is_named() {
    let d = project();
    let o = n400(d.path(), &["train", "--output-dir", "out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("paths.train_corpus"), "{}", stderr(&o));
}

#[test]
fn training_is_reproducible_and_resumable() {
    let d = project();
    let p = d.path();
    for out in ["a", "b"] {
        let o = n400(p, &["train", "--config", "config.toml", "--output-dir", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["model.bin", "model.vocab", "model.train.tsv"] {
        assert_eq!(sha(&p.join("a").join(f)), sha(&p.join("b").join(f)), "{f}");
    }
    let other = n400(p, &["train", "--config", "config.toml", "--output-dir", "c", "--seed", "4"]);
    assert!(other.status.success());
    assert_ne!(sha(&p.join("a/model.bin")), sha(&p.join("c/model.bin")));

    let first = n400(p, &["pipeline", "--config", "config.toml", "--output-dir", "a"]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stderr(&first).contains("reusing trained model"));
    let report = std::fs::read(p.join("a/report.json")).unwrap();
    let again = n400(p, &["pipeline", "--config", "config.toml", "--output-dir", "a", "--retrain"]);
    assert!(again.status.success());
    assert!(!stderr(&again).contains("reusing trained model"));
    assert_eq!(std::fs::read(p.join("a/report.json")).unwrap(), report);

    let changed = n400(p, &["pipeline", "--config", "config.toml", "--output-dir", "a", "--seed", "9"]);
    assert!(changed.status.success());
    assert!(!stderr(&changed).contains("reusing trained model"));
}

#[test]
fn surprisal_stage_filters_and_checks_weights() {
    let d = project();
    let p = d.path();
    assert!(n400(p, &["train", "--config", "config.toml", "--output-dir", "out"]).status.success());
    let o = n400(p, &["surprisal", "--config", "config.toml", "--output-dir", "out", "--experiments", "e2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(p.join("out/surprisals.csv")).unwrap();
    assert!(table.starts_with("# config_hash="));
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.starts_with("e2,")));

    let weights = p.join("out/model.bin");
    let mut bytes = std::fs::read(&weights).unwrap();
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&weights, bytes).unwrap();
    let o = n400(p, &["surprisal", "--config", "config.toml", "--output-dir", "out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
}

#[test]
fn analyze_reports_unevaluable_experiments_and_alpha() {
    let d = project();
    let p = d.path();
    let mut table = String::from("experiment,item,condition,target,surprisal\n");
    for i in 0..10 {
        let noise = (i as f64 * 0.37).sin();
        table.push_str(&format!("e1,{i},T,bone,{}\n", 2.0 + noise));
        table.push_str(&format!("e1,{i},A,stick,{}\n", 6.0 + noise + 0.4 * (i as f64 * 1.3).cos()));
        table.push_str(&format!("e2,{i},X,ball,{}\n", 3.0 + noise));
        table.push_str(&format!("e2,{i},Y,cat,{}\n", 3.5 - noise));
    }
    std::fs::write(p.join("s.csv"), table).unwrap();
    let o = n400(p, &["analyze", "--surprisals", "s.csv", "--corpus-dir", ".", "--patterns-dir", ".", "--alpha", "0.01"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["alpha"], 0.01);
    let text = std::fs::read_to_string(p.join("out/report.txt")).unwrap();
    assert!(text.contains("# alpha=0.01"));
    let line = |exp: &str| text.lines().find(|l| l.starts_with(exp)).unwrap().to_owned();
    assert!(line("e1").contains("FULL_MATCH"), "{text}");
    assert!(line("e2").contains("UNEVALUABLE"), "{text}");
    assert!(p.join("out/fits/e1.txt").is_file());

    std::fs::write(p.join("empty.csv"), "experiment,item,condition,target,surprisal\n").unwrap();
    let o = n400(p, &["analyze", "--surprisals", "empty.csv", "--corpus-dir", "."]);
    assert_eq!(o.status.code(), Some(1));

    let o = n400(p, &["analyze", "--surprisals", "s.csv", "--corpus-dir", ".", "--experiments", "e2"]);
    assert_eq!(o.status.code(), Some(1), "nothing evaluable");
}

#[test]
fn divergence_leaves_no_partial_files() {
    let d = project();
    let p = d.path();
    let o = n400(p, &["train", "--config", "config.toml", "--output-dir", "out"]);
    assert!(o.status.success());
    let before = sha(&p.join("out/model.bin"));
    std::fs::write(p.join("hot.toml"), CONFIG.replace("learning_rate = 0.5", "learning_rate = 1e300")).unwrap();
    let o = n400(p, &["train", "--config", "hot.toml", "--output-dir", "out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
    assert_eq!(sha(&p.join("out/model.bin")), before);
    let o = n400(p, &["train", "--config", "hot.toml", "--output-dir", "fresh"]);
    assert_eq!(o.status.code(), Some(1));
    let leftovers: Vec<_> = std::fs::read_dir(p.join("fresh")).map(|r| r.collect()).unwrap_or_default();
    assert!(leftovers.is_empty());
}
