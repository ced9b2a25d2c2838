//! Vocabulary file: UTF-8, one word per line, the `k`-th word line holding
//! id `k + 3` (ids 0–2 are reserved). Lines starting with `#` carry
//! provenance and are skipped; normalized words never start with `#`.

use anyhow::{bail, Context};
use n400_core::lm::Vocabulary;
use sha2::{Digest, Sha256};

pub const VOCAB_FORMAT_VERSION: u32 = 1;

/// SHA-256 of the word lines, independent of provenance comments.
pub fn vocabulary_hash(vocab: &Vocabulary) -> [u8; 32] {
    Sha256::digest(vocab.to_text().as_bytes()).into()
}

pub fn write_vocabulary(vocab: &Vocabulary, header: &str) -> String {
    let mut out = format!("# n400 vocabulary v{VOCAB_FORMAT_VERSION}\n{header}");
    out.push_str(&vocab.to_text());
    out
}

pub fn read_vocabulary(text: &str) -> anyhow::Result<Vocabulary> {
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        let w = line.trim_end_matches('\r');
        if w.is_empty() || w.contains(char::is_whitespace) {
            bail!("vocabulary line {}: `{w}` is not a single word", i + 1);
        }
        words.push(w);
    }
    Vocabulary::from_words(&words).context("invalid vocabulary file")
}
