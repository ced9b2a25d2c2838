//! On-disk formats: model weights, vocabulary, surprisal tables.

mod surprisal;
mod vocab;
mod weights;

pub use surprisal::{read_surprisals, read_surprisals_from, write_surprisals, SURPRISAL_COLUMNS, SURPRISAL_FORMAT_VERSION};
pub use vocab::{read_vocabulary, vocabulary_hash, write_vocabulary, VOCAB_FORMAT_VERSION};
pub use weights::{read_weights, write_weights, WeightsError, WeightsHeader, WEIGHTS_FORMAT_VERSION, WEIGHTS_MAGIC};

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `# key=value` provenance lines written at the top of text outputs.
pub fn provenance_header(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash}\n# seed={seed}\n")
}
