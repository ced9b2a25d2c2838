//! Versioned binary weight file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "N400LSTM"
//! version      u32
//! vocab hash   32 bytes SHA-256 of the vocabulary file body
//! config hash  32 bytes SHA-256 of the run settings
//! seed         u64
//! vocab size   u64
//! embed dim    u64
//! layers       u64, then one u64 width per layer
//! count        u64 number of parameters
//! payload      count × f64, serialization order of LstmParams::blocks
//! ```

use std::io::{Read, Write};

use n400_core::lm::{LstmDims, LstmParams};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"N400LSTM";
pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("not a weight file (bad magic bytes)")]
    BadMagic,
    #[error("weight file format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("weight file is truncated: {0}")]
    Truncated(&'static str),
    #[error("weight file has {trailing} unexpected trailing bytes")]
    Trailing { trailing: usize },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("vocabulary hash mismatch: weights expect {expected}, vocabulary file has {found}")]
    VocabularyHash { expected: String, found: String },
    #[error("weight file contains non-finite parameters")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightsHeader {
    pub vocab_hash: [u8; 32],
    pub config_hash: [u8; 32],
    pub seed: u64,
    pub dims: LstmDims,
}

pub fn write_weights<W: Write>(out: &mut W, header: &WeightsHeader, params: &LstmParams) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(128 + 8 * params.dims.param_count());
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&WEIGHTS_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&header.vocab_hash);
    buf.extend_from_slice(&header.config_hash);
    buf.extend_from_slice(&header.seed.to_le_bytes());
    let d = &params.dims;
    for v in [d.vocab_size, d.embed_dim, d.hidden.len()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &h in &d.hidden {
        buf.extend_from_slice(&(h as u64).to_le_bytes());
    }
    buf.extend_from_slice(&(d.param_count() as u64).to_le_bytes());
    for block in params.blocks() {
        for v in block {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WeightsError> {
        if self.bytes.len() < n {
            return Err(WeightsError::Truncated(what));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, WeightsError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self, what: &'static str) -> Result<usize, WeightsError> {
        usize::try_from(self.u64(what)?).map_err(|_| WeightsError::Dimensions(format!("{what} does not fit in memory")))
    }
}

/// Read a weight file. When `vocab_hash` is given it must match the one
/// recorded in the file.
pub fn read_weights<R: Read>(
    input: &mut R,
    vocab_hash: Option<&[u8; 32]>,
) -> Result<(WeightsHeader, LstmParams), WeightsError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes };
    if c.take(8, "magic").map_err(|_| WeightsError::BadMagic)? != WEIGHTS_MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = u32::from_le_bytes(c.take(4, "version")?.try_into().expect("4 bytes"));
    if version != WEIGHTS_FORMAT_VERSION {
        return Err(WeightsError::Version {
            found: version,
            expected: WEIGHTS_FORMAT_VERSION,
        });
    }
    let vh: [u8; 32] = c.take(32, "vocabulary hash")?.try_into().expect("32 bytes");
    let ch: [u8; 32] = c.take(32, "config hash")?.try_into().expect("32 bytes");
    let seed = c.u64("seed")?;
    let vocab_size = c.usize("vocabulary size")?;
    let embed_dim = c.usize("embedding size")?;
    let layers = c.usize("layer count")?;
    if layers == 0 || layers > 64 {
        return Err(WeightsError::Dimensions(format!("{layers} layers")));
    }
    let hidden = (0..layers).map(|_| c.usize("layer width")).collect::<Result<Vec<_>, _>>()?;
    let dims = LstmDims {
        vocab_size,
        embed_dim,
        hidden,
    };
    dims.validate().map_err(|e| WeightsError::Dimensions(e.to_string()))?;
    let count = c.usize("parameter count")?;
    if count != dims.param_count() {
        return Err(WeightsError::Dimensions(format!(
            "header declares {count} parameters, dimensions imply {}",
            dims.param_count()
        )));
    }
    if let Some(expected) = vocab_hash {
        if &vh != expected {
            return Err(WeightsError::VocabularyHash {
                expected: super::hex(&vh),
                found: super::hex(expected),
            });
        }
    }
    let need = count.checked_mul(8).ok_or(WeightsError::Truncated("parameters"))?;
    let payload = c.take(need, "parameters")?;
    if !c.bytes.is_empty() {
        return Err(WeightsError::Trailing {
            trailing: c.bytes.len(),
        });
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let params = LstmParams::from_flat(&dims, &flat).map_err(|e| WeightsError::Dimensions(e.to_string()))?;
    if !params.all_finite() {
        return Err(WeightsError::NonFinite);
    }
    Ok((
        WeightsHeader {
            vocab_hash: vh,
            config_hash: ch,
            seed,
            dims,
        },
        params,
    ))
}
