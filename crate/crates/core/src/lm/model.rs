//! LSTM parameters and the forward recurrence.
//!
//! Each layer computes, with gates stacked in the order input, forget, cell,
//! output:
//!
//! ```text
//! z = W_in x + W_rec h + b
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```
//!
//! The top hidden vector is projected onto the vocabulary to give logits.

use alloc::vec;
use alloc::vec::Vec;

use super::vocab::UNK_ID;
use super::LmError;
use crate::float::{exp, ln, log2, sigmoid, tanh};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Width of each layer, bottom first.
    pub hidden: Vec<usize>,
}

impl LstmDims {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.vocab_size < 3 || self.embed_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(LmError::InvalidConfig("dimensions must be positive with at least one layer and 3 words"));
        }
        Ok(())
    }

    pub fn input_size(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            self.hidden[layer - 1]
        }
    }

    pub fn top(&self) -> usize {
        *self.hidden.last().expect("at least one layer")
    }

    pub fn param_count(&self) -> usize {
        let mut n = self.vocab_size * self.embed_dim;
        for (l, &h) in self.hidden.iter().enumerate() {
            n += 4 * h * (self.input_size(l) + h + 1);
        }
        n + self.vocab_size * (self.top() + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `4H × input`, row-major.
    pub w_in: Vec<f64>,
    /// `4H × H`, row-major.
    pub w_rec: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub dims: LstmDims,
    /// `V × E`, row `w` is the embedding of word `w`.
    pub embedding: Vec<f64>,
    pub layers: Vec<LayerParams>,
    /// `V × H_top`, row-major.
    pub output: Vec<f64>,
    pub output_bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(dims: &LstmDims) -> Result<Self, LmError> {
        dims.validate()?;
        let layers = dims
            .hidden
            .iter()
            .enumerate()
            .map(|(l, &h)| LayerParams {
                w_in: vec![0.0; 4 * h * dims.input_size(l)],
                w_rec: vec![0.0; 4 * h * h],
                bias: vec![0.0; 4 * h],
            })
            .collect();
        Ok(Self {
            dims: dims.clone(),
            embedding: vec![0.0; dims.vocab_size * dims.embed_dim],
            layers,
            output: vec![0.0; dims.vocab_size * dims.top()],
            output_bias: vec![0.0; dims.vocab_size],
        })
    }

    /// Every parameter block in serialization order: embedding, then per
    /// layer input weights, recurrent weights, bias, then output weights and
    /// output bias.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.embedding];
        for l in &self.layers {
            out.push(&l.w_in);
            out.push(&l.w_rec);
            out.push(&l.bias);
        }
        out.push(&self.output);
        out.push(&self.output_bias);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.embedding];
        for l in &mut self.layers {
            out.push(&mut l.w_in);
            out.push(&mut l.w_rec);
            out.push(&mut l.bias);
        }
        out.push(&mut self.output);
        out.push(&mut self.output_bias);
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn from_flat(dims: &LstmDims, flat: &[f64]) -> Result<Self, LmError> {
        let mut p = Self::zeros(dims)?;
        if flat.len() != dims.param_count() {
            return Err(LmError::DimensionMismatch {
                expected: dims.param_count(),
                found: flat.len(),
            });
        }
        let mut offset = 0;
        for b in p.blocks_mut() {
            let n = b.len();
            b.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(p)
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmState {
    /// Hidden vector per layer.
    pub h: Vec<Vec<f64>>,
    /// Cell vector per layer.
    pub c: Vec<Vec<f64>>,
}

impl LmState {
    pub fn zeros(dims: &LstmDims) -> Self {
        Self {
            h: dims.hidden.iter().map(|&n| vec![0.0; n]).collect(),
            c: dims.hidden.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// `out += W x` for row-major `W` with `out.len()` rows.
#[inline]
pub(crate) fn gemv_acc(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// Activations of one layer at one time step, kept for back-propagation.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Gate activations `[i, f, g, o]`, each of width H.
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub(crate) fn layer_forward(p: &LayerParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let hn = h.len();
    let mut z = p.bias.clone();
    gemv_acc(&mut z, &p.w_in, x);
    gemv_acc(&mut z, &p.w_rec, h);
    let mut gates = z;
    for k in 0..hn {
        gates[k] = sigmoid(gates[k]);
        gates[hn + k] = sigmoid(gates[hn + k]);
        gates[2 * hn + k] = tanh(gates[2 * hn + k]);
        gates[3 * hn + k] = sigmoid(gates[3 * hn + k]);
    }
    let mut c_new = vec![0.0; hn];
    let mut h_new = vec![0.0; hn];
    let mut tanh_c = vec![0.0; hn];
    for k in 0..hn {
        c_new[k] = gates[hn + k] * c[k] + gates[k] * gates[2 * hn + k];
        tanh_c[k] = tanh(c_new[k]);
        h_new[k] = gates[3 * hn + k] * tanh_c[k];
    }
    (h_new, c_new, gates, tanh_c)
}

/// One step through all layers; returns the new state, logits and (when
/// asked) the per-layer traces.
pub(crate) fn step_traced(
    params: &LstmParams,
    state: &LmState,
    token: usize,
    keep: bool,
) -> Result<(LmState, Vec<f64>, Vec<LayerTrace>), LmError> {
    let d = &params.dims;
    if token >= d.vocab_size {
        return Err(LmError::TokenOutOfRange {
            token,
            vocab_size: d.vocab_size,
        });
    }
    let mut x = params.embedding[token * d.embed_dim..(token + 1) * d.embed_dim].to_vec();
    let mut next = LmState {
        h: Vec::with_capacity(d.hidden.len()),
        c: Vec::with_capacity(d.hidden.len()),
    };
    let mut traces = Vec::new();
    for (l, lp) in params.layers.iter().enumerate() {
        let (h, c, gates, tanh_c) = layer_forward(lp, &x, &state.h[l], &state.c[l]);
        if keep {
            traces.push(LayerTrace {
                x: x.clone(),
                h_prev: state.h[l].clone(),
                c_prev: state.c[l].clone(),
                gates,
                tanh_c,
            });
        }
        x = h.clone();
        next.h.push(h);
        next.c.push(c);
    }
    let mut logits = params.output_bias.clone();
    gemv_acc(&mut logits, &params.output, &x);
    if !logits.iter().all(|v| v.is_finite()) || !next.c.iter().flatten().all(|v| v.is_finite()) {
        return Err(LmError::NonFinite);
    }
    Ok((next, logits, traces))
}

/// Advance the recurrence by one token.
pub fn lstm_step(params: &LstmParams, state: &LmState, token: usize) -> Result<(LmState, Vec<f64>), LmError> {
    let (s, logits, _) = step_traced(params, state, token, false)?;
    Ok((s, logits))
}

/// Softmax with the maximum logit subtracted first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out: Vec<f64> = logits.iter().map(|&v| exp(v - max)).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// `ln softmax(logits)[target]`, computed stably.
pub(crate) fn log_softmax_at(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = logits.iter().map(|&v| exp(v - max)).sum();
    logits[target] - max - ln(sum)
}

fn run_prefix(params: &LstmParams, prefix: &[usize]) -> Result<Vec<f64>, LmError> {
    if prefix.is_empty() {
        return Err(LmError::EmptyPrefix);
    }
    let mut state = LmState::zeros(&params.dims);
    let mut logits = Vec::new();
    for &tok in prefix {
        let (s, l) = lstm_step(params, &state, tok)?;
        state = s;
        logits = l;
    }
    Ok(logits)
}

/// Distribution over the next word after feeding `prefix` from the zero state.
pub fn next_word_distribution(params: &LstmParams, prefix: &[usize]) -> Result<Vec<f64>, LmError> {
    Ok(softmax(&run_prefix(params, prefix)?))
}

/// Surprisal in bits of the word at token position `target_index`, where
/// `ids` starts with the begin-of-sentence id (so the word sits at
/// `ids[target_index + 1]`). Only `ids[..=target_index]` is read as context.
pub fn surprisal(params: &LstmParams, ids: &[usize], target_index: usize) -> Result<f64, LmError> {
    let Some(&target) = ids.get(target_index + 1) else {
        return Err(LmError::TargetOutOfRange {
            index: target_index,
            len: ids.len().saturating_sub(1),
        });
    };
    if target == UNK_ID {
        return Err(LmError::UnknownTarget);
    }
    let probs = next_word_distribution(params, &ids[..=target_index])?;
    let p = probs
        .get(target)
        .copied()
        .ok_or(LmError::TokenOutOfRange {
            token: target,
            vocab_size: params.dims.vocab_size,
        })?
        .max(PROB_FLOOR);
    // subtracting from +0.0 keeps a certain target at +0.0 rather than -0.0
    Ok(0.0 - log2(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(v: usize) -> LstmDims {
        LstmDims {
            vocab_size: v,
            embed_dim: 3,
            hidden: vec![2, 2],
        }
    }

    #[test]
    fn zero_params_give_zero_logits_and_uniform() {
        let p = LstmParams::zeros(&dims(8)).unwrap();
        let (_, logits) = lstm_step(&p, &LmState::zeros(&p.dims), 5).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        let d = next_word_distribution(&p, &[1, 4, 6]).unwrap();
        assert!(d.iter().all(|&v| (v - 0.125).abs() < 1e-15));
        assert_eq!(surprisal(&p, &[1, 3, 4], 1).unwrap(), 3.0);
    }

    #[test]
    fn certain_target_has_zero_surprisal() {
        let mut p = LstmParams::zeros(&dims(5)).unwrap();
        p.output_bias[4] = 1e4;
        assert_eq!(surprisal(&p, &[1, 4], 0).unwrap(), 0.0);
        assert!(surprisal(&p, &[1, 3], 0).unwrap() > 900.0);
    }

    #[test]
    fn flat_round_trip_and_errors() {
        let d = dims(6);
        let flat: Vec<f64> = (0..d.param_count()).map(|i| i as f64 * 0.01).collect();
        let p = LstmParams::from_flat(&d, &flat).unwrap();
        assert_eq!(p.to_flat(), flat);
        assert!(LstmParams::from_flat(&d, &flat[1..]).is_err());
        assert!(matches!(
            lstm_step(&p, &LmState::zeros(&d), 6),
            Err(LmError::TokenOutOfRange { .. })
        ));
        assert_eq!(next_word_distribution(&p, &[]).unwrap_err(), LmError::EmptyPrefix);
    }
}
