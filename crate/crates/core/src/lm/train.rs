//! Training by truncated back-propagation through time with plain SGD and
//! global gradient-norm clipping.
//!
//! Every sentence is run from the zero state with the begin-of-sentence id
//! as first input and the end-of-sentence id as last target. Sentences are
//! cut into windows of `bptt_window` steps; the state flows across windows
//! but gradients do not.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{log_softmax_at, softmax, step_traced, LayerTrace, LmState, LstmDims, LstmParams};
use super::vocab::{BOS_ID, EOS_ID};
use super::LmError;
use crate::float::{exp, sqrt};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Sentences per parameter update.
    pub batch_size: usize,
    pub bptt_window: usize,
    pub seed: u64,
    /// Global L2 norm the gradient is clipped to.
    pub clip_norm: f64,
    /// Every `heldout_every`-th sentence is held out for evaluation.
    pub heldout_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1.0,
            batch_size: 16,
            bptt_window: 20,
            seed: 1,
            clip_norm: 5.0,
            heldout_every: 10,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.epochs == 0 || self.batch_size == 0 || self.bptt_window == 0 {
            return Err(LmError::InvalidConfig("epochs, batch size and window must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LmError::InvalidConfig("learning rate must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(LmError::InvalidConfig("clipping threshold must be positive"));
        }
        if self.heldout_every < 2 {
            return Err(LmError::InvalidConfig("held-out stride must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training cross-entropy in nats per token.
    pub train_loss: f64,
    pub heldout_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub initial_heldout_perplexity: f64,
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
    pub train_sentences: usize,
    pub heldout_sentences: usize,
}

/// Parameters drawn uniformly from `[-INIT_SCALE, INIT_SCALE)` in
/// serialization order.
pub fn init_params(dims: &LstmDims, rng: &mut ChaCha8Rng) -> Result<LstmParams, LmError> {
    let mut p = LstmParams::zeros(dims)?;
    for block in p.blocks_mut() {
        for v in block.iter_mut() {
            *v = rng.random_range(-INIT_SCALE..INIT_SCALE);
        }
    }
    Ok(p)
}

/// Mean per-token cross-entropy (nats) and token count over `sentences`.
pub fn mean_loss(params: &LstmParams, sentences: &[Vec<usize>]) -> Result<(f64, usize), LmError> {
    let mut nll = 0.0;
    let mut tokens = 0;
    for s in sentences {
        let mut state = LmState::zeros(&params.dims);
        let inputs = core::iter::once(BOS_ID).chain(s.iter().copied());
        let targets = s.iter().copied().chain(core::iter::once(EOS_ID));
        for (input, target) in inputs.zip(targets) {
            let (next, logits, _) = step_traced(params, &state, input, false)?;
            nll -= log_softmax_at(&logits, target);
            tokens += 1;
            state = next;
        }
    }
    if tokens == 0 {
        return Err(LmError::EmptyCorpus);
    }
    Ok((nll / tokens as f64, tokens))
}

pub fn perplexity(params: &LstmParams, sentences: &[Vec<usize>]) -> Result<f64, LmError> {
    Ok(exp(mean_loss(params, sentences)?.0))
}

/// Summed cross-entropy over one sentence, with its gradient added to `grad`.
fn accumulate_sentence(
    params: &LstmParams,
    grad: &mut LstmParams,
    sentence: &[usize],
    window: usize,
) -> Result<(f64, usize), LmError> {
    let d = &params.dims;
    let inputs: Vec<usize> = core::iter::once(BOS_ID).chain(sentence.iter().copied()).collect();
    let targets: Vec<usize> = sentence.iter().copied().chain(core::iter::once(EOS_ID)).collect();
    let top = d.top();
    let mut state = LmState::zeros(d);
    let mut nll = 0.0;

    for start in (0..inputs.len()).step_by(window) {
        let end = (start + window).min(inputs.len());
        let mut traces: Vec<Vec<LayerTrace>> = Vec::with_capacity(end - start);
        let mut probs: Vec<Vec<f64>> = Vec::with_capacity(end - start);
        let mut tops: Vec<Vec<f64>> = Vec::with_capacity(end - start);
        for t in start..end {
            let (next, logits, tr) = step_traced(params, &state, inputs[t], true)?;
            nll -= log_softmax_at(&logits, targets[t]);
            probs.push(softmax(&logits));
            tops.push(next.h[d.hidden.len() - 1].clone());
            traces.push(tr);
            state = next;
        }

        let mut dh_next: Vec<Vec<f64>> = d.hidden.iter().map(|&h| vec![0.0; h]).collect();
        let mut dc_next = dh_next.clone();
        for t in (0..end - start).rev() {
            let mut dl = core::mem::take(&mut probs[t]);
            dl[targets[start + t]] -= 1.0;
            let htop = &tops[t];
            let mut dh_above = vec![0.0; top];
            for (v, &g) in dl.iter().enumerate() {
                grad.output_bias[v] += g;
                let row = v * top;
                for k in 0..top {
                    grad.output[row + k] += g * htop[k];
                    dh_above[k] += params.output[row + k] * g;
                }
            }
            for l in (0..d.hidden.len()).rev() {
                let hn = d.hidden[l];
                let inp = d.input_size(l);
                let tr = &traces[t][l];
                let lp = &params.layers[l];
                let lg = &mut grad.layers[l];
                let mut dz = vec![0.0; 4 * hn];
                let mut dc_prev = vec![0.0; hn];
                for k in 0..hn {
                    let i = tr.gates[k];
                    let f = tr.gates[hn + k];
                    let g = tr.gates[2 * hn + k];
                    let o = tr.gates[3 * hn + k];
                    let tc = tr.tanh_c[k];
                    let dh = dh_above[k] + dh_next[l][k];
                    let d_o = dh * tc;
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[l][k];
                    dz[k] = dc * g * i * (1.0 - i);
                    dz[hn + k] = dc * tr.c_prev[k] * f * (1.0 - f);
                    dz[2 * hn + k] = dc * i * (1.0 - g * g);
                    dz[3 * hn + k] = d_o * o * (1.0 - o);
                    dc_prev[k] = dc * f;
                }
                let mut dx = vec![0.0; inp];
                let mut dh_prev = vec![0.0; hn];
                for (r, &dzr) in dz.iter().enumerate() {
                    lg.bias[r] += dzr;
                    let wi = &lp.w_in[r * inp..(r + 1) * inp];
                    let gi = &mut lg.w_in[r * inp..(r + 1) * inp];
                    for c in 0..inp {
                        gi[c] += dzr * tr.x[c];
                        dx[c] += wi[c] * dzr;
                    }
                    let wr = &lp.w_rec[r * hn..(r + 1) * hn];
                    let gr = &mut lg.w_rec[r * hn..(r + 1) * hn];
                    for c in 0..hn {
                        gr[c] += dzr * tr.h_prev[c];
                        dh_prev[c] += wr[c] * dzr;
                    }
                }
                dh_next[l] = dh_prev;
                dc_next[l] = dc_prev;
                dh_above = dx;
            }
            let e = d.embed_dim;
            let row = inputs[start + t] * e;
            for k in 0..e {
                grad.embedding[row + k] += dh_above[k];
            }
        }
    }
    Ok((nll, inputs.len()))
}

/// Mean per-token cross-entropy over `sentences` and its gradient, with
/// back-propagation truncated to `window` steps.
pub fn loss_and_gradient(
    params: &LstmParams,
    sentences: &[Vec<usize>],
    window: usize,
) -> Result<(f64, LstmParams), LmError> {
    if window == 0 {
        return Err(LmError::InvalidConfig("window must be positive"));
    }
    let mut grad = LstmParams::zeros(&params.dims)?;
    let mut nll = 0.0;
    let mut tokens = 0;
    for s in sentences {
        let (l, n) = accumulate_sentence(params, &mut grad, s, window)?;
        nll += l;
        tokens += n;
    }
    if tokens == 0 {
        return Err(LmError::EmptyCorpus);
    }
    let scale = 1.0 / tokens as f64;
    for b in grad.blocks_mut() {
        for v in b.iter_mut() {
            *v *= scale;
        }
    }
    Ok((nll * scale, grad))
}

/// Split off every `every`-th sentence (1-based positions `every, 2·every, …`)
/// as held-out data. Corpora too small to spare one keep everything for
/// training and evaluate on it.
pub fn heldout_split(sentences: &[Vec<usize>], every: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        if (i + 1) % every == 0 {
            held.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    if held.is_empty() || train.is_empty() {
        return (sentences.to_vec(), sentences.to_vec());
    }
    (train, held)
}

/// Train a model on word-id sentences (without sentence markers).
pub fn train(
    sentences: &[Vec<usize>],
    dims: &LstmDims,
    config: &TrainingConfig,
) -> Result<(LstmParams, TrainingReport), LmError> {
    config.validate()?;
    dims.validate()?;
    if sentences.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    for s in sentences {
        if let Some(&bad) = s.iter().find(|&&t| t >= dims.vocab_size) {
            return Err(LmError::TokenOutOfRange {
                token: bad,
                vocab_size: dims.vocab_size,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params(dims, &mut rng)?;
    let (train_set, held) = heldout_split(sentences, config.heldout_every);
    let initial = perplexity(&params, &held)?;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut steps = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_nll = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let sents: Vec<Vec<usize>> = batch.iter().map(|&i| train_set[i].clone()).collect();
            steps += 1;
            let diverged = LmError::Diverged {
                step: steps,
                learning_rate: config.learning_rate,
            };
            let (loss, mut grad) = match loss_and_gradient(&params, &sents, config.bptt_window) {
                Err(LmError::NonFinite) => return Err(diverged),
                other => other?,
            };
            let norm = sqrt(grad.blocks().iter().map(|b| b.iter().map(|v| v * v).sum::<f64>()).sum());
            if !loss.is_finite() || !norm.is_finite() {
                return Err(diverged);
            }
            let scale = if norm > config.clip_norm {
                config.learning_rate * config.clip_norm / norm
            } else {
                config.learning_rate
            };
            for (p, g) in params.blocks_mut().into_iter().zip(grad.blocks_mut()) {
                for (pv, gv) in p.iter_mut().zip(g.iter()) {
                    *pv -= scale * gv;
                }
            }
            epoch_nll += loss;
            epoch_batches += 1;
        }
        let heldout_perplexity = match perplexity(&params, &held) {
            Err(LmError::NonFinite) => f64::NAN,
            other => other?,
        };
        if !heldout_perplexity.is_finite() || !params.all_finite() {
            return Err(LmError::Diverged {
                step: steps,
                learning_rate: config.learning_rate,
            });
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: epoch_nll / epoch_batches.max(1) as f64,
            heldout_perplexity,
        });
    }
    Ok((
        params,
        TrainingReport {
            initial_heldout_perplexity: initial,
            epochs,
            steps,
            train_sentences: train_set.len(),
            heldout_sentences: held.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dims() -> LstmDims {
        LstmDims {
            vocab_size: 5,
            embed_dim: 2,
            hidden: vec![2, 2],
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let dims = tiny_dims();
        assert!(dims.param_count() <= 200);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = init_params(&dims, &mut rng).unwrap();
        for b in params.blocks_mut() {
            for v in b.iter_mut() {
                *v *= 5.0;
            }
        }
        let sents = vec![vec![3, 4, 3], vec![4, 4], vec![3]];
        let (_, grad) = loss_and_gradient(&params, &sents, 100).unwrap();
        let flat = params.to_flat();
        let g = grad.to_flat();
        let h = 1e-4;
        for i in 0..flat.len() {
            let mut up = flat.clone();
            up[i] += h;
            let mut dn = flat.clone();
            dn[i] -= h;
            let fu = mean_loss(&LstmParams::from_flat(&dims, &up).unwrap(), &sents).unwrap().0;
            let fd = mean_loss(&LstmParams::from_flat(&dims, &dn).unwrap(), &sents).unwrap().0;
            let num = (fu - fd) / (2.0 * h);
            let rel = (num - g[i]).abs() / g[i].abs().max(num.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} numeric {num}", g[i]);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let sents: Vec<Vec<usize>> = (0..12).map(|i| vec![3 + i % 2, 4, 3]).collect();
        let cfg = TrainingConfig {
            epochs: 2,
            batch_size: 4,
            heldout_every: 4,
            ..TrainingConfig::default()
        };
        let (a, ra) = train(&sents, &tiny_dims(), &cfg).unwrap();
        let (b, rb) = train(&sents, &tiny_dims(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let (c, _) = train(&sents, &tiny_dims(), &TrainingConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { heldout_every: 1, ..Default::default() }.validate().is_err());
    }
}
