//! Shared oracles and simulators for the integration tests.
#![allow(dead_code)]

use n400_core::stats::{Dataset, Factor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).unwrap().sample(rng)
}

/// One-sample Kolmogorov–Smirnov test against U(0, 1): returns (D, p).
/// The p-value uses the asymptotic Kolmogorov distribution with Stephens'
/// small-sample correction.
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((v - lo).abs()).max((hi - v).abs());
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        p += 2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    (d, p.clamp(0.0, 1.0))
}

/// Balanced one-way layout: `groups` groups of `reps` replicates.
pub fn one_way(rng: &mut ChaCha8Rng, groups: usize, reps: usize, sd_group: f64, sd_resid: f64) -> Dataset {
    let mut y = Vec::new();
    let mut g = Vec::new();
    for i in 0..groups {
        let u = normal(rng, sd_group);
        for _ in 0..reps {
            y.push(50.0 + u + normal(rng, sd_resid));
            g.push(format!("g{i:03}"));
        }
    }
    Dataset::new(y, vec![], vec![Factor::from_labels("item", &g)]).unwrap()
}

/// Items each seen in every condition; `effects[c]` shifts condition `c`.
pub fn within_items(
    rng: &mut ChaCha8Rng,
    items: usize,
    effects: &[f64],
    sd_item: f64,
    sd_resid: f64,
) -> Dataset {
    let mut y = Vec::new();
    let mut cond = Vec::new();
    let mut item = Vec::new();
    for i in 0..items {
        let u = normal(rng, sd_item);
        for (c, e) in effects.iter().enumerate() {
            y.push(10.0 + u + e + normal(rng, sd_resid));
            cond.push(format!("c{c}"));
            item.push(format!("i{i:03}"));
        }
    }
    Dataset::new(
        y,
        vec![Factor::from_labels("cond", &cond)],
        vec![Factor::from_labels("item", &item)],
    )
    .unwrap()
}

/// Random permutation of `v` (Fisher–Yates).
pub fn permuted<T: Clone>(rng: &mut ChaCha8Rng, v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

// ---------- numeric-integration oracles for the distribution functions

/// ln Γ(z) by upward recurrence to z ≥ 20 and the Stirling series.
pub fn stirling_ln_gamma(z: f64) -> f64 {
    let mut shift = 0.0;
    let mut z = z;
    while z < 20.0 {
        shift += z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2)
        - 1.0 / (1680.0 * z * z2 * z2 * z2)
        + 1.0 / (1188.0 * z * z2 * z2 * z2 * z2);
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // split into panels so the adaptive rule starts from a sane mesh
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            simpson(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// `∫₀ˣ c·t^(a-1)·g(t) dt` for a density with a power singularity at zero:
/// on `[0, min(x, 1)]` the substitution `u = t^a` removes the singularity.
fn power_integral(a: f64, log_g: &dyn Fn(f64) -> f64, log_c: f64, x: f64, tol: f64) -> f64 {
    let cut = x.min(1.0);
    let near = integrate(&|u: f64| {
        let t = u.powf(1.0 / a);
        (log_c + log_g(t)).exp() / a
    }, 0.0, cut.powf(a), tol);
    let far = if x > 1.0 {
        integrate(&|t: f64| (log_c + (a - 1.0) * t.ln() + log_g(t)).exp(), 1.0, x, tol)
    } else {
        0.0
    };
    near + far
}

pub fn oracle_chi_square_sf(x: f64, k: f64) -> f64 {
    let a = k / 2.0;
    let log_c = -a * 2f64.ln() - stirling_ln_gamma(a);
    1.0 - power_integral(a, &|t| -t / 2.0, log_c, x, 1e-14)
}

pub fn oracle_t_two_sided(x: f64, nu: f64) -> f64 {
    let log_c = stirling_ln_gamma((nu + 1.0) / 2.0) - stirling_ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    let half = integrate(&|t: f64| (log_c - (nu + 1.0) / 2.0 * (1.0 + t * t / nu).ln()).exp(), 0.0, x.abs(), 1e-14);
    1.0 - 2.0 * half
}

pub fn oracle_f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    let a = d1 / 2.0;
    let log_c = stirling_ln_gamma((d1 + d2) / 2.0) - stirling_ln_gamma(a) - stirling_ln_gamma(d2 / 2.0)
        + a * (d1 / d2).ln();
    1.0 - power_integral(a, &|t| -(d1 + d2) / 2.0 * (1.0 + d1 * t / d2).ln(), log_c, x, 1e-14)
}

// ---------- scalar-loop LSTM oracle

/// Naive forward pass written gate by gate from the flat parameter layout:
/// embedding (V×E), then per layer W_in (4H×In), W_rec (4H×H), b (4H) with
/// gate blocks i, f, g, o, then output weights (V×H) and output bias (V).
pub struct OracleLstm {
    pub v: usize,
    pub e: usize,
    pub hidden: Vec<usize>,
    pub flat: Vec<f64>,
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl OracleLstm {
    pub fn logits(&self, prefix: &[usize]) -> Vec<f64> {
        let layers = self.hidden.len();
        let mut h: Vec<Vec<f64>> = self.hidden.iter().map(|&n| vec![0.0; n]).collect();
        let mut c = h.clone();
        let mut out = vec![0.0; self.v];
        for &tok in prefix {
            let mut off = 0;
            let mut x: Vec<f64> = (0..self.e).map(|j| self.flat[tok * self.e + j]).collect();
            off += self.v * self.e;
            for l in 0..layers {
                let hn = self.hidden[l];
                let inp = x.len();
                let w_in = off;
                let w_rec = w_in + 4 * hn * inp;
                let bias = w_rec + 4 * hn * hn;
                off = bias + 4 * hn;
                let mut new_h = vec![0.0; hn];
                let mut new_c = vec![0.0; hn];
                for k in 0..hn {
                    let mut z = [0.0f64; 4];
                    for gate in 0..4 {
                        let row = gate * hn + k;
                        let mut s = self.flat[bias + row];
                        for j in 0..inp {
                            s += self.flat[w_in + row * inp + j] * x[j];
                        }
                        for j in 0..hn {
                            s += self.flat[w_rec + row * hn + j] * h[l][j];
                        }
                        z[gate] = s;
                    }
                    let i = sig(z[0]);
                    let f = sig(z[1]);
                    let g = z[2].tanh();
                    let o = sig(z[3]);
                    new_c[k] = f * c[l][k] + i * g;
                    new_h[k] = o * new_c[k].tanh();
                }
                h[l] = new_h.clone();
                c[l] = new_c;
                x = new_h;
            }
            let top = self.hidden[layers - 1];
            for w in 0..self.v {
                let mut s = self.flat[off + self.v * top + w];
                for k in 0..top {
                    s += self.flat[off + w * top + k] * x[k];
                }
                out[w] = s;
            }
        }
        out
    }

    pub fn distribution(&self, prefix: &[usize]) -> Vec<f64> {
        let l = self.logits(prefix);
        let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    /// -log2 P(ids[target_index + 1] | ids[..=target_index]).
    pub fn surprisal(&self, ids: &[usize], target_index: usize) -> f64 {
        let p = self.distribution(&ids[..=target_index]);
        -p[ids[target_index + 1]].max(1e-300).log2()
    }
}

/// A random small network (≤ 4 units per layer) with its oracle twin and a
/// random prefix starting at the begin-of-sentence id.
pub fn random_network(rng: &mut ChaCha8Rng) -> (OracleLstm, n400_core::lm::LstmParams, Vec<usize>) {
    use n400_core::lm::{LstmDims, LstmParams, BOS_ID};
    let v = rng.random_range(4..=9);
    let e = rng.random_range(1..=4);
    let layers = rng.random_range(1..=2);
    let hidden: Vec<usize> = (0..layers).map(|_| rng.random_range(1..=4)).collect();
    let dims = LstmDims {
        vocab_size: v,
        embed_dim: e,
        hidden: hidden.clone(),
    };
    let scale = rng.random_range(0.1..2.0);
    let flat: Vec<f64> = (0..dims.param_count()).map(|_| rng.random_range(-scale..scale)).collect();
    let params = LstmParams::from_flat(&dims, &flat).unwrap();
    let len = rng.random_range(1..=6);
    let mut prefix = vec![BOS_ID];
    prefix.extend((0..len).map(|_| rng.random_range(0..v)));
    (OracleLstm { v, e, hidden, flat }, params, prefix)
}
