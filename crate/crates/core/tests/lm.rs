mod common;

use common::random_network;
use n400_core::lm::{
    build_vocab, init_params, loss_and_gradient, lstm_step, next_word_distribution, perplexity, surprisal, tokenize,
    train, LmError, LmState, LstmDims, LstmParams, TrainingConfig, Vocabulary, BOS_ID, EOS_ID, UNK_ID,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn forward_pass_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let (oracle, params, prefix) = random_network(&mut rng);
        let mut state = LmState::zeros(&params.dims);
        let mut logits = Vec::new();
        for &t in &prefix {
            let (s, l) = lstm_step(&params, &state, t).unwrap();
            state = s;
            logits = l;
        }
        let want = oracle.logits(&prefix);
        for (a, b) in logits.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9, "case {case}: {a} vs {b}");
        }
        let target_index = prefix.len() - 1;
        let mut ids = prefix.clone();
        ids.push(rng.random_range(3..oracle.v));
        let got = surprisal(&params, &ids, target_index).unwrap();
        let want = oracle.surprisal(&ids, target_index);
        assert!((got - want).abs() <= 1e-9, "case {case}: {got} vs {want}");
    }
}

#[test]
fn hand_sized_network_matches_oracle() {
    // 2 units, 3 words (reserved ids only), fixed weights
    let dims = LstmDims {
        vocab_size: 3,
        embed_dim: 2,
        hidden: vec![2],
    };
    let flat: Vec<f64> = (0..dims.param_count()).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.1).collect();
    let params = LstmParams::from_flat(&dims, &flat).unwrap();
    let oracle = common::OracleLstm {
        v: 3,
        e: 2,
        hidden: vec![2],
        flat,
    };
    let ids = [BOS_ID, 0, 2, 1];
    let got = surprisal(&params, &ids, 2).unwrap();
    assert!((got - oracle.surprisal(&ids, 2)).abs() <= 1e-9);
}

#[test]
fn zero_parameters_give_zero_logits() {
    let dims = LstmDims {
        vocab_size: 6,
        embed_dim: 3,
        hidden: vec![4, 2],
    };
    let p = LstmParams::zeros(&dims).unwrap();
    let mut state = LmState::zeros(&dims);
    for t in [1, 4, 5, 0] {
        let (s, l) = lstm_step(&p, &state, t).unwrap();
        assert!(l.iter().all(|&v| v == 0.0));
        state = s;
    }
}

#[test]
fn distributions_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let (_, params, prefix) = random_network(&mut rng);
        let p = next_word_distribution(&params, &prefix).unwrap();
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() <= 1e-6);
        assert!(p.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn uniform_model_gives_three_bits() {
    let dims = LstmDims {
        vocab_size: 8,
        embed_dim: 2,
        hidden: vec![3],
    };
    let p = LstmParams::zeros(&dims).unwrap();
    for target in 3..8 {
        let ids = [BOS_ID, 4, 5, target];
        assert_eq!(surprisal(&p, &ids, 2).unwrap(), 3.0);
    }
}

#[test]
fn certain_target_gives_zero_bits() {
    let dims = LstmDims {
        vocab_size: 8,
        embed_dim: 2,
        hidden: vec![3],
    };
    let mut p = LstmParams::zeros(&dims).unwrap();
    p.output_bias[6] = 1000.0;
    let s = surprisal(&p, &[BOS_ID, 6], 0).unwrap();
    assert_eq!(s, 0.0);
    assert!(s.is_sign_positive());
}

#[test]
fn raising_target_logit_lowers_surprisal() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let (_, mut params, mut ids) = random_network(&mut rng);
        let target = rng.random_range(3..params.dims.vocab_size);
        let ti = ids.len() - 1;
        ids.push(target);
        let before = surprisal(&params, &ids, ti).unwrap();
        params.output_bias[target] += rng.random_range(0.01..1.0);
        let after = surprisal(&params, &ids, ti).unwrap();
        assert!(after < before, "{after} !< {before}");
    }
}

#[test]
fn appending_tokens_never_changes_earlier_surprisal() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let (_, params, mut ids) = random_network(&mut rng);
        let ti = ids.len() - 1;
        ids.push(rng.random_range(3..params.dims.vocab_size));
        let base = surprisal(&params, &ids, ti).unwrap();
        for _ in 0..4 {
            ids.push(rng.random_range(0..params.dims.vocab_size));
            assert_eq!(surprisal(&params, &ids, ti).unwrap(), base);
        }
    }
}

#[test]
fn invalid_inputs_are_reported() {
    let dims = LstmDims {
        vocab_size: 5,
        embed_dim: 2,
        hidden: vec![2],
    };
    let p = LstmParams::zeros(&dims).unwrap();
    assert!(matches!(
        lstm_step(&p, &LmState::zeros(&dims), 5),
        Err(LmError::TokenOutOfRange { .. })
    ));
    assert_eq!(surprisal(&p, &[BOS_ID, UNK_ID], 0), Err(LmError::UnknownTarget));
    assert!(matches!(surprisal(&p, &[BOS_ID, 3], 1), Err(LmError::TargetOutOfRange { .. })));
    let mut bad = p.clone();
    bad.output_bias[0] = f64::NAN;
    assert_eq!(next_word_distribution(&bad, &[BOS_ID]), Err(LmError::NonFinite));
}

#[test]
fn vocabulary_examples() {
    let v = build_vocab("a b a c a b".split(' '), 5).unwrap();
    assert_eq!(v.words(), ["a", "b"]);
    assert_eq!(v.id("c"), UNK_ID);
    let v = build_vocab("a b a c a b".split(' '), 3).unwrap();
    assert_eq!(v.len(), 3);
    assert!(["a", "b", "c"].iter().all(|w| v.id(w) == UNK_ID));
    // x, y and z tie; z was seen last and loses the final slot
    let v = build_vocab("x x y z z y".split(' '), 5).unwrap();
    assert_eq!(v.words(), ["x", "y"]);
    assert_eq!(build_vocab(std::iter::empty(), 5), Err(LmError::EmptyCorpus));
}

#[test]
fn tokenize_examples() {
    let v = Vocabulary::from_words(&["the", "pizza", "was"]).unwrap();
    let (ids, oov) = tokenize(&words("the pizza was"), &v);
    assert_eq!(ids, vec![BOS_ID, 3, 4, 5]);
    assert!(oov.is_empty());
    let (ids, oov) = tokenize(&words("the pizza was hot"), &v);
    assert_eq!(ids[4], UNK_ID);
    assert_eq!(oov, vec![3]);
    let (ids, oov) = tokenize(&[], &v);
    assert_eq!(ids, vec![BOS_ID]);
    assert!(oov.is_empty());
}

#[test]
fn gradient_matches_central_differences() {
    let dims = LstmDims {
        vocab_size: 6,
        embed_dim: 3,
        hidden: vec![3],
    };
    assert!(dims.param_count() <= 200);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut params = init_params(&dims, &mut rng).unwrap();
    for b in params.blocks_mut() {
        for v in b.iter_mut() {
            *v *= 5.0;
        }
    }
    let sentences = vec![vec![3, 4, 5, 3], vec![5, 5, 4], vec![4, 3]];
    let (_, grad) = loss_and_gradient(&params, &sentences, 100).unwrap();
    let analytic = grad.to_flat();
    let flat = params.to_flat();
    let h = 1e-4;
    for i in 0..flat.len() {
        let mut f = flat.clone();
        f[i] += h;
        let up = loss_and_gradient(&LstmParams::from_flat(&dims, &f).unwrap(), &sentences, 100).unwrap().0;
        f[i] -= 2.0 * h;
        let down = loss_and_gradient(&LstmParams::from_flat(&dims, &f).unwrap(), &sentences, 100).unwrap().0;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
        assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", analytic[i]);
    }
}

fn small_dims(v: usize, hidden: usize) -> LstmDims {
    LstmDims {
        vocab_size: v,
        embed_dim: 8,
        hidden: vec![hidden],
    }
}

#[test]
fn deterministic_corpus_reaches_unit_perplexity() {
    // ids 3 = a, 4 = b
    let sentences: Vec<Vec<usize>> = (0..100).map(|_| vec![3, 4, 3, 4]).collect();
    let config = TrainingConfig {
        epochs: 50,
        learning_rate: 1.0,
        batch_size: 4,
        seed: 3,
        ..TrainingConfig::default()
    };
    let (_, report) = train(&sentences, &small_dims(5, 8), &config).unwrap();
    let last = report.epochs.last().unwrap().heldout_perplexity;
    assert!(last < report.initial_heldout_perplexity);
    assert!(last < 1.05, "held-out perplexity {last}");
}

#[test]
fn uniform_corpus_cannot_beat_its_entropy() {
    let (k, n) = (4usize, 10usize);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let sentences: Vec<Vec<usize>> = (0..400)
        .map(|_| (0..n).map(|_| 3 + rng.random_range(0..k)).collect())
        .collect();
    let config = TrainingConfig {
        epochs: 15,
        learning_rate: 0.5,
        batch_size: 8,
        heldout_every: 5,
        seed: 4,
        ..TrainingConfig::default()
    };
    let (params, report) = train(&sentences, &small_dims(3 + k, 8), &config).unwrap();
    // EOS is predictable from the length, so the entropy floor per token
    // (including EOS) is n·ln k / (n + 1)
    let floor = (k as f64).powf(n as f64 / (n as f64 + 1.0));
    let last = report.epochs.last().unwrap().heldout_perplexity;
    assert!(last >= floor * 0.98, "{last} below floor {floor}");
    assert!(last <= k as f64 * 1.15, "{last} far above {k}");
    let fresh: Vec<Vec<usize>> = (0..200)
        .map(|_| (0..n).map(|_| 3 + rng.random_range(0..k)).collect())
        .collect();
    assert!(perplexity(&params, &fresh).unwrap() >= floor * 0.98);
}

#[test]
fn training_is_reproducible_and_lowers_heldout_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sentences: Vec<Vec<usize>> = (0..60)
        .map(|_| {
            let start = 3 + rng.random_range(0..3);
            vec![start, start + 3, 9, EOS_ID.max(3)]
        })
        .collect();
    let config = TrainingConfig {
        epochs: 5,
        batch_size: 4,
        ..TrainingConfig::default()
    };
    let dims = small_dims(10, 6);
    let (a, ra) = train(&sentences, &dims, &config).unwrap();
    let (b, rb) = train(&sentences, &dims, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert!(ra.epochs.last().unwrap().heldout_perplexity < ra.initial_heldout_perplexity);
    let (c, _) = train(&sentences, &dims, &TrainingConfig { seed: 99, ..config }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn divergence_is_reported() {
    let sentences: Vec<Vec<usize>> = (0..20).map(|i| vec![3 + i % 3, 4, 5]).collect();
    let config = TrainingConfig {
        epochs: 3,
        learning_rate: 1e300,
        clip_norm: 1e300,
        ..TrainingConfig::default()
    };
    match train(&sentences, &small_dims(6, 4), &config) {
        Err(LmError::Diverged { learning_rate, .. }) => assert_eq!(learning_rate, 1e300),
        other => panic!("expected divergence, got {other:?}"),
    }
}
