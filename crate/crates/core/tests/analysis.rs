mod common;

use common::{normal, permuted};
use n400_core::analysis::{
    classify, compare_patterns, compute_surprisals, derive_pattern, AnalysisConfig, AnalysisError, Classification,
    ExclusionReason, Observed, PairSource, SurprisalRecord, Verdict,
};
use n400_core::corpus::{parse_design, parse_expected_pattern, StimulusItem};
use n400_core::lm::{LstmDims, LstmParams, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn records(rng: &mut ChaCha8Rng, exp: &str, items: usize, conds: &[(&str, f64)]) -> Vec<SurprisalRecord> {
    let mut out = Vec::new();
    for i in 0..items {
        let u = normal(rng, 1.0);
        for (c, shift) in conds {
            out.push(SurprisalRecord {
                experiment: exp.into(),
                item: format!("{i}"),
                condition: (*c).into(),
                target: format!("w{i}"),
                surprisal: Some(10.0 + shift + u + normal(rng, 1.0)),
                excluded: None,
            });
        }
    }
    out
}

fn brute_classify(v: &[Verdict]) -> Classification {
    let evaluable: Vec<&Verdict> = v.iter().filter(|v| **v != Verdict::Unevaluable).collect();
    if evaluable.is_empty() {
        Classification::Unevaluable
    } else if evaluable.iter().all(|v| **v == Verdict::Match) {
        Classification::FullMatch
    } else if evaluable.iter().all(|v| **v == Verdict::Mismatch) {
        Classification::Mismatch
    } else {
        Classification::Partial
    }
}

#[test]
fn classification_matches_brute_force() {
    let all = [Verdict::Match, Verdict::Mismatch, Verdict::Unevaluable];
    for k in 1..=4u32 {
        for code in 0..3usize.pow(k) {
            let v: Vec<Verdict> = (0..k).map(|j| all[code / 3usize.pow(j) % 3]).collect();
            assert_eq!(classify(&v), brute_classify(&v), "{v:?}");
        }
    }
    assert_eq!(classify(&[]), Classification::Unevaluable);
}

#[test]
fn lower_condition_is_detected() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs = records(&mut rng, "uk2010e1", 30, &[("typical", -2.0), ("atypical", 0.0)]);
        let d = derive_pattern(&recs, &AnalysisConfig::default()).unwrap();
        let (obs, pair) = d.relation("typical", "atypical").unwrap();
        assert_eq!(obs, Observed::Lower);
        assert!(pair.significant && pair.p_value.unwrap() < 0.05);
        assert_eq!(pair.source, PairSource::Selected);
        let exp = parse_expected_pattern("uk2010e1: typical LOWER atypical\n").unwrap();
        let cmp = compare_patterns(&d, &exp);
        assert_eq!(cmp.classification, Classification::FullMatch);
        assert!(cmp.relations[0].estimate.unwrap() < 0.0);
        assert_eq!(cmp.n_items_analyzed, 60);
    }
}

#[test]
fn permuted_labels_rarely_give_significant_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let base = records(&mut rng, "e", 30, &[("A", -1.0), ("B", 0.0), ("C", 1.0)]);
    let mut clean = 0;
    for _ in 0..100 {
        let mut recs = base.clone();
        let labels: Vec<String> = recs.iter().map(|r| r.condition.clone()).collect();
        let shuffled = permuted(&mut rng, &labels);
        // keep the design valid: one record per item and condition
        let mut by_item: Vec<Vec<String>> = vec![Vec::new(); 30];
        for (r, l) in recs.iter().zip(shuffled) {
            by_item[r.item.parse::<usize>().unwrap()].push(l);
        }
        for r in recs.iter_mut() {
            let i: usize = r.item.parse().unwrap();
            r.condition = by_item[i].remove(0);
        }
        let d = derive_pattern(&recs, &AnalysisConfig::default()).unwrap();
        if d.pairs.iter().all(|p| !p.significant) {
            clean += 1;
        }
    }
    assert!(clean >= 90, "{clean}/100");
}

#[test]
fn equal_conditions_drop_the_predictor() {
    let mut dropped = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let recs = records(&mut rng, "e", 30, &[("A", 0.0), ("B", 0.0), ("C", 0.0)]);
        let d = derive_pattern(&recs, &AnalysisConfig::default()).unwrap();
        assert_eq!(d.pairs.len(), 3);
        let pred = &d.predictors[0];
        if !pred.retained {
            dropped += 1;
            assert!(d.selected_formula.fixed.is_empty());
            for p in &d.pairs {
                assert_eq!(p.observed(), Observed::NoDifference);
                assert_eq!(p.source, PairSource::Dropped);
                assert!(p.p_value.is_none());
            }
        }
    }
    assert!(dropped >= 44, "{dropped}/50");
}

#[test]
fn partial_and_no_difference_outcomes() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let recs = records(&mut rng, "k93", 40, &[("BC", -3.0), ("R", 0.0), ("U", 0.0)]);
    let d = derive_pattern(&recs, &AnalysisConfig::default()).unwrap();
    let exp = parse_expected_pattern("k93: BC LOWER R\nk93: R LOWER U\n").unwrap();
    let cmp = compare_patterns(&d, &exp);
    assert_eq!(cmp.relations[0].verdict, Verdict::Match);
    assert_eq!(cmp.relations[1].verdict, Verdict::Mismatch);
    assert_eq!(cmp.classification, Classification::Partial);

    let exp = parse_expected_pattern("ito2016e1: R NO_DIFFERENCE U\n").unwrap();
    let mut d2 = d.clone();
    d2.experiment = "ito2016e1".into();
    let cmp = compare_patterns(&d2, &exp);
    assert_eq!(cmp.relations[0].verdict, Verdict::Match);
    assert_eq!(cmp.classification, Classification::FullMatch);

    let exp = parse_expected_pattern("k93: R LOWER BC\n").unwrap();
    assert_eq!(compare_patterns(&d, &exp).classification, Classification::Mismatch);
}

#[test]
fn directions_are_antisymmetric() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let shift = rng.random_range(-1.5..1.5);
        let recs = records(&mut rng, "e", 20, &[("A", 0.0), ("B", shift), ("C", -shift)]);
        let d = derive_pattern(&recs, &AnalysisConfig::default()).unwrap();
        for (a, b) in [("A", "B"), ("A", "C"), ("B", "C")] {
            let (x, _) = d.relation(a, b).unwrap();
            let (y, _) = d.relation(b, a).unwrap();
            assert_eq!(x == Observed::Lower, y == Observed::Higher);
            assert_eq!(x, y.flipped());
        }
        for p in &d.pairs {
            assert_eq!(p.significant, p.p_value.is_some_and(|v| v < d.alpha));
        }
    }
}

#[test]
fn fully_excluded_condition_is_unevaluable() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut recs = records(&mut rng, "e", 20, &[("A", -2.0), ("B", 0.0), ("C", 0.0)]);
    for r in recs.iter_mut().filter(|r| r.condition == "C") {
        r.surprisal = None;
        r.excluded = Some(ExclusionReason::OovTarget);
    }
    let d = derive_pattern(&recs, &AnalysisConfig::default()).unwrap();
    assert_eq!(d.n_excluded, 20);
    let exp = parse_expected_pattern("e: A LOWER B\ne: B LOWER C\n").unwrap();
    let cmp = compare_patterns(&d, &exp);
    assert_eq!(cmp.relations[1].verdict, Verdict::Unevaluable);
    assert!(cmp.relations[1].note.is_some());
    assert_eq!(cmp.unevaluable(), 1);
    assert_eq!(cmp.classification, Classification::FullMatch);
    assert_eq!(cmp.n_excluded, 20);
}

#[test]
fn insufficient_data_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let recs = records(&mut rng, "e", 1, &[("A", 0.0), ("B", 0.0)]);
    assert!(matches!(
        derive_pattern(&recs, &AnalysisConfig::default()),
        Err(AnalysisError::InsufficientData(_))
    ));
    assert!(derive_pattern(&[], &AnalysisConfig::default()).is_err());
}

#[test]
fn forced_contrast_uses_the_full_model() {
    let design = parse_design(
        "factor typicality typical atypical\nfactor quantifier most few\n\
         cell tm typicality=typical quantifier=most\ncell tf typicality=typical quantifier=few\n\
         cell am typicality=atypical quantifier=most\ncell af typicality=atypical quantifier=few\n\
         interaction typicality quantifier\ncontrast tm tf\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    // quantifier matters only for typical items
    let recs = records(&mut rng, "uk2010e2", 40, &[("tm", -2.0), ("tf", 0.0), ("am", 0.5), ("af", 0.5)]);
    let config = AnalysisConfig {
        alpha: 0.05,
        design,
    };
    let d = derive_pattern(&recs, &config).unwrap();
    let (obs, pair) = d.relation("tm", "tf").unwrap();
    assert_eq!(pair.source, PairSource::Forced);
    assert_eq!(obs, Observed::Lower);
    // marginal relations among factor levels are also available
    assert!(d.relation("typical", "atypical").is_some());
    assert!(d.relation("most", "few").is_some());
}

fn stim(item: &str, cond: &str, words: &[&str], target: usize) -> StimulusItem {
    StimulusItem {
        experiment: "e".into(),
        item: item.into(),
        condition: cond.into(),
        tokens: words.iter().map(|w| w.to_string()).collect(),
        target_index: target,
    }
}

#[test]
fn surprisal_records_and_exclusions() {
    let vocab = Vocabulary::from_words(&["the", "cat", "sat", "dog"]).unwrap();
    let dims = LstmDims {
        vocab_size: vocab.len(),
        embed_dim: 3,
        hidden: vec![4],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let flat: Vec<f64> = (0..dims.param_count()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let params = LstmParams::from_flat(&dims, &flat).unwrap();
    let good = [
        stim("1", "A", &["the", "cat", "sat"], 1),
        stim("2", "A", &["the", "dog", "sat"], 2),
        stim("1", "B", &["the", "zebra", "sat"], 2),
    ];
    let oov = stim("2", "B", &["the", "zebra"], 1);
    let (alone, _) = compute_surprisals(&params, &vocab, &good);
    let mut mixed_items = vec![oov.clone()];
    mixed_items.extend(good.iter().cloned());
    let (mixed, cov) = compute_surprisals(&params, &vocab, &mixed_items);
    assert_eq!(mixed.len(), 4);
    assert_eq!(mixed[0].excluded, Some(ExclusionReason::OovTarget));
    assert!(mixed[0].surprisal.is_none());
    assert_eq!(&mixed[1..], &alone[..]);
    assert!(alone.iter().all(|r| r.surprisal.is_some_and(|s| s.is_finite() && s >= 0.0)));
    assert_eq!(cov.analyzed, 3);
    assert_eq!(cov.excluded, 1);
    assert_eq!(cov.per_condition[0].condition, "B");
    assert!(!cov.warnings.is_empty());

    let (none, cov) = compute_surprisals(&params, &vocab, &[]);
    assert!(none.is_empty());
    assert_eq!(cov.analyzed, 0);
    assert!(cov.warnings.iter().any(|w| w.contains('0')));
}
