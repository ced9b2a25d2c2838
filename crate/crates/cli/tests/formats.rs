use n400::formats::{
    read_surprisals, read_vocabulary, read_weights, vocabulary_hash, write_surprisals, write_vocabulary, write_weights,
    WeightsError, WeightsHeader, WEIGHTS_FORMAT_VERSION,
};
use n400_core::analysis::{ExclusionReason, SurprisalRecord};
use n400_core::lm::{init_params, LstmDims, LstmParams, Vocabulary};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample() -> (Vocabulary, WeightsHeader, LstmParams) {
    let vocab = Vocabulary::from_words(&["the", "dog", "barked"]).unwrap();
    let dims = LstmDims {
        vocab_size: vocab.len(),
        embed_dim: 4,
        hidden: vec![5, 3],
    };
    let params = init_params(&dims, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let header = WeightsHeader {
        vocab_hash: vocabulary_hash(&vocab),
        config_hash: [7; 32],
        seed: 42,
        dims,
    };
    (vocab, header, params)
}

fn encoded() -> (Vec<u8>, [u8; 32]) {
    let (_, header, params) = sample();
    let mut bytes = Vec::new();
    write_weights(&mut bytes, &header, &params).unwrap();
    (bytes, header.vocab_hash)
}

#[test]
fn weights_round_trip_bit_exactly() {
    let (_, header, params) = sample();
    let (bytes, hash) = encoded();
    let (h, p) = read_weights(&mut bytes.as_slice(), Some(&hash)).unwrap();
    assert_eq!(h, header);
    let (a, b) = (p.to_flat(), params.to_flat());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn weights_reject_damage() {
    let (bytes, hash) = encoded();
    let read = |b: &[u8]| read_weights(&mut &b[..], Some(&hash)).unwrap_err();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read(&bad), WeightsError::BadMagic));

    let mut bad = bytes.clone();
    bad[8..12].copy_from_slice(&(WEIGHTS_FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(read(&bad), WeightsError::Version { .. }));

    assert!(matches!(read(&bytes[..bytes.len() - 3]), WeightsError::Truncated(_)));
    assert!(matches!(read(&bytes[..40]), WeightsError::Truncated(_)));

    let mut bad = bytes.clone();
    bad.push(0);
    assert!(matches!(read(&bad), WeightsError::Trailing { trailing: 1 }));

    // vocabulary size field sits after magic, version, two hashes and seed
    let mut bad = bytes.clone();
    bad[84..92].copy_from_slice(&9u64.to_le_bytes());
    assert!(matches!(read(&bad), WeightsError::Dimensions(_)));

    let other = vocabulary_hash(&Vocabulary::from_words(&["cat"]).unwrap());
    assert!(matches!(
        read_weights(&mut bytes.as_slice(), Some(&other)).unwrap_err(),
        WeightsError::VocabularyHash { .. }
    ));

    let mut bad = bytes.clone();
    let n = bad.len();
    bad[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(read(&bad), WeightsError::NonFinite));
}

#[test]
fn vocabulary_round_trip_ignores_provenance() {
    let (vocab, _, _) = sample();
    let text = write_vocabulary(&vocab, "# seed=1\n");
    let back = read_vocabulary(&text).unwrap();
    assert_eq!(back, vocab);
    assert_eq!(vocabulary_hash(&back), vocabulary_hash(&vocab));
    assert!(read_vocabulary("the\nbig dog\n").is_err());
    assert!(read_vocabulary("the\nthe\n").is_err());
}

#[test]
fn surprisal_table_without_provenance_or_optional_columns() {
    let text = "experiment,item,condition,target,surprisal\ne1,1,T,dog,3.5\ne1,1,A,cat,\n";
    let rows = read_surprisals(text).unwrap();
    assert_eq!(rows[0].surprisal, Some(3.5));
    assert_eq!(rows[1].surprisal, None);
    assert_eq!(rows[1].excluded, Some(ExclusionReason::ModelFailure));

    let reordered = "target,surprisal,condition,item,experiment,excluded,reason\ncat,,A,1,e1,1,oov_target\n";
    let rows = read_surprisals(reordered).unwrap();
    assert_eq!(rows[0].excluded, Some(ExclusionReason::OovTarget));
    assert_eq!(rows[0].experiment, "e1");
}

#[test]
fn surprisal_table_rejects_bad_rows() {
    let head = "experiment,item,condition,target,surprisal,excluded,reason\n";
    for row in [
        "e1,1,T,dog,-1,false,",
        "e1,1,T,dog,inf,false,",
        "e1,1,T,dog,abc,false,",
        "e1,1,T,dog,,false,",
        "e1,1,T,dog,,maybe,",
        "e1,1,T,dog,,true,bogus",
        ",1,T,dog,2,false,",
    ] {
        assert!(read_surprisals(&format!("{head}{row}\n")).is_err(), "{row}");
    }
    assert!(read_surprisals("experiment,item,condition,target\ne1,1,T,dog\n").is_err());
}

fn record() -> impl Strategy<Value = SurprisalRecord> {
    let name = "[A-Za-z0-9_][A-Za-z0-9_ ,\"]{0,6}[A-Za-z0-9_]";
    let reason = prop_oneof![
        Just(ExclusionReason::OovTarget),
        Just(ExclusionReason::TokenizationFailure),
        Just(ExclusionReason::ModelFailure),
    ];
    (name, name, name, name, proptest::option::of(0.0..1e6f64), reason).prop_map(|(e, i, c, t, s, r)| SurprisalRecord {
        experiment: e,
        item: i,
        condition: c,
        target: t,
        excluded: if s.is_none() { Some(r) } else { None },
        surprisal: s,
    })
}

proptest! {
    #[test]
    fn surprisal_table_round_trips(rows in proptest::collection::vec(record(), 0..20)) {
        let text = write_surprisals(&rows, "# seed=1\n");
        prop_assert_eq!(read_surprisals(&text).unwrap(), rows);
    }
}
