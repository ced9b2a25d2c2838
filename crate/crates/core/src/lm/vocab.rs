use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::LmError;

pub const UNK_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const RESERVED: [&str; 3] = ["<unk>", "<s>", "</s>"];

/// Word ↔ id mapping. Ids 0..3 are the unknown, begin- and end-of-sentence
/// tokens; ordinary words follow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary with the reserved tokens followed by `words`, in order.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self, LmError> {
        let mut all: Vec<String> = RESERVED.iter().map(|w| (*w).to_owned()).collect();
        let mut index = BTreeMap::new();
        for (i, w) in RESERVED.iter().enumerate() {
            index.insert((*w).to_owned(), i);
        }
        for w in words {
            let w = w.as_ref();
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(LmError::InvalidVocabulary(alloc::format!("bad word `{w}`")));
            }
            if index.insert(w.to_owned(), all.len()).is_some() {
                return Err(LmError::InvalidVocabulary(alloc::format!("word `{w}` listed twice")));
            }
            all.push(w.to_owned());
        }
        Ok(Self { words: all, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `word`, or the unknown id.
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Ordinary words in id order.
    pub fn words(&self) -> &[String] {
        &self.words[RESERVED.len()..]
    }

    /// One ordinary word per line; line `k` (0-based) holds id `k + 3`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in self.words() {
            out.push_str(w);
            out.push('\n');
        }
        out
    }

    /// Word ids of `tokens` without sentence markers.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Keep the `max_size - 3` most frequent words; equal counts are ordered by
/// first occurrence.
pub fn build_vocab<'a, I>(tokens: I, max_size: usize) -> Result<Vocabulary, LmError>
where
    I: IntoIterator<Item = &'a str>,
{
    if max_size < RESERVED.len() {
        return Err(LmError::InvalidConfig("vocabulary size must be at least 3"));
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut total = 0;
    for (pos, t) in tokens.into_iter().enumerate() {
        total += 1;
        if RESERVED.contains(&t) {
            continue;
        }
        counts.entry(t).or_insert((0, pos)).0 += 1;
    }
    if total == 0 {
        return Err(LmError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(w, (c, f))| (w, c, f)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(max_size - RESERVED.len());
    let words: Vec<&str> = ranked.iter().map(|r| r.0).collect();
    Vocabulary::from_words(&words)
}

/// Ids with the begin-of-sentence id prepended, plus the (token) positions
/// that mapped to the unknown id.
pub fn tokenize(tokens: &[String], vocab: &Vocabulary) -> (Vec<usize>, Vec<usize>) {
    let mut ids = Vec::with_capacity(tokens.len() + 1);
    ids.push(BOS_ID);
    let mut oov = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let id = vocab.id(t);
        if id == UNK_ID {
            oov.push(i);
        }
        ids.push(id);
    }
    (ids, oov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_cut_and_ties() {
        let v = build_vocab("a b a c a b".split(' '), 5).unwrap();
        assert_eq!(v.words(), ["a", "b"]);
        let v = build_vocab("x y y x z".split(' '), 4).unwrap();
        assert_eq!(v.words(), ["x"]);
        let v = build_vocab("a b".split(' '), 3).unwrap();
        assert!(v.words().is_empty());
        assert_eq!(v.id("a"), UNK_ID);
        assert_eq!(build_vocab(core::iter::empty(), 10).unwrap_err(), LmError::EmptyCorpus);
    }

    #[test]
    fn tokenize_marks_oov() {
        let v = Vocabulary::from_words(&["the", "cat"]).unwrap();
        let toks: Vec<String> = ["the", "dog"].iter().map(|s| (*s).into()).collect();
        assert_eq!(tokenize(&toks, &v), (alloc::vec![BOS_ID, 3, UNK_ID], alloc::vec![1]));
        assert_eq!(tokenize(&[], &v), (alloc::vec![BOS_ID], alloc::vec![]));
    }
}
