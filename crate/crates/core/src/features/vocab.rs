use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Example;

pub const UNKNOWN_INDEX: usize = 0;
pub const PAD_INDEX: usize = 1;
const UNKNOWN_WORD: &str = "<unk>";
const PAD_WORD: &str = "<pad>";

/// Word/index map built from a training split. Index 0 is the unknown-word
/// slot and index 1 is padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    min_count: usize,
    words: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let index = r.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            words: r.words,
            index,
            min_count: r.min_count,
        }
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            min_count: v.min_count,
            words: v.words,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    /// True when only the reserved slots are present.
    pub fn is_empty(&self) -> bool {
        self.words.len() <= 2
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn lookup(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNKNOWN_INDEX)
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Hex SHA-256 over the ordered word list.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.words {
            hasher.update(w.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Words with training frequency at least `min_count`, most frequent first,
/// ties alphabetical.
pub fn build_vocab(train: &[Example], min_count: usize) -> Vocabulary {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in train {
        for t in &e.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(w, c)| c >= min_count && w != UNKNOWN_WORD && w != PAD_WORD)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let words: Vec<String> = [UNKNOWN_WORD, PAD_WORD]
        .into_iter()
        .chain(ranked.into_iter().map(|(w, _)| w))
        .map(str::to_string)
        .collect();
    VocabRepr { min_count, words }.into()
}

/// Sparse word counts over vocabulary indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BowVector(pub BTreeMap<usize, u32>);

impl BowVector {
    pub fn total(&self) -> u64 {
        self.0.values().map(|&c| c as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0.iter().map(|(&i, &c)| (i, c))
    }
}

pub fn bow_encode(caption: &[String], vocab: &Vocabulary) -> BowVector {
    let mut bow = BowVector::default();
    for w in caption {
        *bow.0.entry(vocab.lookup(w)).or_insert(0) += 1;
    }
    bow
}

/// Vocabulary indices padded (right) or truncated to a fixed width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub indices: Vec<usize>,
    pub original_len: usize,
}

impl TokenSequence {
    /// The unpadded prefix the recurrence actually reads.
    pub fn active(&self) -> &[usize] {
        &self.indices[..self.original_len.min(self.indices.len())]
    }
}

pub fn encode_tokens(caption: &[String], vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let mut indices: Vec<usize> = caption.iter().take(max_len).map(|w| vocab.lookup(w)).collect();
    indices.resize(max_len, PAD_INDEX);
    TokenSequence {
        indices,
        original_len: caption.len(),
    }
}
