use std::collections::{BTreeMap, HashMap};

use super::{Corpus, Side};

pub const UNK: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const PAD: u32 = 3;

const RESERVED: [&str; 4] = ["<unk>", "<s>", "</s>", "<pad>"];

/// Token inventory with the four reserved entries at indices 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocab {
    /// Reserved entries followed by `tokens`; duplicates and reserved names are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            v.push(r.to_string());
        }
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, tok: String) {
        if self.index.contains_key(&tok) {
            return;
        }
        self.index.insert(tok.clone(), self.tokens.len() as u32);
        self.tokens.push(tok);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens
            .get(id as usize)
            .map_or(RESERVED[UNK as usize], String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_reserved(id: u32) -> bool {
        id < RESERVED.len() as u32
    }

    pub fn encode<S: AsRef<str>>(&self, seq: &[S]) -> Vec<u32> {
        seq.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }
}

/// Reserved entries plus the `cap - 4` most frequent tokens on `side`.
/// Equal frequencies are ordered lexicographically.
pub fn build_vocab(corpus: &Corpus, side: Side, cap: usize) -> Vocab {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for pair in corpus.iter() {
        for tok in pair.side(side) {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    for r in RESERVED {
        counts.remove(r);
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = cap.saturating_sub(RESERVED.len());
    Vocab::from_tokens(ranked.into_iter().take(keep).map(|(t, _)| t))
}
