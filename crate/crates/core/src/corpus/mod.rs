//! Parallel corpora: sentence pairs, tokenization, vocabularies and
//! synthetic data with known ground truth.

mod bpe;
pub mod io;
mod segment;
pub mod synthetic;
mod vocab;

use std::path::PathBuf;

pub use bpe::{apply_bpe, learn_bpe, BpeModel};
pub use segment::{is_terminator, segment_sentences, segment_spans};
pub use vocab::{build_vocab, Vocab, BOS, EOS, PAD, UNK};

/// A tokenized sentence: surface forms in order.
pub type TokenSeq = Vec<String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub source: TokenSeq,
    pub target: TokenSeq,
    /// Gold domain label; only synthetic data carries one.
    pub domain: Option<usize>,
    pub weight: f64,
}

impl SentencePair {
    pub fn new(source: TokenSeq, target: TokenSeq) -> Self {
        Self {
            source,
            target,
            domain: None,
            weight: 1.0,
        }
    }

    pub fn with_domain(mut self, domain: usize) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn side(&self, side: Side) -> &TokenSeq {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }
}

/// Untokenized bitext line, as produced by alignment and read from pair files.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPair {
    pub source: String,
    pub target: String,
    pub domain: Option<usize>,
    /// Pairing score from the aligner (log domain).
    pub score: Option<f64>,
    pub origin: Option<Origin>,
}

impl RawPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            domain: None,
            score: None,
            origin: None,
        }
    }
}

/// Where an aligned pair came from: document id and sentence indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Origin {
    pub doc: String,
    pub src_index: usize,
    pub tgt_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub pairs: Vec<SentencePair>,
    pub path: Option<PathBuf>,
    /// 1-based line numbers in `path`, parallel to `pairs` when present.
    pub lines: Vec<usize>,
}

impl Corpus {
    pub fn new(pairs: Vec<SentencePair>) -> Self {
        Self {
            pairs,
            path: None,
            lines: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SentencePair> {
        self.pairs.iter()
    }

    /// Gold labels, if every pair carries one.
    pub fn gold_labels(&self) -> Option<Vec<usize>> {
        self.pairs.iter().map(|p| p.domain).collect()
    }

    /// Subset by index, keeping provenance.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            path: self.path.clone(),
            lines: if self.lines.len() == self.pairs.len() {
                indices.iter().map(|&i| self.lines[i]).collect()
            } else {
                Vec::new()
            },
        }
    }
}

impl FromIterator<SentencePair> for Corpus {
    fn from_iter<I: IntoIterator<Item = SentencePair>>(iter: I) -> Self {
        Corpus::new(iter.into_iter().collect())
    }
}

/// How one side of the bitext is cut into tokens.
#[derive(Debug, Clone, PartialEq)]
pub enum Tokenizer {
    /// Every non-whitespace character is a token.
    Char,
    /// Whitespace-separated words.
    Word,
    /// Words segmented with BPE; non-final pieces carry a `@@` suffix so the
    /// text can be restored.
    Bpe(BpeModel),
}

pub const BPE_CONTINUATION: &str = "@@";

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        match self {
            Tokenizer::Char => text
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
            Tokenizer::Word => text.split_whitespace().map(String::from).collect(),
            Tokenizer::Bpe(model) => {
                let mut out = Vec::new();
                for word in text.split_whitespace() {
                    let pieces = apply_bpe(model, word);
                    let last = pieces.len().saturating_sub(1);
                    for (k, piece) in pieces.into_iter().enumerate() {
                        if k < last {
                            out.push(format!("{piece}{BPE_CONTINUATION}"));
                        } else {
                            out.push(piece);
                        }
                    }
                }
                out
            }
        }
    }

    pub fn detokenize(&self, tokens: &[String]) -> String {
        match self {
            Tokenizer::Char => tokens.concat(),
            Tokenizer::Word => tokens.join(" "),
            Tokenizer::Bpe(_) => {
                let mut out = String::new();
                let mut glue = false;
                for tok in tokens {
                    if !out.is_empty() && !glue {
                        out.push(' ');
                    }
                    match tok.strip_suffix(BPE_CONTINUATION) {
                        Some(stem) => {
                            out.push_str(stem);
                            glue = true;
                        }
                        None => {
                            out.push_str(tok);
                            glue = false;
                        }
                    }
                }
                out
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Tokenizer::Char => "char",
            Tokenizer::Word => "word",
            Tokenizer::Bpe(_) => "bpe",
        }
    }
}

/// Tokenize raw pairs; pairs that come out empty on either side are skipped.
pub fn tokenize_pairs(raw: &[RawPair], source: &Tokenizer, target: &Tokenizer) -> Corpus {
    let mut pairs = Vec::with_capacity(raw.len());
    let mut lines = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let s = source.tokenize(&r.source);
        let t = target.tokenize(&r.target);
        if s.is_empty() || t.is_empty() {
            continue;
        }
        pairs.push(SentencePair {
            source: s,
            target: t,
            domain: r.domain,
            weight: 1.0,
        });
        lines.push(i + 1);
    }
    Corpus {
        pairs,
        path: None,
        lines,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_tokenizer_skips_whitespace() {
        assert_eq!(Tokenizer::Char.tokenize("ab c"), vec!["a", "b", "c"]);
    }

    #[test]
    fn bpe_tokenizer_round_trips_text() {
        let model = learn_bpe(&["low", "low", "lower"], 2);
        let tok = Tokenizer::Bpe(model);
        let pieces = tok.tokenize("lowest low");
        assert_eq!(pieces, vec!["low@@", "e@@", "s@@", "t", "low"]);
        assert_eq!(tok.detokenize(&pieces), "lowest low");
    }

    #[test]
    fn tokenize_pairs_drops_empty_sides() {
        let raw = vec![RawPair::new("ab", "x y"), RawPair::new(" ", "x")];
        let c = tokenize_pairs(&raw, &Tokenizer::Char, &Tokenizer::Word);
        assert_eq!(c.len(), 1);
        assert_eq!(c.lines, vec![1]);
    }
}
