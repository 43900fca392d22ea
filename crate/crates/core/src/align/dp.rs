//! Monotone block alignment by dynamic programming.
//!
//! Each block pairs 0–2 consecutive source units with 0–2 consecutive
//! target units. Its score mixes a Gale-Church length term with a Model-1
//! lexical term; the DP returns the cover of both sequences with the highest
//! total score.

use std::f64::consts::PI;

use super::model1::TTable;
use crate::corpus::{RawPair, Tokenizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pattern {
    OneOne,
    OneZero,
    ZeroOne,
    TwoOne,
    OneTwo,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [
        Pattern::OneOne,
        Pattern::OneZero,
        Pattern::ZeroOne,
        Pattern::TwoOne,
        Pattern::OneTwo,
    ];

    pub fn sizes(self) -> (usize, usize) {
        match self {
            Pattern::OneOne => (1, 1),
            Pattern::OneZero => (1, 0),
            Pattern::ZeroOne => (0, 1),
            Pattern::TwoOne => (2, 1),
            Pattern::OneTwo => (1, 2),
        }
    }

    /// Gale-Church pattern priors.
    pub fn prior(self) -> f64 {
        match self {
            Pattern::OneOne => 0.89,
            Pattern::OneZero | Pattern::ZeroOne => 0.0099 / 2.0,
            Pattern::TwoOne | Pattern::OneTwo => 0.089 / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignParams {
    /// Expected target characters per source character.
    pub mean_ratio: f64,
    /// Variance of the length difference per source character.
    pub variance: f64,
    /// Weight of the lexical term; the length term gets `1 - gamma`.
    pub gamma: f64,
    pub patterns: Vec<Pattern>,
    /// Minimum pairing score a kept pair needs.
    pub tau: f64,
    /// Floor applied to per-token lexical probabilities.
    pub lex_floor: f64,
    /// Lower bound on the estimated variance.
    pub min_variance: f64,
    pub source_tokenizer: Tokenizer,
    pub target_tokenizer: Tokenizer,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            mean_ratio: 1.0,
            variance: 6.8,
            gamma: 0.7,
            patterns: Pattern::ALL.to_vec(),
            tau: f64::NEG_INFINITY,
            lex_floor: 1e-6,
            min_variance: 1.0,
            source_tokenizer: Tokenizer::Char,
            target_tokenizer: Tokenizer::Word,
        }
    }
}

impl AlignParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0) {
            return Err(Error::Config(format!(
                "align: variance must be > 0, got {}",
                self.variance
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "align: gamma must be in [0,1], got {}",
                self.gamma
            )));
        }
        if !(self.mean_ratio > 0.0) {
            return Err(Error::Config("align: mean ratio must be > 0".into()));
        }
        if !(self.lex_floor > 0.0) {
            return Err(Error::Config("align: lexical floor must be > 0".into()));
        }
        Ok(())
    }

    /// Fit the length model on aligned seed pairs and set `tau` to the 5th
    /// percentile of their 1-1 block scores under `ttable`.
    pub fn estimate(seed: &[RawPair], ttable: &TTable, base: AlignParams) -> Result<AlignParams> {
        if seed.is_empty() {
            return Err(Error::Input("align: empty seed corpus".into()));
        }
        let lens: Vec<(f64, f64)> = seed
            .iter()
            .map(|p| (char_len(&p.source) as f64, char_len(&p.target) as f64))
            .filter(|&(s, _)| s > 0.0)
            .collect();
        let (ss, tt): (f64, f64) = lens
            .iter()
            .fold((0.0, 0.0), |a, &(s, t)| (a.0 + s, a.1 + t));
        let c = tt / ss;
        let s2 = lens.iter().map(|&(s, t)| (t - c * s).powi(2)).sum::<f64>() / ss;
        let mut params = AlignParams {
            mean_ratio: c,
            variance: s2.max(base.min_variance),
            ..base
        };
        params.validate()?;
        let mut scores: Vec<f64> = seed
            .iter()
            .map(|p| {
                let s = Unit::new(&p.source, &params, ttable);
                let t = Unit::target(&p.target, &params, ttable);
                block_score(&[&s], &[&t], ttable, &params)
            })
            .collect();
        scores.sort_by(f64::total_cmp);
        params.tau = percentile(&scores, 0.05);
        Ok(params)
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).floor() as usize;
    sorted[idx]
}

pub(crate) fn char_len(text: &str) -> usize {
    text.chars().filter(|c| !c.is_whitespace()).count()
}

/// A source or target unit (sentence or paragraph) prepared for scoring.
#[derive(Debug, Clone)]
pub(crate) struct Unit {
    pub chars: usize,
    /// Token ids in the t-table; `None` for tokens the table does not know.
    pub ids: Vec<Option<u32>>,
}

impl Unit {
    pub fn new(text: &str, params: &AlignParams, ttable: &TTable) -> Self {
        Self::with(text, &params.source_tokenizer, ttable, true)
    }

    pub fn target(text: &str, params: &AlignParams, ttable: &TTable) -> Self {
        Self::with(text, &params.target_tokenizer, ttable, false)
    }

    fn with(text: &str, tok: &Tokenizer, ttable: &TTable, source: bool) -> Self {
        let ids = tok
            .tokenize(text)
            .iter()
            .map(|t| {
                if source {
                    ttable.src_id(t)
                } else {
                    ttable.tgt_id(t)
                }
            })
            .collect();
        Unit {
            chars: char_len(text),
            ids,
        }
    }
}

/// Log-density of the standard normal.
fn log_normal(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

pub(crate) fn length_score(src_chars: usize, tgt_chars: usize, params: &AlignParams) -> f64 {
    let ls = src_chars as f64;
    let lt = tgt_chars as f64;
    if ls == 0.0 || lt == 0.0 {
        // insertions and deletions are priced by their pattern prior alone
        return 0.0;
    }
    let mean = (ls + lt / params.mean_ratio) / 2.0;
    let delta = (lt - params.mean_ratio * ls) / (mean * params.variance).sqrt();
    log_normal(delta)
}

/// Mean over target tokens of log((1/(|x|+1)) Σ_{i ∈ NULL ∪ x} t(y|x_i)),
/// floored per token. A block with an empty side carries no lexical evidence
/// and scores 0.
pub(crate) fn lexical_score(
    src: &[Option<u32>],
    tgt: &[Option<u32>],
    ttable: &TTable,
    floor: f64,
) -> f64 {
    if tgt.is_empty() || src.is_empty() {
        return 0.0;
    }
    let norm = 1.0 / (src.len() as f64 + 1.0);
    let mut total = 0.0;
    for e in tgt {
        let p = match e {
            Some(e) => {
                let mut sum = ttable.prob_ids(ttable.null_id(), *e);
                for f in src.iter().flatten() {
                    sum += ttable.prob_ids(*f, *e);
                }
                sum * norm
            }
            None => 0.0,
        };
        total += p.max(floor).ln();
    }
    total / tgt.len() as f64
}

fn pattern_of(ns: usize, nt: usize) -> Option<Pattern> {
    Pattern::ALL.into_iter().find(|p| p.sizes() == (ns, nt))
}

pub(crate) fn block_score(
    src: &[&Unit],
    tgt: &[&Unit],
    ttable: &TTable,
    params: &AlignParams,
) -> f64 {
    let pattern = pattern_of(src.len(), tgt.len()).expect("block sizes come from a pattern");
    let ls: usize = src.iter().map(|u| u.chars).sum();
    let lt: usize = tgt.iter().map(|u| u.chars).sum();
    let s_ids: Vec<Option<u32>> = src.iter().flat_map(|u| u.ids.iter().copied()).collect();
    let t_ids: Vec<Option<u32>> = tgt.iter().flat_map(|u| u.ids.iter().copied()).collect();
    let len = pattern.prior().ln() + length_score(ls, lt, params);
    let lex = lexical_score(&s_ids, &t_ids, ttable, params.lex_floor);
    (1.0 - params.gamma) * len + params.gamma * lex
}

/// Score of one block given as raw source and target texts (each 0–2 units).
pub fn score_block<S: AsRef<str>, T: AsRef<str>>(
    source: &[S],
    target: &[T],
    ttable: &TTable,
    params: &AlignParams,
) -> Option<f64> {
    pattern_of(source.len(), target.len())?;
    let s: Vec<Unit> = source
        .iter()
        .map(|x| Unit::new(x.as_ref(), params, ttable))
        .collect();
    let t: Vec<Unit> = target
        .iter()
        .map(|x| Unit::target(x.as_ref(), params, ttable))
        .collect();
    let s: Vec<&Unit> = s.iter().collect();
    let t: Vec<&Unit> = t.iter().collect();
    Some(block_score(&s, &t, ttable, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedBlock {
    pub source: std::ops::Range<usize>,
    pub target: std::ops::Range<usize>,
    pub score: f64,
}

impl AlignedBlock {
    pub fn pattern(&self) -> Pattern {
        pattern_of(self.source.len(), self.target.len()).expect("valid block")
    }
}

/// Highest-scoring monotone cover of `source` × `target` by the allowed patterns.
pub fn align_blocks<S: AsRef<str>, T: AsRef<str>>(
    source: &[S],
    target: &[T],
    ttable: &TTable,
    params: &AlignParams,
) -> Vec<AlignedBlock> {
    let src: Vec<Unit> = source
        .iter()
        .map(|s| Unit::new(s.as_ref(), params, ttable))
        .collect();
    let tgt: Vec<Unit> = target
        .iter()
        .map(|t| Unit::target(t.as_ref(), params, ttable))
        .collect();
    align_units(&src, &tgt, ttable, params)
}

pub(crate) fn align_units(
    src: &[Unit],
    tgt: &[Unit],
    ttable: &TTable,
    params: &AlignParams,
) -> Vec<AlignedBlock> {
    let (n, m) = (src.len(), tgt.len());
    if n == 0 && m == 0 {
        return Vec::new();
    }
    let width = m + 1;
    let mut best = vec![f64::NEG_INFINITY; (n + 1) * width];
    let mut back: Vec<Option<(Pattern, f64)>> = vec![None; (n + 1) * width];
    best[0] = 0.0;
    for i in 0..=n {
        for j in 0..=m {
            if i == 0 && j == 0 {
                continue;
            }
            for &p in &params.patterns {
                let (di, dj) = p.sizes();
                if di > i || dj > j {
                    continue;
                }
                let prev = best[(i - di) * width + (j - dj)];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let s_units: Vec<&Unit> = src[i - di..i].iter().collect();
                let t_units: Vec<&Unit> = tgt[j - dj..j].iter().collect();
                let bs = block_score(&s_units, &t_units, ttable, params);
                let cand = prev + bs;
                if cand > best[i * width + j] {
                    best[i * width + j] = cand;
                    back[i * width + j] = Some((p, bs));
                }
            }
        }
    }
    let mut blocks = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let Some((p, score)) = back[i * width + j] else {
            // no pattern reaches (n, m), e.g. 1-1 only with unequal lengths
            return Vec::new();
        };
        let (di, dj) = p.sizes();
        blocks.push(AlignedBlock {
            source: i - di..i,
            target: j - dj..j,
            score,
        });
        i -= di;
        j -= dj;
    }
    blocks.reverse();
    blocks
}
