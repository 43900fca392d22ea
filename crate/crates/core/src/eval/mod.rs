//! Translation metrics, clustering purity and per-component reports.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::{Corpus, TokenSeq};
use crate::error::{Error, Result};
use crate::mixture::{DecodeOptions, MixtureModel};

const ZERO_PRECISION_FLOOR: f64 = 1e-9;

fn same_len(h: usize, r: usize) -> Result<()> {
    if h != r {
        return Err(Error::Input(format!("{h} hypotheses for {r} references")));
    }
    Ok(())
}

fn ngrams<S: AsRef<str>>(seq: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *out.entry(w.iter().map(|s| s.as_ref()).collect())
                .or_insert(0) += 1;
        }
    }
    out
}

/// Clipped n-gram matches and hypothesis n-gram totals for n = 1..=4.
pub fn ngram_stats<S: AsRef<str>>(
    hypotheses: &[Vec<S>],
    references: &[Vec<S>],
) -> Result<[(usize, usize); 4]> {
    same_len(hypotheses.len(), references.len())?;
    let mut stats = [(0, 0); 4];
    for (h, r) in hypotheses.iter().zip(references) {
        for (n, s) in stats.iter_mut().enumerate() {
            let hc = ngrams(h, n + 1);
            let rc = ngrams(r, n + 1);
            for (g, c) in &hc {
                s.0 += (*c).min(rc.get(g).copied().unwrap_or(0));
                s.1 += c;
            }
        }
    }
    Ok(stats)
}

/// Corpus BLEU on a 0–100 scale: uniform weights over 1–4-gram precisions,
/// zero precisions floored at 1e-9, brevity penalty on total lengths.
pub fn corpus_bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    let stats = ngram_stats(hypotheses, references)?;
    let hyp_len: usize = hypotheses.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let log_p: f64 = stats
        .iter()
        .map(|&(m, t)| {
            let p = if t == 0 { 0.0 } else { m as f64 / t as f64 };
            0.25 * p.max(ZERO_PRECISION_FLOOR).ln()
        })
        .sum();
    let bp = (1.0 - ref_len as f64 / hyp_len as f64).exp().min(1.0);
    Ok((100.0 * bp * log_p.exp()).clamp(0.0, 100.0))
}

/// Position-wise matches over reference tokens.
pub fn token_accuracy<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    same_len(hypotheses.len(), references.len())?;
    let mut hit = 0usize;
    let mut total = 0usize;
    for (h, r) in hypotheses.iter().zip(references) {
        total += r.len();
        hit += h
            .iter()
            .zip(r)
            .filter(|(a, b)| a.as_ref() == b.as_ref())
            .count();
    }
    Ok(if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    })
}

/// Fraction of instances that belong to the majority gold class of their cluster.
pub fn purity(assignments: &[usize], gold: &[usize]) -> Result<f64> {
    same_len(assignments.len(), gold.len())?;
    if assignments.is_empty() {
        return Err(Error::Input("purity of an empty clustering".into()));
    }
    let mut table: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&a, &g) in assignments.iter().zip(gold) {
        *table.entry(a).or_default().entry(g).or_insert(0) += 1;
    }
    let majority: usize = table
        .values()
        .map(|c| c.values().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / assignments.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len().max(1) as f64
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>().sqrt();
    let sy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>().sqrt();
    if sx == 0.0 || sy == 0.0 {
        0.0
    } else {
        cov / (sx * sy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub accuracy: f64,
    pub bleu: f64,
}

fn score(hyps: &[TokenSeq], eval: &Corpus) -> Result<Scores> {
    let refs: Vec<TokenSeq> = eval.iter().map(|p| p.target.clone()).collect();
    Ok(Scores {
        accuracy: token_accuracy(hyps, &refs)?,
        bleu: corpus_bleu(hyps, &refs)?,
    })
}

/// Decode `eval` with the gated ensemble and score it.
pub fn evaluate(m: &MixtureModel, eval: &Corpus, opts: &DecodeOptions) -> Result<Scores> {
    let sources: Vec<TokenSeq> = eval.iter().map(|p| p.source.clone()).collect();
    score(&m.translate_all(&sources, opts)?, eval)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReport {
    pub component: usize,
    pub accuracy: f64,
    pub bleu: f64,
    /// Mean p(z|x) over the evaluation sources.
    pub average_weight: f64,
}

/// Each component decoded alone on `eval`, with its average gate weight.
pub fn report_components(
    m: &MixtureModel,
    eval: &Corpus,
    opts: &DecodeOptions,
) -> Result<Vec<ComponentReport>> {
    if eval.is_empty() {
        return Err(Error::Input("empty evaluation set".into()));
    }
    let weights: Vec<Vec<f64>> = eval
        .pairs
        .par_iter()
        .map(|p| m.gate_weights(&p.source))
        .collect();
    (0..m.k())
        .map(|z| {
            let hyps: Vec<TokenSeq> = eval
                .pairs
                .par_iter()
                .map(|p| m.translate_with(z, &p.source, opts))
                .collect::<Result<_>>()?;
            let s = score(&hyps, eval)?;
            Ok(ComponentReport {
                component: z,
                accuracy: s.accuracy,
                bleu: s.bleu,
                average_weight: weights.iter().map(|w| w[z]).sum::<f64>() / weights.len() as f64,
            })
        })
        .collect()
}
