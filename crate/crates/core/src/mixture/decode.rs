use super::component::{output_ids, Component};
use crate::corpus::TokenSeq;
use crate::corpus::BOS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub beam: usize,
    /// Penalty γ_d per sibling rank.
    pub diversity: f64,
    pub max_len: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam: 4,
            diversity: 0.0,
            max_len: 100,
        }
    }
}

fn check(components: &[Component], weights: &[f64]) -> Result<()> {
    if components.is_empty() {
        return Err(Error::Input("decoding needs at least one component".into()));
    }
    if weights.len() != components.len() {
        return Err(Error::Input(format!(
            "{} weights for {} components",
            weights.len(),
            components.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "weights {weights:?} are not a distribution"
        )));
    }
    let v = components[0].target_vocab();
    let s = components[0].source_vocab();
    if components
        .iter()
        .any(|c| c.target_vocab() != v || c.source_vocab() != s)
    {
        return Err(Error::Input("components use different vocabularies".into()));
    }
    Ok(())
}

/// Σ_z w_z · p_z(· | prev, source), dense over target ids. `source` holds the
/// source ids the lexical term ranges over.
pub fn step_distribution(
    components: &[Component],
    weights: &[f64],
    source: &[u32],
    prev: u32,
) -> Result<Vec<f64>> {
    check(components, weights)?;
    Ok(mix(components, weights, source, prev))
}

fn mix(components: &[Component], weights: &[f64], source: &[u32], prev: u32) -> Vec<f64> {
    let mut out = vec![0.0; components[0].target_vocab().len()];
    for (c, &w) in components.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let l = c.params.lambda;
        let lex = c.lexical_vector(source);
        let bi = c.bigram_vector(prev);
        for ((o, a), b) in out.iter_mut().zip(&lex).zip(&bi) {
            *o += w * (l * b + (1.0 - l) * a);
        }
    }
    out
}

/// Target length the decoder produces for a source of `source_len` tokens.
pub fn target_length(
    components: &[Component],
    weights: &[f64],
    source_len: usize,
    max_len: usize,
) -> usize {
    if source_len == 0 {
        return 0;
    }
    let ratio: f64 = components
        .iter()
        .zip(weights)
        .map(|(c, w)| w * c.length_ratio())
        .sum();
    ((ratio * source_len as f64).round() as usize).clamp(1, max_len.max(1))
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<u32>,
    /// Source ids not yet covered by an emitted token.
    open: Vec<u32>,
    score: f64,
}

/// Drop the open source position that best explains `e`, if any explains it
/// better than NULL.
fn cover(components: &[Component], weights: &[f64], open: &mut Vec<u32>, e: u32) {
    let t = |f: Option<u32>| -> f64 {
        components
            .iter()
            .zip(weights)
            .map(|(c, w)| w * c.t(f.unwrap_or_else(|| c.null_row()), e))
            .sum()
    };
    let null = t(None);
    let mut best: Option<(usize, f64)> = None;
    for (i, &f) in open.iter().enumerate() {
        let p = t(Some(f));
        if p > null && best.is_none_or(|b| p > b.1) {
            best = Some((i, p));
        }
    }
    if let Some((i, _)) = best {
        open.remove(i);
    }
}

/// Beam search under the token-level mixture of `components`.
///
/// Each hypothesis expands its `beam` most probable tokens; the sibling of
/// rank r pays γ_d·r. Ties are broken by token id. The lexical term of a
/// hypothesis ranges over the source positions its output has not yet
/// covered. The output length is fixed by the mixed length ratio.
pub fn decode<S: AsRef<str>>(
    components: &[Component],
    weights: &[f64],
    source: &[S],
    opts: &DecodeOptions,
) -> Result<TokenSeq> {
    if opts.beam < 1 {
        return Err(Error::Config("beam must be >= 1".into()));
    }
    check(components, weights)?;
    let src = components[0].source_vocab().encode(source);
    let len = target_length(components, weights, src.len(), opts.max_len);
    let outputs: Vec<u32> = output_ids(components[0].target_vocab()).skip(1).collect();
    let mut beam = vec![Hyp {
        tokens: Vec::new(),
        open: src.clone(),
        score: 0.0,
    }];
    for _ in 0..len {
        let mut pool: Vec<Hyp> = Vec::new();
        for h in &beam {
            let prev = h.tokens.last().copied().unwrap_or(BOS);
            let dist = mix(components, weights, &h.open, prev);
            let mut ranked: Vec<u32> = outputs.clone();
            ranked.sort_by(|a, b| {
                dist[*b as usize]
                    .total_cmp(&dist[*a as usize])
                    .then(a.cmp(b))
            });
            for (rank, &e) in ranked.iter().take(opts.beam).enumerate() {
                let mut next = h.clone();
                next.tokens.push(e);
                next.score += dist[e as usize].ln() - opts.diversity * rank as f64;
                cover(components, weights, &mut next.open, e);
                pool.push(next);
            }
        }
        pool.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        pool.truncate(opts.beam);
        beam = pool;
    }
    let best = beam
        .into_iter()
        .map(|h| {
            let norm = h.score / h.tokens.len().max(1) as f64;
            (norm, h.tokens)
        })
        .min_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)))
        .map(|(_, t)| t)
        .unwrap_or_default();
    Ok(components[0].target_vocab().decode(&best))
}
