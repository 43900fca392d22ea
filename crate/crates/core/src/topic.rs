//! Bilingual topic model used to split a corpus by topic.
//!
//! Every pair has one latent topic `z ~ θ`. Source tokens are drawn from
//! `φ_z`; each target token picks a source position uniformly and is drawn
//! from the topic lexicon `t_z(·|f)`. Both latents are summed out exactly,
//! so EM needs no variational approximation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;

use crate::corpus::io::write_atomic;
use crate::corpus::{Corpus, SentencePair};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_SMOOTHING: f64 = 0.01;
const HEADER: &str = "BITOPIC v1";
const UNK: &str = "<unk>";
const CHUNK: usize = 256;

/// Posterior-weighted translation counts for one (topic, source token).
#[derive(Debug, Clone, Default, PartialEq)]
struct LexRow {
    total: f64,
    counts: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub delta: f64,
    pub theta: Vec<f64>,
    src_vocab: Vec<String>,
    tgt_vocab: Vec<String>,
    src_index: HashMap<String, u32>,
    tgt_index: HashMap<String, u32>,
    /// `phi[k][f]`
    phi: Vec<Vec<f64>>,
    /// `lex[k][f]`
    lex: Vec<Vec<LexRow>>,
}

/// Fitted model plus the per-iteration trace (index 0 is the initial model).
#[derive(Debug, Clone)]
pub struct TopicFit {
    pub model: TopicModel,
    /// Data log-likelihood.
    pub log_likelihood: Vec<f64>,
    /// Log-likelihood plus the log of the smoothing priors; EM never lowers it.
    pub objective: Vec<f64>,
}

fn index_of(tokens: &[String]) -> HashMap<String, u32> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect()
}

fn vocab_of<'a>(tokens: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut v: Vec<String> = tokens.cloned().collect();
    v.sort();
    v.dedup();
    v.retain(|t| t != UNK);
    v.insert(0, UNK.to_string());
    v
}

impl TopicModel {
    pub fn source_vocab_len(&self) -> usize {
        self.src_vocab.len()
    }

    pub fn target_vocab_len(&self) -> usize {
        self.tgt_vocab.len()
    }

    fn src_id(&self, tok: &str) -> u32 {
        self.src_index.get(tok).copied().unwrap_or(0)
    }

    fn tgt_id(&self, tok: &str) -> u32 {
        self.tgt_index.get(tok).copied().unwrap_or(0)
    }

    /// φ_k(f) for a source token.
    pub fn phi(&self, k: usize, f: &str) -> f64 {
        self.phi[k][self.src_id(f) as usize]
    }

    /// t_k(e|f).
    pub fn translation(&self, k: usize, f: &str, e: &str) -> f64 {
        self.t_ids(k, self.src_id(f), self.tgt_id(e))
    }

    fn t_ids(&self, k: usize, f: u32, e: u32) -> f64 {
        let row = &self.lex[k][f as usize];
        let c = row.counts.get(&e).copied().unwrap_or(0.0);
        (c + self.delta) / (row.total + self.delta * self.tgt_vocab.len() as f64)
    }

    /// Sum of t_k(·|f) over the target vocabulary.
    pub fn translation_row_sum(&self, k: usize, f: &str) -> f64 {
        let f = self.src_id(f);
        (0..self.tgt_vocab.len() as u32)
            .map(|e| self.t_ids(k, f, e))
            .sum()
    }

    fn encode(&self, pair: &SentencePair) -> (Vec<u32>, Vec<u32>) {
        (
            pair.source.iter().map(|t| self.src_id(t)).collect(),
            pair.target.iter().map(|t| self.tgt_id(t)).collect(),
        )
    }

    /// log θ_k + log p(x | k) + log p(y | x, k) for every topic.
    fn joint(&self, src: &[u32], tgt: &[u32]) -> Vec<f64> {
        let uniform_t = -(self.tgt_vocab.len() as f64).ln();
        (0..self.k)
            .map(|k| {
                let mut s = self.theta[k].ln();
                for &f in src {
                    s += self.phi[k][f as usize].ln();
                }
                for &e in tgt {
                    if src.is_empty() {
                        s += uniform_t;
                    } else {
                        let m: f64 = src.iter().map(|&f| self.t_ids(k, f, e)).sum();
                        s += (m / src.len() as f64).ln();
                    }
                }
                s
            })
            .collect()
    }

    fn log_prior(&self) -> f64 {
        let vt = self.tgt_vocab.len() as f64;
        let mut p: f64 = self.theta.iter().map(|t| self.alpha * t.ln()).sum();
        for k in 0..self.k {
            p += self.delta * self.phi[k].iter().map(|v| v.ln()).sum::<f64>();
            for row in &self.lex[k] {
                let denom = row.total + self.delta * vt;
                let seen: f64 = row
                    .counts
                    .values()
                    .map(|c| ((c + self.delta) / denom).ln())
                    .sum();
                let unseen = (vt - row.counts.len() as f64) * (self.delta / denom).ln();
                p += self.delta * (seen + unseen);
            }
        }
        p
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER} {}", self.k);
        let _ = writeln!(out, "alpha\t{}\tdelta\t{}", self.alpha, self.delta);
        let theta: Vec<String> = self.theta.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "theta\t{}", theta.join("\t"));
        let _ = writeln!(out, "source\t{}", self.src_vocab.len());
        for (f, tok) in self.src_vocab.iter().enumerate() {
            let row: Vec<String> = (0..self.k).map(|k| self.phi[k][f].to_string()).collect();
            let _ = writeln!(out, "{tok}\t{}", row.join("\t"));
        }
        let _ = writeln!(out, "target\t{}", self.tgt_vocab.len());
        for tok in &self.tgt_vocab {
            let _ = writeln!(out, "{tok}");
        }
        let _ = writeln!(out, "lexicon");
        for k in 0..self.k {
            for (f, row) in self.lex[k].iter().enumerate() {
                for (&e, &c) in &row.counts {
                    let _ = writeln!(
                        out,
                        "{k}\t{}\t{}\t{c}",
                        self.src_vocab[f], self.tgt_vocab[e as usize]
                    );
                }
            }
        }
        write_atomic(path, out.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| {
                Error::parse(path, 0, format!("unexpected end of file, expected {what}"))
            })
        };
        let num = |ln: usize, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::parse(path, ln, format!("bad number {s:?}")))
        };
        let (ln, header) = next("header")?;
        let k: usize = header
            .strip_prefix(HEADER)
            .and_then(|r| r.trim().parse().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| Error::parse(path, ln, format!("expected `{HEADER} <K>`")))?;
        let (ln, l) = next("alpha/delta")?;
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != 4 || cols[0] != "alpha" || cols[2] != "delta" {
            return Err(Error::parse(
                path,
                ln,
                "expected alpha<TAB>a<TAB>delta<TAB>d",
            ));
        }
        let (alpha, delta) = (num(ln, cols[1])?, num(ln, cols[3])?);
        let (ln, l) = next("theta")?;
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != k + 1 || cols[0] != "theta" {
            return Err(Error::parse(
                path,
                ln,
                format!("expected theta with {k} values"),
            ));
        }
        let theta = cols[1..]
            .iter()
            .map(|c| num(ln, c))
            .collect::<Result<Vec<_>>>()?;
        let count = |ln: usize, l: &str, tag: &str| -> Result<usize> {
            l.strip_prefix(tag)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| Error::parse(path, ln, format!("expected `{tag}<TAB><n>`")))
        };
        let (ln, l) = next("source")?;
        let vs = count(ln, l, "source")?;
        let mut src_vocab = Vec::with_capacity(vs);
        let mut phi = vec![Vec::with_capacity(vs); k];
        for _ in 0..vs {
            let (ln, l) = next("source row")?;
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != k + 1 {
                return Err(Error::parse(
                    path,
                    ln,
                    format!("expected token and {k} values"),
                ));
            }
            src_vocab.push(cols[0].to_string());
            for (kk, c) in cols[1..].iter().enumerate() {
                phi[kk].push(num(ln, c)?);
            }
        }
        let (ln, l) = next("target")?;
        let vt = count(ln, l, "target")?;
        let mut tgt_vocab = Vec::with_capacity(vt);
        for _ in 0..vt {
            tgt_vocab.push(next("target token")?.1.to_string());
        }
        let (ln, l) = next("lexicon")?;
        if l != "lexicon" {
            return Err(Error::parse(path, ln, "expected `lexicon`"));
        }
        let src_index = index_of(&src_vocab);
        let tgt_index = index_of(&tgt_vocab);
        let mut lex = vec![vec![LexRow::default(); vs]; k];
        for (ln, l) in lines {
            if l.is_empty() {
                continue;
            }
            let cols: Vec<&str> = l.split('\t').collect();
            let bad = || Error::parse(path, ln, "expected topic<TAB>src<TAB>tgt<TAB>count");
            if cols.len() != 4 {
                return Err(bad());
            }
            let kk: usize = cols[0].parse().map_err(|_| bad())?;
            let f = *src_index.get(cols[1]).ok_or_else(bad)?;
            let e = *tgt_index.get(cols[2]).ok_or_else(bad)?;
            if kk >= k {
                return Err(bad());
            }
            let c = num(ln, cols[3])?;
            let row = &mut lex[kk][f as usize];
            row.counts.insert(e, c);
            row.total += c;
        }
        if src_vocab.first().map(String::as_str) != Some(UNK)
            || tgt_vocab.first().map(String::as_str) != Some(UNK)
        {
            return Err(Error::parse(path, 1, "vocabularies must start with <unk>"));
        }
        Ok(TopicModel {
            k,
            alpha,
            delta,
            theta,
            src_vocab,
            tgt_vocab,
            src_index,
            tgt_index,
            phi,
            lex,
        })
    }
}

/// Normalized topic posterior of one pair.
pub fn infer_topic_posterior(model: &TopicModel, pair: &SentencePair) -> Vec<f64> {
    let (src, tgt) = model.encode(pair);
    softmax(&model.joint(&src, &tgt))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Argmax topic per pair; ties go to the lower index.
pub fn assign_topics(model: &TopicModel, corpus: &Corpus) -> Vec<usize> {
    corpus
        .pairs
        .par_iter()
        .map(|p| {
            let post = infer_topic_posterior(model, p);
            let mut best = 0;
            for (k, &v) in post.iter().enumerate() {
                if v > post[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Partition of `corpus` into one sub-corpus per topic.
pub fn split_by_topic(model: &TopicModel, corpus: &Corpus) -> Vec<Corpus> {
    let labels = assign_topics(model, corpus);
    (0..model.k)
        .map(|k| {
            let idx: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &z)| z == k)
                .map(|(i, _)| i)
                .collect();
            corpus.select(&idx)
        })
        .collect()
}

struct Counts {
    theta: Vec<f64>,
    phi: Vec<Vec<f64>>,
    lex: Vec<HashMap<(u32, u32), f64>>,
    log_likelihood: f64,
}

impl Counts {
    fn new(k: usize, vs: usize) -> Self {
        Counts {
            theta: vec![0.0; k],
            phi: vec![vec![0.0; vs]; k],
            lex: vec![HashMap::new(); k],
            log_likelihood: 0.0,
        }
    }

    fn merge(&mut self, other: Counts) {
        for (a, b) in self.theta.iter_mut().zip(other.theta) {
            *a += b;
        }
        for (ra, rb) in self.phi.iter_mut().zip(other.phi) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        for (ma, mb) in self.lex.iter_mut().zip(other.lex) {
            let mut entries: Vec<_> = mb.into_iter().collect();
            entries.sort_by_key(|(key, _)| *key);
            for (key, v) in entries {
                *ma.entry(key).or_insert(0.0) += v;
            }
        }
        self.log_likelihood += other.log_likelihood;
    }
}

fn e_step(model: &TopicModel, ids: &[(Vec<u32>, Vec<u32>)]) -> Counts {
    let vs = model.src_vocab.len();
    let partial: Vec<Counts> = ids
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut c = Counts::new(model.k, vs);
            for (src, tgt) in chunk {
                let joint = model.joint(src, tgt);
                let total = log_sum_exp(&joint);
                c.log_likelihood += total;
                for k in 0..model.k {
                    let q = (joint[k] - total).exp();
                    c.theta[k] += q;
                    for &f in src {
                        c.phi[k][f as usize] += q;
                    }
                    if src.is_empty() {
                        continue;
                    }
                    for &e in tgt {
                        let probs: Vec<f64> = src.iter().map(|&f| model.t_ids(k, f, e)).collect();
                        let z: f64 = probs.iter().sum();
                        for (&f, p) in src.iter().zip(probs) {
                            *c.lex[k].entry((f, e)).or_insert(0.0) += q * p / z;
                        }
                    }
                }
            }
            c
        })
        .collect();
    let mut total = Counts::new(model.k, vs);
    for c in partial {
        total.merge(c);
    }
    total
}

fn m_step(model: &mut TopicModel, counts: Counts) {
    let k = model.k;
    let n: f64 = counts.theta.iter().sum();
    for z in 0..k {
        model.theta[z] = (counts.theta[z] + model.alpha) / (n + k as f64 * model.alpha);
    }
    let vs = model.src_vocab.len() as f64;
    for (phi, c) in model.phi.iter_mut().zip(&counts.phi) {
        let total: f64 = c.iter().sum();
        for (p, &v) in phi.iter_mut().zip(c) {
            *p = (v + model.delta) / (total + model.delta * vs);
        }
    }
    for (rows, lex) in model.lex.iter_mut().zip(counts.lex) {
        rows.iter_mut().for_each(|r| *r = LexRow::default());
        let mut entries: Vec<_> = lex.into_iter().collect();
        entries.sort_by_key(|(key, _)| *key);
        for ((f, e), v) in entries {
            let row = &mut rows[f as usize];
            row.counts.insert(e, v);
            row.total += v;
        }
    }
}

/// EM from a seeded ±10% perturbation of uniform θ and φ (lexicons start
/// uniform) with add-δ smoothing on every table and add-α on θ.
pub fn fit_bilingual_topics(
    pairs: &Corpus,
    k: usize,
    alpha: f64,
    iterations: usize,
    seed: u64,
) -> Result<TopicFit> {
    fit_bilingual_topics_smoothed(pairs, k, alpha, DEFAULT_SMOOTHING, iterations, seed)
}

pub fn fit_bilingual_topics_smoothed(
    pairs: &Corpus,
    k: usize,
    alpha: f64,
    delta: f64,
    iterations: usize,
    seed: u64,
) -> Result<TopicFit> {
    if pairs.is_empty() {
        return Err(Error::Input("fit_bilingual_topics: empty corpus".into()));
    }
    if k == 0 {
        return Err(Error::Config("topics must be >= 1".into()));
    }
    if iterations == 0 {
        return Err(Error::Config("topic iterations must be >= 1".into()));
    }
    if !(alpha >= 0.0) || !(delta > 0.0) {
        return Err(Error::Config(format!(
            "need alpha >= 0 and delta > 0, got {alpha}, {delta}"
        )));
    }
    let src_vocab = vocab_of(pairs.iter().flat_map(|p| p.source.iter()));
    let tgt_vocab = vocab_of(pairs.iter().flat_map(|p| p.target.iter()));
    let vs = src_vocab.len();
    let mut r = rng::rng(seed, 0x7091c);
    let mut perturbed = |n: usize| {
        let v: Vec<f64> = (0..n).map(|_| 1.0 + r.gen_range(-0.1..=0.1)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let theta = perturbed(k);
    let phi = (0..k).map(|_| perturbed(vs)).collect();
    let mut model = TopicModel {
        k,
        alpha,
        delta,
        theta,
        src_index: index_of(&src_vocab),
        tgt_index: index_of(&tgt_vocab),
        src_vocab,
        tgt_vocab,
        phi,
        lex: vec![vec![LexRow::default(); vs]; k],
    };
    let ids: Vec<(Vec<u32>, Vec<u32>)> = pairs.iter().map(|p| model.encode(p)).collect();

    let mut log_likelihood = Vec::with_capacity(iterations + 1);
    let mut objective = Vec::with_capacity(iterations + 1);
    let mut counts = e_step(&model, &ids);
    for _ in 0..iterations {
        log_likelihood.push(counts.log_likelihood);
        objective.push(counts.log_likelihood + model.log_prior());
        m_step(&mut model, counts);
        counts = e_step(&model, &ids);
    }
    log_likelihood.push(counts.log_likelihood);
    objective.push(counts.log_likelihood + model.log_prior());
    Ok(TopicFit {
        model,
        log_likelihood,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(s: &str, t: &str) -> SentencePair {
        SentencePair::new(
            s.split_whitespace().map(String::from).collect(),
            t.split_whitespace().map(String::from).collect(),
        )
    }

    fn two_topic_corpus() -> Corpus {
        let mut v = Vec::new();
        for _ in 0..10 {
            v.push(pair("a b a", "x y x").with_domain(0));
            v.push(pair("b a", "y x").with_domain(0));
            v.push(pair("c d d", "u v v").with_domain(1));
            v.push(pair("d c", "v u").with_domain(1));
        }
        Corpus::new(v)
    }

    #[test]
    fn single_topic_is_degenerate() {
        let fit = fit_bilingual_topics(&two_topic_corpus(), 1, 0.1, 3, 0).unwrap();
        assert_eq!(fit.model.theta, vec![1.0]);
        assert_eq!(
            infer_topic_posterior(&fit.model, &pair("a z", "q")),
            vec![1.0]
        );
        let parts = split_by_topic(&fit.model, &two_topic_corpus());
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].pairs, two_topic_corpus().pairs);
    }

    #[test]
    fn distributions_normalized_and_floored() {
        let fit = fit_bilingual_topics(&two_topic_corpus(), 2, 0.1, 5, 1).unwrap();
        let m = &fit.model;
        assert!((m.theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for k in 0..2 {
            assert!((m.phi[k].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for f in ["a", "b", "c", "d", UNK, "never-seen"] {
                assert!((m.translation_row_sum(k, f) - 1.0).abs() < 1e-9);
                assert!(m.translation(k, f, "x") > 0.0);
            }
            assert!(m.phi[k].iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn posterior_matches_product_formula() {
        let fit = fit_bilingual_topics(&two_topic_corpus(), 2, 0.1, 10, 2).unwrap();
        let m = &fit.model;
        let p = pair("a b", "x y");
        let mut joint = Vec::new();
        for k in 0..2 {
            let mut v = m.theta[k];
            for f in &p.source {
                v *= m.phi(k, f);
            }
            for e in &p.target {
                let s: f64 = p.source.iter().map(|f| m.translation(k, f, e)).sum();
                v *= s / p.source.len() as f64;
            }
            joint.push(v);
        }
        let z: f64 = joint.iter().sum();
        let post = infer_topic_posterior(m, &p);
        for k in 0..2 {
            assert!((post[k] - joint[k] / z).abs() < 1e-12);
        }
        let topic = if post[0] > post[1] { 0 } else { 1 };
        let other = infer_topic_posterior(m, &pair("c d", "u v"));
        assert!(other[1 - topic] > 0.99);
    }

    #[test]
    fn split_partitions_corpus() {
        let c = two_topic_corpus();
        let fit = fit_bilingual_topics(&c, 2, 0.1, 10, 3).unwrap();
        let parts = split_by_topic(&fit.model, &c);
        assert_eq!(parts.iter().map(Corpus::len).sum::<usize>(), c.len());
        for part in &parts {
            let labels = part.gold_labels().unwrap();
            assert!(labels.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            fit_bilingual_topics(&Corpus::default(), 2, 0.1, 1, 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn file_round_trip_and_determinism() {
        let c = two_topic_corpus();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.topics");
        let b = dir.path().join("b.topics");
        fit_bilingual_topics(&c, 2, 0.1, 4, 9)
            .unwrap()
            .model
            .write(&a)
            .unwrap();
        let fit = fit_bilingual_topics(&c, 2, 0.1, 4, 9).unwrap();
        fit.model.write(&b).unwrap();
        let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(ta, tb);
        assert!(String::from_utf8(ta).unwrap().starts_with("BITOPIC v1 2\n"));
        let back = TopicModel::read(&a).unwrap();
        for p in c.iter() {
            let (x, y) = (
                infer_topic_posterior(&back, p),
                infer_topic_posterior(&fit.model, p),
            );
            for (u, v) in x.iter().zip(&y) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn em_objective_never_decreases(
            rows in prop::collection::vec(("[a-f]( [a-f]){0,5}", "[u-z]( [u-z]){0,5}"), 1..25),
            k in 1usize..4, seed in 0u64..100,
        ) {
            let c: Corpus = rows.iter().map(|(s, t)| pair(s, t)).collect();
            let fit = fit_bilingual_topics(&c, k, 0.5, 8, seed).unwrap();
            for w in fit.objective.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
            for p in c.iter() {
                let post = infer_topic_posterior(&fit.model, p);
                prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(post.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
