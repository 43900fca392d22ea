//! Synthetic bitext with known ground truth.
//!
//! A [`SyntheticWorld`] is derived deterministically from a
//! [`SyntheticSpec`] and a seed. Each domain owns a source vocabulary (a
//! configurable fraction shared with the other domains), a first-order
//! Markov chain over it, a bijective token translation and a word-order rule.
//! Source tokens are single CJK characters and target tokens are Latin
//! pseudo-words, so the two sides live in different scripts.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{Corpus, Origin, RawPair, SentencePair};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderRule {
    Identity,
    Reverse,
    /// Swap positions (0,1), (2,3), ...
    SwapAdjacent,
}

impl OrderRule {
    pub fn apply<T: Clone>(&self, seq: &[T]) -> Vec<T> {
        match self {
            OrderRule::Identity => seq.to_vec(),
            OrderRule::Reverse => seq.iter().rev().cloned().collect(),
            OrderRule::SwapAdjacent => {
                let mut out = seq.to_vec();
                for pair in out.chunks_mut(2) {
                    pair.reverse();
                }
                out
            }
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(OrderRule::Identity),
            "reverse" => Some(OrderRule::Reverse),
            "swap" => Some(OrderRule::SwapAdjacent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseRates {
    /// Rate of inserted pairs whose two sides are the same string.
    pub identical: f64,
    /// Rate of inserted pairs whose target is in the source script.
    pub wrong_language: f64,
    /// Rate of true pairs that lose their 1-1 alignment.
    pub misalignment: f64,
    /// Share of misalignments that merge two source sentences into one
    /// target sentence; the rest drop the target sentence.
    pub merge_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub domains: usize,
    /// Source vocabulary size of each domain.
    pub vocab_size: usize,
    /// Fraction of each domain's source vocabulary drawn from a pool shared by all domains.
    pub shared_fraction: f64,
    /// Fraction of shared source tokens whose translation differs per domain.
    pub divergence: f64,
    /// Map every domain's own tokens onto one common target vocabulary.
    pub shared_targets: bool,
    /// Successors per token in the source Markov chain; 0 draws tokens independently.
    pub branching: usize,
    /// Word-order rule per domain; a single entry applies to all domains.
    pub order: Vec<OrderRule>,
    pub min_len: usize,
    pub max_len: usize,
    pub pairs: usize,
    pub noise: NoiseRates,
    /// Sentences per paragraph (inclusive range), documents only.
    pub paragraph_sentences: (usize, usize),
    /// Paragraphs per document (inclusive range), documents only.
    pub doc_paragraphs: (usize, usize),
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            domains: 1,
            vocab_size: 50,
            shared_fraction: 0.0,
            divergence: 0.0,
            shared_targets: false,
            branching: 0,
            order: vec![OrderRule::Identity],
            min_len: 4,
            max_len: 12,
            pairs: 1000,
            noise: NoiseRates::default(),
            paragraph_sentences: (2, 5),
            doc_paragraphs: (2, 5),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.domains == 0 {
            return bad("synthetic: domains must be >= 1".into());
        }
        if self.vocab_size == 0 {
            return bad("synthetic: vocab_size must be >= 1".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!(
                "synthetic: need 1 <= min_len <= max_len, got {}..{}",
                self.min_len, self.max_len
            ));
        }
        if self.order.is_empty() || (self.order.len() != 1 && self.order.len() != self.domains) {
            return bad("synthetic: order must list one rule or one per domain".into());
        }
        let rates = [
            ("shared_fraction", self.shared_fraction),
            ("divergence", self.divergence),
            ("noise.identical", self.noise.identical),
            ("noise.wrong_language", self.noise.wrong_language),
            ("noise.misalignment", self.noise.misalignment),
            ("noise.merge_fraction", self.noise.merge_fraction),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("synthetic: {name} = {r} not in [0,1]"));
            }
        }
        let (a, b) = self.paragraph_sentences;
        let (c, d) = self.doc_paragraphs;
        if a == 0 || a > b || c == 0 || c > d {
            return bad("synthetic: document shape ranges must be non-empty and >= 1".into());
        }
        Ok(())
    }

    fn order_of(&self, domain: usize) -> OrderRule {
        if self.order.len() == 1 {
            self.order[0]
        } else {
            self.order[domain]
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainModel {
    /// Global source token ids owned by this domain.
    pub vocab: Vec<usize>,
    /// Global target id for each entry of `vocab`.
    pub translation: Vec<usize>,
    /// Weighted successors (indices into `vocab`) per entry of `vocab`.
    successors: Vec<Vec<(usize, f64)>>,
    pub order: OrderRule,
}

impl DomainModel {
    fn sample_source(&self, len: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut cur = rng.gen_range(0..self.vocab.len());
        out.push(cur);
        while out.len() < len {
            let succ = &self.successors[cur];
            cur = if succ.is_empty() {
                rng.gen_range(0..self.vocab.len())
            } else {
                let total: f64 = succ.iter().map(|s| s.1).sum();
                let mut u = rng.gen::<f64>() * total;
                let mut pick = succ[succ.len() - 1].0;
                for &(s, w) in succ {
                    if u < w {
                        pick = s;
                        break;
                    }
                    u -= w;
                }
                pick
            };
            out.push(cur);
        }
        out
    }
}

/// One generated sentence pair in global token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdPair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub domain: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub spec: SyntheticSpec,
    pub source_forms: Vec<String>,
    pub target_forms: Vec<String>,
    pub domains: Vec<DomainModel>,
}

const CJK_BASE: u32 = 0x4E00;
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn source_form(i: usize) -> String {
    char::from_u32(CJK_BASE + i as u32)
        .expect("CJK block")
        .to_string()
}

fn target_form(i: usize) -> String {
    let syll = CONSONANTS.len() * VOWELS.len();
    let mut n = i;
    let mut s = String::new();
    for _ in 0..2 {
        let k = n % syll;
        n /= syll;
        s.push(CONSONANTS[k / VOWELS.len()] as char);
        s.push(VOWELS[k % VOWELS.len()] as char);
    }
    while n > 0 {
        let k = n % syll;
        n /= syll;
        s.push(CONSONANTS[k / VOWELS.len()] as char);
        s.push(VOWELS[k % VOWELS.len()] as char);
    }
    s
}

impl SyntheticWorld {
    pub fn new(spec: &SyntheticSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::rng(seed, 0x5EED_0001);
        let v = spec.vocab_size;
        let shared = ((spec.shared_fraction * v as f64).round() as usize).min(v);
        let own = v - shared;
        let n_source = shared + own * spec.domains;

        let divergent: Vec<bool> = (0..shared)
            .map(|_| rng.gen::<f64>() < spec.divergence)
            .collect();
        let n_divergent = divergent.iter().filter(|&&d| d).count();
        let own_targets = if spec.shared_targets {
            own
        } else {
            own * spec.domains
        };
        let n_target = (shared - n_divergent) + n_divergent * spec.domains + own_targets;
        let mut target_perm: Vec<usize> = (0..n_target).collect();
        target_perm.shuffle(&mut rng);
        let mut next_target = target_perm.into_iter();

        let common: Vec<Option<usize>> = divergent
            .iter()
            .map(|&d| if d { None } else { next_target.next() })
            .collect();
        let common_own: Vec<usize> = if spec.shared_targets {
            (0..own)
                .map(|_| next_target.next().expect("target ids sized above"))
                .collect()
        } else {
            Vec::new()
        };

        let mut domains = Vec::with_capacity(spec.domains);
        for d in 0..spec.domains {
            let mut vocab: Vec<usize> = (0..shared).collect();
            vocab.extend(shared + d * own..shared + (d + 1) * own);
            let translation: Vec<usize> = vocab
                .iter()
                .map(|&s| match common.get(s).copied().flatten() {
                    Some(t) => t,
                    None if s >= shared && spec.shared_targets => common_own[(s - shared) % own],
                    None => next_target.next().expect("target ids sized above"),
                })
                .collect();
            let successors = chain(v, spec.branching, &mut rng);
            domains.push(DomainModel {
                vocab,
                translation,
                successors,
                order: spec.order_of(d),
            });
        }
        Ok(Self {
            spec: spec.clone(),
            source_forms: (0..n_source).map(source_form).collect(),
            target_forms: (0..n_target).map(target_form).collect(),
            domains,
        })
    }

    /// A copy of domain `domain` whose chain has a `fraction` of its rows resampled.
    pub fn drifted_domain(&self, domain: usize, fraction: f64, seed: u64) -> DomainModel {
        let mut rng = rng::rng(seed, 0xD81F_7000 + domain as u64);
        let mut out = self.domains[domain].clone();
        let fresh = chain(out.vocab.len(), self.spec.branching, &mut rng);
        for (row, new) in out.successors.iter_mut().zip(fresh) {
            if rng.gen::<f64>() < fraction {
                *row = new;
            }
        }
        out
    }

    pub fn sample_from(&self, domain: &DomainModel, label: usize, rng: &mut Rng) -> IdPair {
        let len = rng.gen_range(self.spec.min_len..=self.spec.max_len);
        let src_local = domain.sample_source(len, rng);
        let source: Vec<usize> = src_local.iter().map(|&k| domain.vocab[k]).collect();
        let mapped: Vec<usize> = src_local.iter().map(|&k| domain.translation[k]).collect();
        IdPair {
            source,
            target: domain.order.apply(&mapped),
            domain: label,
        }
    }

    pub fn sample(&self, domain: usize, rng: &mut Rng) -> IdPair {
        self.sample_from(&self.domains[domain], domain, rng)
    }

    pub fn source_tokens(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.source_forms[i].clone()).collect()
    }

    pub fn target_tokens(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.target_forms[i].clone()).collect()
    }

    pub fn to_pair(&self, p: &IdPair) -> SentencePair {
        SentencePair::new(self.source_tokens(&p.source), self.target_tokens(&p.target))
            .with_domain(p.domain)
    }

    /// Source text: characters run together, as in CJK writing.
    pub fn source_text(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.source_forms[i].as_str()).collect()
    }

    pub fn target_text(&self, ids: &[usize]) -> String {
        self.target_tokens(ids).join(" ")
    }

    /// `n` pairs with domains drawn uniformly, noise applied per the spec.
    pub fn corpus(&self, n: usize, rng: &mut Rng) -> Corpus {
        let noise = self.spec.noise;
        let mut out = Vec::with_capacity(n);
        let mut prev: Option<IdPair> = None;
        for _ in 0..n {
            let d = rng.gen_range(0..self.domains.len());
            let p = self.sample(d, rng);
            let mut pair = self.to_pair(&p);
            let u = rng.gen::<f64>();
            if u < noise.identical {
                pair.source = pair.target.clone();
            } else if u < noise.identical + noise.wrong_language {
                let other = self.sample(d, rng);
                pair.target = self.source_tokens(&other.source);
            } else if u < noise.identical + noise.wrong_language + noise.misalignment {
                if let Some(q) = &prev {
                    pair.target = self.target_tokens(&q.target);
                }
            }
            prev = Some(p);
            out.push(pair);
        }
        Corpus::new(out)
    }
}

fn chain(v: usize, branching: usize, rng: &mut Rng) -> Vec<Vec<(usize, f64)>> {
    if branching == 0 {
        return vec![Vec::new(); v];
    }
    let b = branching.min(v);
    let all: Vec<usize> = (0..v).collect();
    (0..v)
        .map(|_| {
            all.choose_multiple(rng, b)
                .enumerate()
                .map(|(rank, &s)| (s, 1.0 / (rank as f64 + 1.0)))
                .collect()
        })
        .collect()
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    let world = SyntheticWorld::new(spec, seed)?;
    let mut rng = rng::rng(seed, 0x5EED_0002);
    Ok(world.corpus(spec.pairs, &mut rng))
}

/// Parallel document: paragraphs of sentence strings per side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentPair {
    pub id: String,
    pub source: Vec<Vec<String>>,
    pub target: Vec<Vec<String>>,
}

impl DocumentPair {
    pub fn source_sentences(&self) -> Vec<&str> {
        self.source.iter().flatten().map(String::as_str).collect()
    }

    pub fn target_sentences(&self) -> Vec<&str> {
        self.target.iter().flatten().map(String::as_str).collect()
    }
}

pub type GoldLink = Origin;

/// Documents of true translations plus noise, and the surviving true 1-1 links.
pub fn generate_synthetic_documents(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Vec<DocumentPair>, Vec<GoldLink>)> {
    let world = SyntheticWorld::new(spec, seed)?;
    let mut rng = rng::rng(seed, 0x5EED_0003);
    Ok(world.documents(spec.pairs, &mut rng))
}

impl SyntheticWorld {
    fn src_sentence(&self, ids: &[usize]) -> String {
        format!("{}。", self.source_text(ids))
    }

    fn tgt_sentence(&self, ids: &[usize]) -> String {
        format!("{} .", self.target_text(ids))
    }

    /// Documents holding `n` true sentence pairs in total.
    pub fn documents(&self, n: usize, rng: &mut Rng) -> (Vec<DocumentPair>, Vec<GoldLink>) {
        let spec = &self.spec;
        let noise = spec.noise;
        let mut docs = Vec::new();
        let mut gold = Vec::new();
        let mut remaining = n;
        while remaining > 0 {
            let id = format!("doc{:04}", docs.len());
            let domain = rng.gen_range(0..self.domains.len());
            let n_par = rng.gen_range(spec.doc_paragraphs.0..=spec.doc_paragraphs.1);
            let mut src_pars = Vec::new();
            let mut tgt_pars = Vec::new();
            let (mut si, mut ti) = (0usize, 0usize);
            for _ in 0..n_par {
                if remaining == 0 {
                    break;
                }
                let len = rng
                    .gen_range(spec.paragraph_sentences.0..=spec.paragraph_sentences.1)
                    .min(remaining);
                remaining -= len;
                let true_pairs: Vec<IdPair> = (0..len).map(|_| self.sample(domain, rng)).collect();
                let mut sp = Vec::new();
                let mut tp = Vec::new();
                let mut k = 0;
                while k < true_pairs.len() {
                    let p = &true_pairs[k];
                    if rng.gen::<f64>() < noise.misalignment {
                        let merge = rng.gen::<f64>() < noise.merge_fraction;
                        if merge && k + 1 < true_pairs.len() {
                            let q = &true_pairs[k + 1];
                            sp.push(self.src_sentence(&p.source));
                            sp.push(self.src_sentence(&q.source));
                            let mut joined = p.target.clone();
                            joined.extend_from_slice(&q.target);
                            tp.push(self.tgt_sentence(&joined));
                            si += 2;
                            ti += 1;
                            k += 2;
                        } else {
                            sp.push(self.src_sentence(&p.source));
                            si += 1;
                            k += 1;
                        }
                    } else {
                        sp.push(self.src_sentence(&p.source));
                        tp.push(self.tgt_sentence(&p.target));
                        gold.push(Origin {
                            doc: id.clone(),
                            src_index: si,
                            tgt_index: ti,
                        });
                        si += 1;
                        ti += 1;
                        k += 1;
                    }
                    if rng.gen::<f64>() < noise.identical {
                        let filler = self.sample(domain, rng);
                        let text = self.tgt_sentence(&filler.target);
                        sp.push(text.clone());
                        tp.push(text);
                        si += 1;
                        ti += 1;
                    }
                    if rng.gen::<f64>() < noise.wrong_language {
                        let a = self.sample(domain, rng);
                        let b = self.sample(domain, rng);
                        sp.push(self.src_sentence(&a.source));
                        tp.push(self.src_sentence(&b.source));
                        si += 1;
                        ti += 1;
                    }
                }
                if !sp.is_empty() {
                    src_pars.push(sp);
                }
                if !tp.is_empty() {
                    tgt_pars.push(tp);
                }
            }
            docs.push(DocumentPair {
                id,
                source: src_pars,
                target: tgt_pars,
            });
        }
        (docs, gold)
    }

    /// Clean sentence pairs with terminators, for estimating aligner parameters.
    pub fn seed_bitext(&self, n: usize, rng: &mut Rng) -> Vec<RawPair> {
        (0..n)
            .map(|_| {
                let d = rng.gen_range(0..self.domains.len());
                let p = self.sample(d, rng);
                let mut r =
                    RawPair::new(self.src_sentence(&p.source), self.tgt_sentence(&p.target));
                r.domain = Some(d);
                r
            })
            .collect()
    }

    /// Map from source token surface form to its translation in `domain`.
    pub fn lexicon(&self, domain: usize) -> HashMap<String, String> {
        let d = &self.domains[domain];
        d.vocab
            .iter()
            .zip(&d.translation)
            .map(|(&s, &t)| (self.source_forms[s].clone(), self.target_forms[t].clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            domains: 2,
            vocab_size: 20,
            branching: 3,
            pairs: 50,
            ..Default::default()
        }
    }

    #[test]
    fn zero_pairs_is_empty() {
        let s = SyntheticSpec { pairs: 0, ..spec() };
        assert!(generate_synthetic_corpus(&s, 1).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic_corpus(&spec(), 7).unwrap();
        let b = generate_synthetic_corpus(&spec(), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&spec(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn target_is_translation_in_order() {
        let s = spec();
        let world = SyntheticWorld::new(&s, 3).unwrap();
        let corpus = generate_synthetic_corpus(&s, 3).unwrap();
        for pair in corpus.iter() {
            let d = pair.domain.unwrap();
            let lex = world.lexicon(d);
            let mapped: Vec<String> = pair.source.iter().map(|t| lex[t].clone()).collect();
            assert_eq!(pair.target, mapped);
        }
    }

    #[test]
    fn repeated_token_maps_to_repeated_translation() {
        let s = SyntheticSpec {
            domains: 1,
            vocab_size: 1,
            min_len: 2,
            max_len: 2,
            pairs: 1,
            ..Default::default()
        };
        let c = generate_synthetic_corpus(&s, 0).unwrap();
        let p = &c.pairs[0];
        assert_eq!(p.source[0], p.source[1]);
        assert_eq!(p.target[0], p.target[1]);
        assert_eq!(p.domain, Some(0));
    }

    #[test]
    fn mappings_are_bijective_per_domain() {
        let s = SyntheticSpec {
            domains: 3,
            shared_fraction: 0.5,
            divergence: 0.5,
            ..spec()
        };
        let w = SyntheticWorld::new(&s, 11).unwrap();
        for d in &w.domains {
            let mut t = d.translation.clone();
            t.sort_unstable();
            t.dedup();
            assert_eq!(t.len(), d.vocab.len());
        }
    }

    #[test]
    fn shared_targets_give_one_plaintext() {
        let s = SyntheticSpec {
            domains: 3,
            shared_targets: true,
            ..spec()
        };
        let w = SyntheticWorld::new(&s, 4).unwrap();
        assert_eq!(w.target_forms.len(), 20);
        assert_eq!(w.source_forms.len(), 60);
        assert_eq!(w.domains[0].translation, w.domains[2].translation);
        assert!(w.domains[0]
            .vocab
            .iter()
            .all(|v| !w.domains[1].vocab.contains(v)));
    }

    #[test]
    fn order_rules() {
        assert_eq!(OrderRule::Reverse.apply(&[1, 2, 3]), vec![3, 2, 1]);
        assert_eq!(OrderRule::SwapAdjacent.apply(&[1, 2, 3]), vec![2, 1, 3]);
    }

    #[test]
    fn rejects_bad_rates() {
        let mut s = spec();
        s.noise.identical = 1.5;
        assert!(matches!(
            generate_synthetic_corpus(&s, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn noise_free_documents_have_diagonal_gold() {
        let (docs, gold) = generate_synthetic_documents(&spec(), 5).unwrap();
        let total: usize = docs.iter().map(|d| d.source_sentences().len()).sum();
        assert_eq!(total, 50);
        assert_eq!(gold.len(), 50);
        for g in &gold {
            assert_eq!(g.src_index, g.tgt_index);
        }
        for d in &docs {
            assert_eq!(d.source_sentences().len(), d.target_sentences().len());
        }
    }

    #[test]
    fn full_drop_noise_empties_gold() {
        let mut s = spec();
        s.noise.misalignment = 1.0;
        let (docs, gold) = generate_synthetic_documents(&s, 5).unwrap();
        assert!(gold.is_empty());
        assert!(docs.iter().all(|d| d.target.is_empty()));
    }

    #[test]
    fn documents_are_deterministic() {
        let mut s = spec();
        s.noise = NoiseRates {
            identical: 0.1,
            wrong_language: 0.1,
            misalignment: 0.2,
            merge_fraction: 0.5,
        };
        assert_eq!(
            generate_synthetic_documents(&s, 9).unwrap(),
            generate_synthetic_documents(&s, 9).unwrap()
        );
    }
}
