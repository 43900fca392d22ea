use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::io::write_atomic;
use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const NULL_TOKEN: &str = "<NULL>";

/// Lexical translation table t(target | source) with a NULL source row.
#[derive(Debug, Clone, PartialEq)]
pub struct TTable {
    src_tokens: Vec<String>,
    src_index: HashMap<String, u32>,
    tgt_tokens: Vec<String>,
    tgt_index: HashMap<String, u32>,
    /// Row per source id; id 0 is NULL.
    rows: Vec<BTreeMap<u32, f64>>,
}

impl Default for TTable {
    fn default() -> Self {
        let mut t = TTable {
            src_tokens: Vec::new(),
            src_index: HashMap::new(),
            tgt_tokens: Vec::new(),
            tgt_index: HashMap::new(),
            rows: Vec::new(),
        };
        t.src_id_or_insert(NULL_TOKEN);
        t
    }
}

impl TTable {
    fn src_id_or_insert(&mut self, tok: &str) -> u32 {
        if let Some(&i) = self.src_index.get(tok) {
            return i;
        }
        let i = self.src_tokens.len() as u32;
        self.src_tokens.push(tok.to_string());
        self.src_index.insert(tok.to_string(), i);
        self.rows.push(BTreeMap::new());
        i
    }

    fn tgt_id_or_insert(&mut self, tok: &str) -> u32 {
        if let Some(&i) = self.tgt_index.get(tok) {
            return i;
        }
        let i = self.tgt_tokens.len() as u32;
        self.tgt_tokens.push(tok.to_string());
        self.tgt_index.insert(tok.to_string(), i);
        i
    }

    pub fn src_id(&self, tok: &str) -> Option<u32> {
        self.src_index.get(tok).copied()
    }

    pub fn tgt_id(&self, tok: &str) -> Option<u32> {
        self.tgt_index.get(tok).copied()
    }

    /// Probability by ids; unknown pairs are 0.
    pub fn prob_ids(&self, src: u32, tgt: u32) -> f64 {
        self.rows
            .get(src as usize)
            .and_then(|r| r.get(&tgt))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn prob(&self, src: &str, tgt: &str) -> f64 {
        match (self.src_id(src), self.tgt_id(tgt)) {
            (Some(s), Some(t)) => self.prob_ids(s, t),
            _ => 0.0,
        }
    }

    pub fn null_id(&self) -> u32 {
        0
    }

    /// Source tokens with a row (NULL first).
    pub fn source_tokens(&self) -> &[String] {
        &self.src_tokens
    }

    pub fn target_len(&self) -> usize {
        self.tgt_tokens.len()
    }

    /// Sum of each row; 1 for every trained source token.
    pub fn row_sums(&self) -> Vec<(String, f64)> {
        self.src_tokens
            .iter()
            .zip(&self.rows)
            .map(|(s, r)| (s.clone(), r.values().sum()))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for (s, row) in self.src_tokens.iter().zip(&self.rows) {
            for (&t, &p) in row {
                writeln!(buf, "{}\t{}\t{:e}", s, self.tgt_tokens[t as usize], p)?;
            }
        }
        write_atomic(path, &buf)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut t = TTable::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = || Error::parse(path, i + 1, "expected src<TAB>tgt<TAB>prob");
            if cols.len() != 3 {
                return Err(bad());
            }
            let p: f64 = cols[2].parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("probability {p} out of range"),
                ));
            }
            let s = t.src_id_or_insert(cols[0]);
            let e = t.tgt_id_or_insert(cols[1]);
            t.rows[s as usize].insert(e, p);
        }
        Ok(t)
    }
}

struct IdCorpus {
    pairs: Vec<(Vec<u32>, Vec<u32>)>,
}

fn index_corpus(corpus: &Corpus, table: &mut TTable) -> IdCorpus {
    let pairs = corpus
        .iter()
        .map(|p| {
            let mut src = vec![0u32];
            src.extend(p.source.iter().map(|s| table.src_id_or_insert(s)));
            let tgt = p.target.iter().map(|t| table.tgt_id_or_insert(t)).collect();
            (src, tgt)
        })
        .collect();
    IdCorpus { pairs }
}

/// Probability lookup that treats an untrained table as uniform.
fn t_of(table: &TTable, uniform: Option<f64>, s: u32, e: u32) -> f64 {
    match uniform {
        Some(u) => u,
        None => table.prob_ids(s, e),
    }
}

fn log_likelihood(ids: &IdCorpus, table: &TTable, uniform: Option<f64>) -> f64 {
    let mut ll = 0.0;
    for (src, tgt) in &ids.pairs {
        let norm = (src.len() as f64).ln();
        for &e in tgt {
            let total: f64 = src.iter().map(|&s| t_of(table, uniform, s, e)).sum();
            ll += total.ln() - norm;
        }
    }
    ll
}

/// Expected alignment counts c(f, e) under the current table (one E-step).
fn expected_counts(
    ids: &IdCorpus,
    table: &TTable,
    uniform: Option<f64>,
) -> Vec<BTreeMap<u32, f64>> {
    let mut counts = vec![BTreeMap::new(); table.rows.len()];
    for (src, tgt) in &ids.pairs {
        for &e in tgt {
            let total: f64 = src.iter().map(|&s| t_of(table, uniform, s, e)).sum();
            if total <= 0.0 {
                continue;
            }
            for &s in src {
                let r = t_of(table, uniform, s, e) / total;
                *counts[s as usize].entry(e).or_insert(0.0) += r;
            }
        }
    }
    counts
}

/// Outcome of Model-1 training: the table plus the log-likelihood before
/// training and after every iteration.
#[derive(Debug, Clone)]
pub struct Model1Fit {
    pub table: TTable,
    pub log_likelihood: Vec<f64>,
    /// Expected counts gathered in the first E-step, as (source, target, count).
    pub first_counts: Vec<(String, String, f64)>,
}

/// Classic Model-1 EM with a NULL source word, starting from uniform t(e|f).
pub fn train_model1(pairs: &Corpus, iterations: usize) -> Result<Model1Fit> {
    if pairs.is_empty() {
        return Err(Error::Input("train_model1: empty corpus".into()));
    }
    if iterations == 0 {
        return Err(Error::Config(
            "train_model1: iterations must be >= 1".into(),
        ));
    }
    let mut table = TTable::default();
    let ids = index_corpus(pairs, &mut table);
    let uniform = Some(1.0 / table.tgt_tokens.len() as f64);
    let mut trace = vec![log_likelihood(&ids, &table, uniform)];
    let mut first_counts = Vec::new();
    for it in 0..iterations {
        let u = if it == 0 { uniform } else { None };
        let counts = expected_counts(&ids, &table, u);
        if it == 0 {
            for (s, row) in counts.iter().enumerate() {
                for (&e, &c) in row {
                    first_counts.push((
                        table.src_tokens[s].clone(),
                        table.tgt_tokens[e as usize].clone(),
                        c,
                    ));
                }
            }
        }
        for (row, c) in table.rows.iter_mut().zip(counts) {
            let total: f64 = c.values().sum();
            *row = if total > 0.0 {
                c.into_iter().map(|(e, v)| (e, v / total)).collect()
            } else {
                BTreeMap::new()
            };
        }
        trace.push(log_likelihood(&ids, &table, None));
    }
    Ok(Model1Fit {
        table,
        log_likelihood: trace,
        first_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SentencePair;

    fn corpus(pairs: &[(&str, &str)]) -> Corpus {
        pairs
            .iter()
            .map(|(s, t)| {
                SentencePair::new(
                    s.split_whitespace().map(String::from).collect(),
                    t.split_whitespace().map(String::from).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn one_step_on_single_pair_splits_counts_with_null() {
        let fit = train_model1(&corpus(&[("a", "x")]), 1).unwrap();
        let mut counts = fit.first_counts.clone();
        counts.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(counts.len(), 2);
        assert!(counts.iter().all(|c| (c.2 - 0.5).abs() < 1e-12));
        // each row normalizes over the single observed target
        assert!((fit.table.prob("a", "x") - 1.0).abs() < 1e-12);
        assert!((fit.table.prob(NULL_TOKEN, "x") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cooccurrence_sharpens_translation() {
        let c = corpus(&[("a", "x"), ("b", "y"), ("a b", "x y")]);
        let fit = train_model1(&c, 10).unwrap();
        assert!(fit.table.prob("a", "x") > fit.table.prob("a", "y"));
        assert!(fit.table.prob("b", "y") > fit.table.prob("b", "x"));
    }

    #[test]
    fn rows_normalized_and_likelihood_monotone() {
        let c = corpus(&[
            ("a b c", "x y z"),
            ("a c", "x z"),
            ("b d", "y w"),
            ("d a", "w x"),
            ("c c b", "z z y"),
        ]);
        let fit = train_model1(&c, 15).unwrap();
        for (_, s) in fit.table.row_sums() {
            assert!((s - 1.0).abs() < 1e-9);
        }
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            train_model1(&Corpus::default(), 1),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let c = corpus(&[("a b", "x y"), ("a", "x")]);
        let t = train_model1(&c, 3).unwrap().table;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        t.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().any(|l| l.starts_with("<NULL>\t")));
        let back = TTable::read(&path).unwrap();
        for s in ["a", "b", NULL_TOKEN] {
            for e in ["x", "y"] {
                assert!((back.prob(s, e) - t.prob(s, e)).abs() < 1e-15);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn likelihood_never_decreases(
            rows in proptest::collection::vec(("[a-e]( [a-e]){0,4}", "[v-z]( [v-z]){0,4}"), 1..12),
        ) {
            let pairs: Vec<(&str, &str)> = rows.iter().map(|(s, t)| (s.as_str(), t.as_str())).collect();
            let fit = train_model1(&corpus(&pairs), 6).unwrap();
            for w in fit.log_likelihood.windows(2) {
                proptest::prop_assert!(w[1] >= w[0] - 1e-9);
            }
            for (_, s) in fit.table.row_sums() {
                proptest::prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}
