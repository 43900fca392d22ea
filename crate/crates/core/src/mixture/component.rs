use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::corpus::io::write_atomic;
use crate::corpus::{SentencePair, Vocab};
use crate::corpus::{BOS, UNK};
use crate::error::{Error, Result};

const HEADER: &str = "COMPONENT v1";
const NULL_NAME: &str = "<NULL>";

/// Sparse real-valued counts for one conditioning context.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Row {
    pub total: f64,
    pub counts: BTreeMap<u32, f64>,
}

impl Row {
    fn add(&mut self, e: u32, v: f64) {
        *self.counts.entry(e).or_insert(0.0) += v;
        self.total += v;
    }
}

/// Smoothing and interpolation settings of a component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentParams {
    /// Weight of the target bigram against the lexical term.
    pub lambda: f64,
    /// Additive smoothing on lexical and bigram counts.
    pub delta: f64,
    /// Prior mean of the geometric length parameter.
    pub rho: f64,
}

impl Default for ComponentParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            delta: 0.01,
            rho: 0.5,
        }
    }
}

impl ComponentParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("rho", self.rho)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0,1)")));
            }
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta = {} must be > 0", self.delta)));
        }
        Ok(())
    }
}

/// Lexicon + bigram translation model:
/// p(y|x) = p_len(|y|) · Π_j [λ·p_bi(y_j|y_{j-1}) + (1-λ)·(1/(|x|+1))·Σ_{i∈NULL∪x} t(y_j|x_i)].
///
/// Target distributions range over `<unk>` and the non-reserved target
/// vocabulary. All counts are real so instances can carry fractional weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    src_vocab: Arc<Vocab>,
    tgt_vocab: Arc<Vocab>,
    pub params: ComponentParams,
    /// Indexed by source id; the extra last row is NULL.
    lex: Vec<Row>,
    /// Indexed by previous target id (`<s>` for the first token).
    bigram: Vec<Row>,
    /// Total instance weight seen.
    len_weight: f64,
    /// Σ weight·|y|.
    len_target: f64,
    /// Σ weight·|x|.
    len_source: f64,
}

/// Ids of `<unk>` followed by every non-reserved target id.
pub(crate) fn output_ids(vocab: &Vocab) -> impl Iterator<Item = u32> {
    std::iter::once(UNK).chain(4..vocab.len() as u32)
}

impl Component {
    pub fn new(src_vocab: Arc<Vocab>, tgt_vocab: Arc<Vocab>, params: ComponentParams) -> Self {
        let lex = vec![Row::default(); src_vocab.len() + 1];
        let bigram = vec![Row::default(); tgt_vocab.len()];
        Component {
            src_vocab,
            tgt_vocab,
            params,
            lex,
            bigram,
            len_weight: 0.0,
            len_target: 0.0,
            len_source: 0.0,
        }
    }

    pub fn source_vocab(&self) -> &Arc<Vocab> {
        &self.src_vocab
    }

    pub fn target_vocab(&self) -> &Arc<Vocab> {
        &self.tgt_vocab
    }

    /// Number of outcomes of each target distribution.
    pub fn output_size(&self) -> usize {
        self.tgt_vocab.len() - 3
    }

    pub(crate) fn null_row(&self) -> u32 {
        self.src_vocab.len() as u32
    }

    pub fn encode(&self, pair: &SentencePair) -> (Vec<u32>, Vec<u32>) {
        (
            self.src_vocab.encode(&pair.source),
            self.tgt_vocab.encode(&pair.target),
        )
    }

    fn smoothed(&self, row: &Row, e: u32) -> f64 {
        let c = row.counts.get(&e).copied().unwrap_or(0.0);
        let d = self.params.delta;
        (c + d) / (row.total + d * self.output_size() as f64)
    }

    /// t(e | source row); the NULL row is [`Self::null_row`].
    pub fn t(&self, f: u32, e: u32) -> f64 {
        self.smoothed(&self.lex[f as usize], e)
    }

    pub fn p_bigram(&self, prev: u32, e: u32) -> f64 {
        self.smoothed(&self.bigram[prev as usize], e)
    }

    /// Geometric parameter ρ of p_len(L) = ρ(1-ρ)^L.
    pub fn rho(&self) -> f64 {
        (self.len_weight + 2.0 * self.params.rho) / (self.len_weight + self.len_target + 2.0)
    }

    pub fn log_p_len(&self, len: usize) -> f64 {
        let rho = self.rho();
        rho.ln() + len as f64 * (1.0 - rho).ln()
    }

    /// Expected target length per source token.
    pub fn length_ratio(&self) -> f64 {
        (self.len_target + 1.0) / (self.len_source + 1.0)
    }

    /// (1/(|x|+1)) Σ_{i∈NULL∪x} t(e|x_i).
    fn lexical(&self, src: &[u32], e: u32) -> f64 {
        let mut s = self.t(self.null_row(), e);
        for &f in src {
            s += self.t(f, e);
        }
        s / (src.len() as f64 + 1.0)
    }

    /// Probability of target token `e` after `prev` given the source.
    pub fn p_token(&self, src: &[u32], prev: u32, e: u32) -> f64 {
        let l = self.params.lambda;
        l * self.p_bigram(prev, e) + (1.0 - l) * self.lexical(src, e)
    }

    pub fn score_ids(&self, src: &[u32], tgt: &[u32]) -> f64 {
        let mut s = self.log_p_len(tgt.len());
        let mut prev = BOS;
        for &e in tgt {
            s += self.p_token(src, prev, e).ln();
            prev = e;
        }
        s
    }

    /// Dense lexical term over target ids (reserved ids other than `<unk>` are 0).
    pub fn lexical_vector(&self, src: &[u32]) -> Vec<f64> {
        let d = self.params.delta;
        let out = self.output_size() as f64;
        let norm = 1.0 / (src.len() as f64 + 1.0);
        let mut v = vec![0.0; self.tgt_vocab.len()];
        let mut base = 0.0;
        for f in src.iter().copied().chain(std::iter::once(self.null_row())) {
            let row = &self.lex[f as usize];
            let denom = row.total + d * out;
            base += d / denom;
            for (&e, &c) in &row.counts {
                v[e as usize] += c / denom;
            }
        }
        for e in output_ids(&self.tgt_vocab) {
            v[e as usize] = (v[e as usize] + base) * norm;
        }
        v
    }

    /// Dense bigram distribution after `prev`.
    pub fn bigram_vector(&self, prev: u32) -> Vec<f64> {
        let row = &self.bigram[prev as usize];
        let denom = row.total + self.params.delta * self.output_size() as f64;
        let mut v = vec![0.0; self.tgt_vocab.len()];
        for e in output_ids(&self.tgt_vocab) {
            v[e as usize] = self.params.delta / denom;
        }
        for (&e, &c) in &row.counts {
            v[e as usize] += c / denom;
        }
        v
    }

    /// Add posterior-weighted counts. Lexical responsibilities are computed
    /// against the tables as they were before the batch, and identical pairs
    /// are merged first, so the result does not depend on batch order.
    pub fn update(&mut self, batch: &[(&SentencePair, f64)]) -> Result<()> {
        let mut groups: BTreeMap<(Vec<u32>, Vec<u32>), Vec<f64>> = BTreeMap::new();
        for (pair, w) in batch {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::Contract(format!(
                    "instance weight {w} is not a finite non-negative number"
                )));
            }
            if *w > 0.0 {
                groups.entry(self.encode(pair)).or_default().push(*w);
            }
        }
        let mut lex_delta: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        let mut bi_delta: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        let (mut dw, mut dt, mut ds) = (0.0, 0.0, 0.0);
        let null = self.null_row();
        for ((src, tgt), mut ws) in groups {
            ws.sort_by(f64::total_cmp);
            let w: f64 = ws.iter().sum();
            let mut prev = BOS;
            for &e in &tgt {
                let probs: Vec<f64> = std::iter::once(null)
                    .chain(src.iter().copied())
                    .map(|f| self.t(f, e))
                    .collect();
                let z: f64 = probs.iter().sum();
                for (f, p) in std::iter::once(null).chain(src.iter().copied()).zip(probs) {
                    *lex_delta.entry((f, e)).or_insert(0.0) += w * p / z;
                }
                *bi_delta.entry((prev, e)).or_insert(0.0) += w;
                prev = e;
            }
            dw += w;
            dt += w * tgt.len() as f64;
            ds += w * src.len() as f64;
        }
        for ((f, e), v) in lex_delta {
            self.lex[f as usize].add(e, v);
        }
        for ((p, e), v) in bi_delta {
            self.bigram[p as usize].add(e, v);
        }
        self.len_weight += dw;
        self.len_target += dt;
        self.len_source += ds;
        Ok(())
    }

    /// Multiply every count by `factor` in [0, 1].
    pub fn scale(&mut self, factor: f64) {
        for row in self.lex.iter_mut().chain(self.bigram.iter_mut()) {
            row.total *= factor;
            for c in row.counts.values_mut() {
                *c *= factor;
            }
        }
        self.len_weight *= factor;
        self.len_target *= factor;
        self.len_source *= factor;
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let p = &self.params;
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "params\t{}\t{}\t{}", p.lambda, p.delta, p.rho);
        let _ = writeln!(
            out,
            "length\t{}\t{}\t{}",
            self.len_weight, self.len_target, self.len_source
        );
        let src_name = |f: usize| {
            if f == self.src_vocab.len() {
                NULL_NAME
            } else {
                self.src_vocab.token(f as u32)
            }
        };
        for (f, row) in self.lex.iter().enumerate() {
            if !row.counts.is_empty() {
                let _ = writeln!(out, "lexsum\t{}\t{}", src_name(f), row.total);
            }
            for (&e, &c) in &row.counts {
                let _ = writeln!(
                    out,
                    "lex\t{}\t{}\t{c}",
                    src_name(f),
                    self.tgt_vocab.token(e)
                );
            }
        }
        for (prev, row) in self.bigram.iter().enumerate() {
            if !row.counts.is_empty() {
                let _ = writeln!(
                    out,
                    "bisum\t{}\t{}",
                    self.tgt_vocab.token(prev as u32),
                    row.total
                );
            }
            for (&e, &c) in &row.counts {
                let _ = writeln!(
                    out,
                    "bi\t{}\t{}\t{c}",
                    self.tgt_vocab.token(prev as u32),
                    self.tgt_vocab.token(e)
                );
            }
        }
        write_atomic(path, out.as_bytes())
    }

    pub fn read(path: &Path, src_vocab: Arc<Vocab>, tgt_vocab: Arc<Vocab>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        if lines.next().map(|(_, l)| l) != Some(HEADER) {
            return Err(Error::parse(path, 1, format!("expected `{HEADER}`")));
        }
        let num = |ln: usize, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::parse(path, ln, format!("bad number {s:?}")))
        };
        let mut triple = |tag: &str| -> Result<[f64; 3]> {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("missing `{tag}` line")))?;
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 4 || cols[0] != tag {
                return Err(Error::parse(
                    path,
                    ln,
                    format!("expected `{tag}` and three numbers"),
                ));
            }
            Ok([num(ln, cols[1])?, num(ln, cols[2])?, num(ln, cols[3])?])
        };
        let [lambda, delta, rho] = triple("params")?;
        let [w, t, s] = triple("length")?;
        let params = ComponentParams { lambda, delta, rho };
        params.validate()?;
        let mut c = Component::new(src_vocab, tgt_vocab, params);
        c.len_weight = w;
        c.len_target = t;
        c.len_source = s;
        let mut totals: Vec<(bool, u32, f64)> = Vec::new();
        for (ln, l) in lines {
            if l.is_empty() {
                continue;
            }
            let cols: Vec<&str> = l.split('\t').collect();
            let bad = |m: &str| Error::parse(path, ln, m.to_string());
            if cols.len() == 3 && (cols[0] == "lexsum" || cols[0] == "bisum") {
                let lexical = cols[0] == "lexsum";
                let f = if !lexical {
                    c.tgt_vocab
                        .get(cols[1])
                        .ok_or_else(|| bad("unknown target context"))?
                } else if cols[1] == NULL_NAME {
                    c.null_row()
                } else {
                    c.src_vocab
                        .get(cols[1])
                        .ok_or_else(|| bad("unknown source token"))?
                };
                totals.push((lexical, f, num(ln, cols[2])?));
                continue;
            }
            if cols.len() != 4 {
                return Err(bad("expected kind<TAB>context<TAB>token<TAB>count"));
            }
            let e = c
                .tgt_vocab
                .get(cols[2])
                .ok_or_else(|| bad("unknown target token"))?;
            let v = num(ln, cols[3])?;
            match cols[0] {
                "lex" => {
                    let f = if cols[1] == NULL_NAME {
                        c.null_row()
                    } else {
                        c.src_vocab
                            .get(cols[1])
                            .ok_or_else(|| bad("unknown source token"))?
                    };
                    c.lex[f as usize].add(e, v);
                }
                "bi" => {
                    let p = c
                        .tgt_vocab
                        .get(cols[1])
                        .ok_or_else(|| bad("unknown target context"))?;
                    c.bigram[p as usize].add(e, v);
                }
                _ => return Err(bad("line kind must be `lex`, `bi`, `lexsum` or `bisum`")),
            }
        }
        for (lexical, f, total) in totals {
            let row = if lexical {
                &mut c.lex[f as usize]
            } else {
                &mut c.bigram[f as usize]
            };
            row.total = total;
        }
        Ok(c)
    }
}

/// log p(y|x) under one component.
pub fn component_score(c: &Component, pair: &SentencePair) -> f64 {
    let (src, tgt) = c.encode(pair);
    c.score_ids(&src, &tgt)
}

/// A copy of `c` with the weighted batch added.
pub fn component_update(c: &Component, batch: &[(&SentencePair, f64)]) -> Result<Component> {
    let mut out = c.clone();
    out.update(batch)?;
    Ok(out)
}
