use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::corpus::io::write_atomic;
use crate::error::{Error, Result};
use crate::rng;

pub const GATE_BITS: u32 = 16;
pub const GATE_DIM: usize = 1 << GATE_BITS;
const HEADER: &str = "GATE v1";

/// Sparse feature vector: sorted distinct indices with values.
pub type Features = Vec<(u32, f64)>;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hashed character 1-, 2- and 3-grams of the source, L2-normalized.
/// Tokens are joined by spaces and the text is framed by `^` and `$`.
pub fn features<S: AsRef<str>>(source: &[S]) -> Features {
    let mut text = vec!['^'];
    for (i, t) in source.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        text.extend(t.as_ref().chars());
    }
    text.push('$');
    let mut idx: Vec<u32> = Vec::new();
    let mut buf = String::new();
    for n in 1..=3usize {
        for w in text.windows(n) {
            buf.clear();
            buf.push(char::from(b'0' + n as u8));
            buf.extend(w);
            idx.push((fnv1a(buf.as_bytes()) % GATE_DIM as u64) as u32);
        }
    }
    idx.sort_unstable();
    let mut out: Features = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((j, v)) if *j == i => *v += 1.0,
            _ => out.push((i, 1.0)),
        }
    }
    let norm = out.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    for (_, v) in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Linear softmax classifier over hashed n-gram features giving p(z|x).
#[derive(Debug, Clone, PartialEq)]
pub struct GateModel {
    k: usize,
    /// Row-major K × GATE_DIM.
    weights: Vec<f64>,
    bias: Vec<f64>,
    /// A frozen gate is never trained (the uniform strategy's constant 1/K).
    pub frozen: bool,
}

impl GateModel {
    /// Zero weights: predicts the uniform distribution.
    pub fn uniform(k: usize) -> Self {
        GateModel {
            k,
            weights: vec![0.0; k * GATE_DIM],
            bias: vec![0.0; k],
            frozen: false,
        }
    }

    pub fn frozen_uniform(k: usize) -> Self {
        GateModel {
            frozen: true,
            ..Self::uniform(k)
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weight(&self, z: usize, feature: usize) -> f64 {
        self.weights[z * GATE_DIM + feature]
    }

    pub fn set_weight(&mut self, z: usize, feature: usize, v: f64) {
        self.weights[z * GATE_DIM + feature] = v;
    }

    pub fn predict_features(&self, x: &Features) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.k)
            .map(|z| {
                let row = &self.weights[z * GATE_DIM..(z + 1) * GATE_DIM];
                self.bias[z] + x.iter().map(|&(i, v)| row[i as usize] * v).sum::<f64>()
            })
            .collect();
        softmax(&logits)
    }

    fn sgd_step(&mut self, x: &Features, target: &[f64], lr: f64) {
        let p = self.predict_features(x);
        for z in 0..self.k {
            let g = p[z] - target[z];
            if g == 0.0 {
                continue;
            }
            let row = &mut self.weights[z * GATE_DIM..(z + 1) * GATE_DIM];
            for &(i, v) in x {
                row[i as usize] -= lr * g * v;
            }
            self.bias[z] -= lr * g;
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER} {} {}", self.k, GATE_DIM);
        let _ = writeln!(out, "frozen\t{}", self.frozen);
        let bias: Vec<String> = self.bias.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(out, "bias\t{}", bias.join("\t"));
        for z in 0..self.k {
            for i in 0..GATE_DIM {
                let w = self.weights[z * GATE_DIM + i];
                if w != 0.0 {
                    let _ = writeln!(out, "{z}\t{i}\t{w}");
                }
            }
        }
        write_atomic(path, out.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |ln: usize, m: &str| Error::parse(path, ln, m.to_string());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty gate file"))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 4
            || format!("{} {}", parts[0], parts[1]) != HEADER
            || parts[3] != GATE_DIM.to_string()
        {
            return Err(bad(1, &format!("expected `{HEADER} <K> {GATE_DIM}`")));
        }
        let k: usize = parts[2].parse().map_err(|_| bad(1, "bad K"))?;
        let mut g = GateModel::uniform(k);
        let (ln, l) = lines.next().ok_or_else(|| bad(2, "missing frozen line"))?;
        g.frozen = match l {
            "frozen\ttrue" => true,
            "frozen\tfalse" => false,
            _ => return Err(bad(ln, "expected frozen<TAB>true|false")),
        };
        let (ln, l) = lines.next().ok_or_else(|| bad(3, "missing bias line"))?;
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != k + 1 || cols[0] != "bias" {
            return Err(bad(ln, "expected bias with K values"));
        }
        for (z, c) in cols[1..].iter().enumerate() {
            g.bias[z] = c.parse().map_err(|_| bad(ln, "bad bias value"))?;
        }
        for (ln, l) in lines {
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad(ln, "expected class<TAB>feature<TAB>weight"));
            }
            let z: usize = cols[0].parse().map_err(|_| bad(ln, "bad class"))?;
            let i: usize = cols[1].parse().map_err(|_| bad(ln, "bad feature"))?;
            let w: f64 = cols[2].parse().map_err(|_| bad(ln, "bad weight"))?;
            if z >= k || i >= GATE_DIM {
                return Err(bad(ln, "index out of range"));
            }
            g.weights[z * GATE_DIM + i] = w;
        }
        Ok(g)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn gate_predict<S: AsRef<str>>(g: &GateModel, source: &[S]) -> Vec<f64> {
    g.predict_features(&features(source))
}

/// Mean cross-entropy of the gate against (soft) targets.
pub fn gate_loss(g: &GateModel, examples: &[(Features, Vec<f64>)]) -> f64 {
    let total: f64 = examples
        .iter()
        .map(|(x, t)| {
            let p = g.predict_features(x);
            -t.iter()
                .zip(&p)
                .map(|(t, p)| if *t > 0.0 { t * p.ln() } else { 0.0 })
                .sum::<f64>()
        })
        .sum();
    total / examples.len() as f64
}

/// Gradient of [`gate_loss`] with respect to weight (z, feature).
pub fn gate_gradient(
    g: &GateModel,
    examples: &[(Features, Vec<f64>)],
    z: usize,
    feature: usize,
) -> f64 {
    let total: f64 = examples
        .iter()
        .map(|(x, t)| {
            let v = x
                .iter()
                .find(|(i, _)| *i as usize == feature)
                .map_or(0.0, |e| e.1);
            if v == 0.0 {
                return 0.0;
            }
            let p = g.predict_features(x);
            (p[z] - t[z]) * v
        })
        .sum();
    total / examples.len() as f64
}

/// Options for gate SGD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateTraining {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GateTraining {
    fn default() -> Self {
        Self {
            epochs: 3,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

/// Continue training `g` with SGD on cross-entropy, visiting examples in a
/// seeded shuffled order each epoch. A frozen gate is left unchanged.
pub fn gate_fit<S: AsRef<str>>(
    g: &mut GateModel,
    examples: &[(&[S], Vec<f64>)],
    opts: GateTraining,
) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Input(
            "gate training needs at least one example".into(),
        ));
    }
    for (_, t) in examples {
        if t.len() != g.k {
            return Err(Error::Input(format!(
                "gate target has {} classes, expected {}",
                t.len(),
                g.k
            )));
        }
    }
    if g.frozen {
        return Ok(());
    }
    let feats: Vec<Features> = examples.iter().map(|(s, _)| features(s)).collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng::rng(opts.seed, 0x6a7e + epoch as u64));
        for &i in &order {
            g.sgd_step(&feats[i], &examples[i].1, opts.learning_rate);
        }
    }
    Ok(())
}

/// A fresh gate with `k` classes trained on `examples`.
pub fn gate_train<S: AsRef<str>>(
    examples: &[(&[S], Vec<f64>)],
    k: usize,
    opts: GateTraining,
) -> Result<GateModel> {
    let mut g = GateModel::uniform(k);
    gate_fit(&mut g, examples, opts)?;
    Ok(g)
}
