//! Balanced hard assignment of instances to mixture components.
//!
//! Given log-likelihoods `scores[i][z]`, pick `z_i` for every instance so that
//! each component receives exactly `B` instances and the summed score is
//! maximal. [`solve_balanced_hillclimb`] is the production solver;
//! [`solve_balanced_exact`] is an exact oracle for small instances.

mod exact;
mod hill;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use exact::{
    solve_balanced_enumerate, solve_balanced_exact, solve_balanced_flow, ENUMERATION_CAP, EXACT_CAP,
};
pub use hill::{greedy_init, hillclimb_with_trace, solve_balanced_hillclimb, HillClimbRun};

use crate::corpus::io::write_atomic;
use crate::error::{Error, Result};

/// Row-major N × K matrix of finite log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(k: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if k == 0 {
            return Err(Error::Input(
                "score matrix needs at least one component".into(),
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * k);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(Error::Input(format!(
                    "row {i} has {} entries, expected {k}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(rows.len(), k, data)
    }

    pub fn from_flat(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || data.len() != n * k {
            return Err(Error::Input(format!(
                "{} values do not form a {n} x {k} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite score at row {}, column {}",
                pos / k,
                pos % k
            )));
        }
        Ok(ScoreMatrix { n, k, data })
    }

    /// Convenience for literal matrices; `k` is taken from the first row.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(1, Vec::len);
        Self::new(k, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, z: usize) -> f64 {
        self.data[i * self.k + z]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    /// Checks that N = K·b.
    pub fn check_batch(&self, b: usize) -> Result<()> {
        if !self.n.is_multiple_of(self.k) {
            return Err(Error::Input(format!(
                "N = {} is not divisible by K = {}",
                self.n, self.k
            )));
        }
        if self.n != self.k * b {
            return Err(Error::Input(format!(
                "N = {} but K·B = {}·{} = {}",
                self.n,
                self.k,
                b,
                self.k * b
            )));
        }
        Ok(())
    }

    /// One row per line, comma separated.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
        }
        Self::from_rows(&rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for i in 0..self.n {
            let cells: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(buf, "{}", cells.join(","))?;
        }
        write_atomic(path, &buf)
    }
}

/// Component index per instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &z in &self.0 {
            if z < k {
                c[z] += 1;
            }
        }
        c
    }

    /// True when every entry is below `k` and each component holds `b` instances.
    pub fn is_balanced(&self, k: usize, b: usize) -> bool {
        self.0.iter().all(|&z| z < k) && self.counts(k).iter().all(|&c| c == b)
    }
}

/// Σ_i scores[i][a_i] for a feasible assignment.
pub fn objective(scores: &ScoreMatrix, a: &Assignment) -> Result<f64> {
    if a.0.len() != scores.n() {
        return Err(Error::Contract(format!(
            "assignment has {} entries for {} instances",
            a.0.len(),
            scores.n()
        )));
    }
    let b = scores.n() / scores.k();
    if !scores.n().is_multiple_of(scores.k()) || !a.is_balanced(scores.k(), b) {
        return Err(Error::Contract(format!(
            "assignment is not balanced: counts {:?}",
            a.counts(scores.k())
        )));
    }
    Ok(raw_objective(scores, &a.0))
}

pub(crate) fn raw_objective(scores: &ScoreMatrix, z: &[usize]) -> f64 {
    z.iter().enumerate().map(|(i, &c)| scores.get(i, c)).sum()
}
