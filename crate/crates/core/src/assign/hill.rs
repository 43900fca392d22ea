use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{raw_objective, Assignment, ScoreMatrix};
use crate::error::{Error, Result};
use crate::rng;

const MIN_GAIN: f64 = 1e-12;

/// Result of a multi-restart hill climb.
#[derive(Debug, Clone)]
pub struct HillClimbRun {
    pub assignment: Assignment,
    pub objective: f64,
    /// Index of the restart that produced `assignment`.
    pub best_restart: usize,
    /// Objective at the start of each restart and after every accepted swap.
    pub traces: Vec<Vec<f64>>,
}

/// Instances in decreasing order of (best − second best) score, each placed
/// in its best component that still has room.
pub fn greedy_init(scores: &ScoreMatrix, b: usize) -> Vec<usize> {
    let (n, k) = (scores.n(), scores.k());
    let margin = |i: usize| {
        let mut r: Vec<f64> = scores.row(i).to_vec();
        r.sort_by(|x, y| y.total_cmp(x));
        if k > 1 {
            r[0] - r[1]
        } else {
            0.0
        }
    };
    let mut order: Vec<(f64, usize)> = (0..n).map(|i| (margin(i), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut counts = vec![0; k];
    let mut z = vec![0; n];
    for (_, i) in order {
        let mut best = None;
        for c in 0..k {
            if counts[c] < b && best.is_none_or(|bc: usize| scores.get(i, c) > scores.get(i, bc)) {
                best = Some(c);
            }
        }
        let c = best.expect("capacity left for every instance");
        counts[c] += 1;
        z[i] = c;
    }
    z
}

fn random_balanced(n: usize, k: usize, b: usize, seed: u64, restart: usize) -> Vec<usize> {
    let mut z: Vec<usize> = (0..k).flat_map(|c| std::iter::repeat_n(c, b)).collect();
    debug_assert_eq!(z.len(), n);
    z.shuffle(&mut rng::rng(seed, restart as u64));
    z
}

/// First-improvement pairwise swaps until no swap gains or `max_moves` is hit.
fn climb(scores: &ScoreMatrix, b: usize, z: &mut [usize], max_moves: usize) -> Vec<f64> {
    let n = z.len();
    let mut value = raw_objective(scores, z);
    let mut trace = vec![value];
    let mut moves = 0;
    'outer: loop {
        let mut improved = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, c) = (z[i], z[j]);
                if a == c {
                    continue;
                }
                let gain =
                    scores.get(i, c) + scores.get(j, a) - scores.get(i, a) - scores.get(j, c);
                if gain > MIN_GAIN {
                    if moves == max_moves {
                        break 'outer;
                    }
                    z.swap(i, j);
                    value += gain;
                    trace.push(value);
                    moves += 1;
                    improved = true;
                    debug_assert!(Assignment(z.to_vec()).is_balanced(scores.k(), b));
                }
            }
        }
        if !improved {
            break;
        }
    }
    trace
}

/// Restart 0 starts from the greedy initialisation, later restarts from
/// seeded random balanced assignments. Restarts run in parallel; the best
/// objective wins, ties going to the lowest restart index.
pub fn hillclimb_with_trace(
    scores: &ScoreMatrix,
    b: usize,
    seed: u64,
    restarts: usize,
    max_moves: usize,
) -> Result<HillClimbRun> {
    scores.check_batch(b)?;
    if restarts == 0 {
        return Err(Error::Config("restarts must be >= 1".into()));
    }
    let (n, k) = (scores.n(), scores.k());
    let runs: Vec<(Vec<usize>, f64, Vec<f64>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut z = if r == 0 {
                greedy_init(scores, b)
            } else {
                random_balanced(n, k, b, seed, r)
            };
            let trace = climb(scores, b, &mut z, max_moves);
            // recompute to avoid drift from incremental updates
            let v = raw_objective(scores, &z);
            (z, v, trace)
        })
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1 > runs[best].1 {
            best = r;
        }
    }
    let objective = runs[best].1;
    let assignment = Assignment(runs[best].0.clone());
    Ok(HillClimbRun {
        assignment,
        objective,
        best_restart: best,
        traces: runs.into_iter().map(|r| r.2).collect(),
    })
}

pub fn solve_balanced_hillclimb(
    scores: &ScoreMatrix,
    b: usize,
    seed: u64,
    restarts: usize,
    max_moves: usize,
) -> Result<Assignment> {
    hillclimb_with_trace(scores, b, seed, restarts, max_moves).map(|r| r.assignment)
}
