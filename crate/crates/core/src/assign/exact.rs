use std::collections::VecDeque;

use super::{Assignment, ScoreMatrix};
use crate::error::{Error, Result};

/// Largest N solved by enumeration.
pub const ENUMERATION_CAP: usize = 12;
/// Largest N accepted by [`solve_balanced_exact`].
pub const EXACT_CAP: usize = 200;

fn tolerance(scores: &ScoreMatrix) -> f64 {
    let max_abs = (0..scores.n())
        .flat_map(|i| scores.row(i).iter().copied())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    1e-9 * (1.0 + max_abs)
}

/// Optimal balanced assignment; among optima the lexicographically smallest
/// vector. Enumeration up to [`ENUMERATION_CAP`] instances, min-cost flow up
/// to [`EXACT_CAP`].
pub fn solve_balanced_exact(scores: &ScoreMatrix, b: usize) -> Result<Assignment> {
    scores.check_batch(b)?;
    let n = scores.n();
    if n <= ENUMERATION_CAP {
        solve_balanced_enumerate(scores, b)
    } else if n <= EXACT_CAP {
        solve_balanced_flow(scores, b)
    } else {
        Err(Error::Size {
            what: "instances for the exact solver",
            actual: n,
            limit: EXACT_CAP,
        })
    }
}

/// Depth-first enumeration in lexicographic order with a row-maximum bound.
pub fn solve_balanced_enumerate(scores: &ScoreMatrix, b: usize) -> Result<Assignment> {
    scores.check_batch(b)?;
    let (n, k) = (scores.n(), scores.k());
    let tol = tolerance(scores);
    // suffix sums of row maxima
    let mut bound = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let m = scores
            .row(i)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        bound[i] = bound[i + 1] + m;
    }

    struct Search<'a> {
        scores: &'a ScoreMatrix,
        bound: Vec<f64>,
        b: usize,
        k: usize,
        tol: f64,
        cur: Vec<usize>,
        counts: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn go(&mut self, i: usize, acc: f64) {
            if let Some((best, _)) = &self.best {
                if acc + self.bound[i] <= best + self.tol {
                    return;
                }
            }
            if i == self.cur.len() {
                self.best = Some((acc, self.cur.clone()));
                return;
            }
            for z in 0..self.k {
                if self.counts[z] == self.b {
                    continue;
                }
                self.counts[z] += 1;
                self.cur[i] = z;
                self.go(i + 1, acc + self.scores.get(i, z));
                self.counts[z] -= 1;
            }
        }
    }

    let mut s = Search {
        scores,
        bound,
        b,
        k,
        tol,
        cur: vec![0; n],
        counts: vec![0; k],
        best: None,
    };
    s.go(0, 0.0);
    let (_, z) = s.best.expect("a balanced assignment always exists");
    Ok(Assignment(z))
}

/// Min-cost flow with B unit slots per component, solved by successive
/// shortest paths over the component graph, followed by a lexicographic
/// repair restricted to zero-reduced-cost moves.
pub fn solve_balanced_flow(scores: &ScoreMatrix, b: usize) -> Result<Assignment> {
    scores.check_batch(b)?;
    let (n, k) = (scores.n(), scores.k());
    let cost = |i: usize, z: usize| -scores.get(i, z);
    const NONE: usize = usize::MAX;

    let mut assign = vec![NONE; n];
    let mut count = vec![0usize; k];
    let mut pot = vec![0.0f64; k];

    for i in 0..n {
        // cheapest row move a -> c among rows already placed
        let mut edge = vec![(f64::INFINITY, NONE); k * k];
        for (j, &a) in assign[..i].iter().enumerate() {
            let base = cost(j, a);
            for c in 0..k {
                if c == a {
                    continue;
                }
                let w = cost(j, c) - base;
                let e = &mut edge[a * k + c];
                if w < e.0 {
                    *e = (w, j);
                }
            }
        }

        // Dijkstra on reduced weights; labels are true distance minus potential
        let mut label: Vec<f64> = (0..k).map(|z| cost(i, z) - pot[z]).collect();
        let mut pred = vec![(NONE, NONE); k];
        let mut done = vec![false; k];
        for _ in 0..k {
            let mut u = NONE;
            for z in 0..k {
                if !done[z] && (u == NONE || label[z] < label[u]) {
                    u = z;
                }
            }
            done[u] = true;
            for c in 0..k {
                let (w, j) = edge[u * k + c];
                if done[c] || j == NONE {
                    continue;
                }
                let reduced = (w + pot[u] - pot[c]).max(0.0);
                if label[u] + reduced < label[c] {
                    label[c] = label[u] + reduced;
                    pred[c] = (u, j);
                }
            }
        }
        let dist: Vec<f64> = (0..k).map(|z| label[z] + pot[z]).collect();
        let mut target = NONE;
        for z in 0..k {
            if count[z] < b && (target == NONE || dist[z] < dist[target]) {
                target = z;
            }
        }
        count[target] += 1;
        let mut t = target;
        while pred[t].0 != NONE {
            let (a, j) = pred[t];
            assign[j] = t;
            t = a;
        }
        assign[i] = t;
        pot = dist;
    }

    // Every optimum uses only edges of zero reduced cost under `pot`.
    let tol = tolerance(scores);
    let allowed: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            let u = cost(j, assign[j]) - pot[assign[j]];
            (0..k).filter(|&z| cost(j, z) - pot[z] - u <= tol).collect()
        })
        .collect();

    for i in 0..n {
        let cur = assign[i];
        for &z in allowed[i].iter().take_while(|&&z| z < cur) {
            if let Some(path) = repair_path(&assign, &allowed, i, z, cur, k) {
                for (j, to) in path {
                    assign[j] = to;
                }
                assign[i] = z;
                break;
            }
        }
    }
    Ok(Assignment(assign))
}

/// Moves of rows after `i` that carry one surplus instance from component
/// `from` to component `to` along allowed edges.
fn repair_path(
    assign: &[usize],
    allowed: &[Vec<usize>],
    i: usize,
    from: usize,
    to: usize,
    k: usize,
) -> Option<Vec<(usize, usize)>> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; k];
    let mut seen = vec![false; k];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        if c == to {
            let mut moves = Vec::new();
            let mut x = to;
            while x != from {
                let (pc, j) = prev[x].expect("path back to start");
                moves.push((j, x));
                x = pc;
            }
            return Some(moves);
        }
        for j in (i + 1)..assign.len() {
            if assign[j] != c {
                continue;
            }
            for &d in &allowed[j] {
                if !seen[d] {
                    seen[d] = true;
                    prev[d] = Some((c, j));
                    queue.push_back(d);
                }
            }
        }
    }
    None
}
