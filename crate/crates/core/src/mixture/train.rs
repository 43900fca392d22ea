use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{
    component_score, gate_fit, gate_train, Component, GateModel, MixtureModel, Strategy,
    TrainConfig,
};
use crate::assign::{solve_balanced_hillclimb, ScoreMatrix};
use crate::corpus::{build_vocab, Corpus, SentencePair, Side, Vocab};
use crate::error::{Error, Result};
use crate::rng;

const SHUFFLE_STREAM: u64 = 0x5_0000;
const WARM_STREAM: u64 = 0x3a7;
const GATE_STREAM: u64 = 0x6a7e_0000;

fn vocabs<'a>(corpora: impl Iterator<Item = &'a Corpus>, cap: usize) -> (Arc<Vocab>, Arc<Vocab>) {
    let all: Corpus = corpora.flat_map(|c| c.pairs.iter().cloned()).collect();
    let cap = if cap == 0 { usize::MAX } else { cap };
    (
        Arc::new(build_vocab(&all, Side::Source, cap)),
        Arc::new(build_vocab(&all, Side::Target, cap)),
    )
}

fn one_hot(k: usize, z: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[z] = 1.0;
    v
}

/// Update `c` on `pairs` in consecutive batches of `b`, each at weight 1.
fn train_on(c: &mut Component, pairs: &[&SentencePair], b: usize) -> Result<()> {
    for chunk in pairs.chunks(b) {
        let batch: Vec<(&SentencePair, f64)> = chunk.iter().map(|p| (*p, 1.0)).collect();
        c.update(&batch)?;
    }
    Ok(())
}

/// Indices of `epochs` passes over `n` items, one seeded shuffle per pass,
/// truncated to `total` draws.
fn stream(n: usize, total: usize, seed: u64, salt: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(total);
    let mut epoch = 0u64;
    while out.len() < total {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::rng(seed, salt + epoch));
        out.extend(perm.into_iter().take(total - out.len()));
        epoch += 1;
    }
    out
}

fn checkpoint(model: &MixtureModel, config: &TrainConfig, index: usize) -> Result<()> {
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        model.save(&dir.join(format!("ckpt-{index:03}")), Some(config))?;
    }
    Ok(())
}

/// Train component z on `subsets[z]` alone.
///
/// Each component makes `epochs` passes over its subset, its counts
/// multiplied by `epoch_decay` between passes; the work is cut into
/// `epochs / interval` equal slices with a checkpoint after each. The
/// uniform strategy freezes the gate at 1/K; the topic strategy trains it
/// on subset membership. With one subset this is the single-model strategy.
pub fn split_pretrain(
    subsets: &[Corpus],
    strategy: Strategy,
    config: &TrainConfig,
) -> Result<MixtureModel> {
    config.validate()?;
    let k = subsets.len();
    if k == 0 {
        return Err(Error::Input(
            "split training needs at least one subset".into(),
        ));
    }
    if let Some(z) = subsets.iter().position(Corpus::is_empty) {
        return Err(Error::Input(format!("subset {z} is empty")));
    }
    let gate = match strategy {
        Strategy::Single if k == 1 => GateModel::frozen_uniform(1),
        Strategy::Single => {
            return Err(Error::Config(
                "the single strategy takes exactly one subset".into(),
            ))
        }
        Strategy::Uniform => GateModel::frozen_uniform(k),
        Strategy::Topic => {
            let examples: Vec<(&[String], Vec<f64>)> = subsets
                .iter()
                .enumerate()
                .flat_map(|(z, c)| c.iter().map(move |p| (&p.source[..], one_hot(k, z))))
                .collect();
            gate_train(&examples, k, config.gate_training(GATE_STREAM))?
        }
        Strategy::Dynamic => {
            return Err(Error::Config(
                "use dynamic_pretrain for the dynamic strategy".into(),
            ))
        }
    };
    let (src, tgt) = vocabs(subsets.iter(), config.vocab_cap);
    let mut model = MixtureModel::new(
        (0..k)
            .map(|_| Component::new(src.clone(), tgt.clone(), config.component))
            .collect(),
        gate,
        strategy,
    )?;
    let streams: Vec<Vec<usize>> = subsets
        .iter()
        .enumerate()
        .map(|(z, c)| {
            let total = (config.epochs * c.len() as f64).ceil() as usize;
            stream(
                c.len(),
                total,
                config.seed,
                SHUFFLE_STREAM + ((z as u64) << 20),
            )
        })
        .collect();
    let slices = config.checkpoints();
    for s in 1..=slices {
        model
            .components
            .par_iter_mut()
            .zip(subsets.par_iter().zip(streams.par_iter()))
            .try_for_each(|(c, (data, order))| {
                let lo = ((s - 1) * order.len()).div_ceil(slices);
                let hi = (s * order.len()).div_ceil(slices);
                let n = data.len();
                let mut start = lo;
                while start < hi {
                    if start > 0 && start % n == 0 && config.epoch_decay < 1.0 {
                        c.scale(config.epoch_decay);
                    }
                    let end = hi.min((start / n + 1) * n);
                    let pairs: Vec<&SentencePair> =
                        order[start..end].iter().map(|&i| &data.pairs[i]).collect();
                    train_on(c, &pairs, config.batch)?;
                    start = end;
                }
                Ok::<(), Error>(())
            })?;
        checkpoint(&model, config, s)?;
    }
    Ok(model)
}

/// Per-step bookkeeping of a dynamic run.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTrace {
    /// Instances per component at each E-step.
    pub step_counts: Vec<Vec<usize>>,
    /// Instances per component summed over each epoch.
    pub epoch_counts: Vec<Vec<usize>>,
    /// Component of every instance as last assigned in the final epoch's
    /// worth of draws; `None` for instances not drawn there.
    pub final_assignment: Vec<Option<usize>>,
    /// E-steps after which a checkpoint was written.
    pub checkpoint_steps: Vec<usize>,
}

impl DynamicTrace {
    /// Steps whose counts differ from exactly `b` per component.
    pub fn violations(&self, b: usize) -> usize {
        self.step_counts
            .iter()
            .filter(|c| c.iter().any(|&n| n != b))
            .count()
    }

    /// Largest share of an epoch's instances taken by one component. A
    /// trailing partial epoch is ignored unless it is the only one.
    pub fn max_epoch_share(&self) -> f64 {
        let totals: Vec<usize> = self.epoch_counts.iter().map(|c| c.iter().sum()).collect();
        let full = totals.iter().copied().max().unwrap_or(0);
        self.epoch_counts
            .iter()
            .zip(&totals)
            .filter(|(_, &t)| t == full)
            .map(|(c, _)| {
                let total: usize = c.iter().sum();
                *c.iter().max().unwrap_or(&0) as f64 / total.max(1) as f64
            })
            .fold(0.0, f64::max)
    }
}

pub fn dynamic_pretrain(corpus: &Corpus, k: usize, config: &TrainConfig) -> Result<MixtureModel> {
    dynamic_pretrain_traced(corpus, k, config).map(|(m, _)| m)
}

/// Hard-EM training with the balanced batched E-step.
///
/// Components are warm-started on disjoint random shards covering one
/// checkpoint interval. Each step then draws K·B instances from sequential
/// seeded shuffles, scores them under every component, assigns exactly B
/// to each (or the argmax when `unconstrained_estep` is set) and updates
/// every component on its share. Counts are multiplied by `epoch_decay` when
/// the draws cross into a new epoch. The gate is trained on the final epoch's
/// assignments.
pub fn dynamic_pretrain_traced(
    corpus: &Corpus,
    k: usize,
    config: &TrainConfig,
) -> Result<(MixtureModel, DynamicTrace)> {
    config.validate()?;
    let n = corpus.len();
    let b = config.batch;
    if k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    if n < k * b {
        return Err(Error::Input(format!(
            "corpus has {n} pairs, fewer than K·B = {}",
            k * b
        )));
    }
    let (src, tgt) = vocabs(std::iter::once(corpus), config.vocab_cap);
    let mut components: Vec<Component> = (0..k)
        .map(|_| Component::new(src.clone(), tgt.clone(), config.component))
        .collect();

    let warm = stream(
        n,
        ((config.interval * n as f64).ceil() as usize).clamp(k, n),
        config.seed,
        WARM_STREAM,
    );
    let shard = warm.len().div_ceil(k);
    components
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(z, c)| {
            let lo = (z * shard).min(warm.len());
            let hi = ((z + 1) * shard).min(warm.len());
            let pairs: Vec<&SentencePair> =
                warm[lo..hi].iter().map(|&i| &corpus.pairs[i]).collect();
            train_on(c, &pairs, b)
        })?;

    let kb = k * b;
    let steps = ((config.epochs * n as f64) / kb as f64).ceil().max(1.0) as usize;
    let order = stream(n, steps * kb, config.seed, SHUFFLE_STREAM);
    let slices = config.checkpoints();
    let mut next_ckpt = 1;
    let gate_placeholder = GateModel::uniform(k);
    let mut trace = DynamicTrace {
        step_counts: Vec::with_capacity(steps),
        epoch_counts: vec![vec![0; k]; order.len().div_ceil(n)],
        final_assignment: vec![None; n],
        checkpoint_steps: Vec::new(),
    };
    let final_from = order.len().saturating_sub(n);
    for step in 0..steps {
        if step > 0 && (step * kb) / n != ((step - 1) * kb) / n && config.epoch_decay < 1.0 {
            components
                .par_iter_mut()
                .for_each(|c| c.scale(config.epoch_decay));
        }
        let draw = &order[step * kb..(step + 1) * kb];
        let rows: Vec<Vec<f64>> = draw
            .par_iter()
            .map(|&i| {
                components
                    .iter()
                    .map(|c| component_score(c, &corpus.pairs[i]))
                    .collect()
            })
            .collect();
        let scores = ScoreMatrix::new(k, &rows)?;
        let z: Vec<usize> = if config.unconstrained_estep {
            (0..kb)
                .map(|i| {
                    let r = scores.row(i);
                    (0..k).fold(0, |best, c| if r[c] > r[best] { c } else { best })
                })
                .collect()
        } else {
            solve_balanced_hillclimb(
                &scores,
                b,
                rng::derive_seed(config.seed, step as u64),
                config.restarts,
                config.max_moves,
            )?
            .0
        };
        let mut counts = vec![0; k];
        for (j, (&i, &c)) in draw.iter().zip(&z).enumerate() {
            counts[c] += 1;
            let pos = step * kb + j;
            trace.epoch_counts[pos / n][c] += 1;
            if pos >= final_from {
                trace.final_assignment[i] = Some(c);
            }
        }
        trace.step_counts.push(counts);
        components
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(c, comp)| {
                let batch: Vec<(&SentencePair, f64)> = draw
                    .iter()
                    .zip(&z)
                    .filter(|(_, &zz)| zz == c)
                    .map(|(&i, _)| (&corpus.pairs[i], 1.0))
                    .collect();
                comp.update(&batch)
            })?;
        while next_ckpt <= slices && step + 1 == (next_ckpt * steps).div_ceil(slices) {
            if config.checkpoint_dir.is_some() {
                let m = MixtureModel::new(
                    components.clone(),
                    gate_placeholder.clone(),
                    Strategy::Dynamic,
                )?;
                checkpoint(&m, config, next_ckpt)?;
            }
            trace.checkpoint_steps.push(step + 1);
            next_ckpt += 1;
        }
    }

    let examples: Vec<(&[String], Vec<f64>)> = trace
        .final_assignment
        .iter()
        .enumerate()
        .filter_map(|(i, z)| z.map(|z| (&corpus.pairs[i].source[..], one_hot(k, z))))
        .collect();
    let gate = if k == 1 {
        GateModel::frozen_uniform(1)
    } else {
        gate_train(&examples, k, config.gate_training(GATE_STREAM))?
    };
    let model = MixtureModel::new(components, gate, Strategy::Dynamic)?;
    if config.checkpoint_dir.is_some() {
        checkpoint(&model, config, slices)?;
    }
    Ok((model, trace))
}

/// Posterior over components: r_z ∝ p(z|x)·exp(score_z(x, y)), normalized
/// in the log domain.
pub fn responsibilities(m: &MixtureModel, pair: &SentencePair) -> Vec<f64> {
    let prior = m.gate_weights(&pair.source);
    let logs: Vec<f64> = m
        .components
        .iter()
        .zip(&prior)
        .map(|(c, p)| p.ln() + component_score(c, pair))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / m.k() as f64; m.k()];
    }
    let e: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Soft EM on in-domain data. Every iteration computes responsibilities
/// under the current mixture, then rebuilds each component from its
/// pretrained counts plus the in-domain pairs weighted by
/// `finetune_weight · r_z`. A trainable gate is moved toward the
/// responsibilities.
pub fn soft_em_finetune(
    m: &MixtureModel,
    in_domain: &Corpus,
    config: &TrainConfig,
) -> Result<MixtureModel> {
    config.validate()?;
    if in_domain.is_empty() {
        return Err(Error::Input("fine-tuning corpus is empty".into()));
    }
    let base = &m.components;
    let mut cur = m.clone();
    for it in 0..config.finetune_iters {
        let resp: Vec<Vec<f64>> = in_domain
            .pairs
            .par_iter()
            .map(|p| responsibilities(&cur, p))
            .collect();
        let components: Vec<Component> = base
            .par_iter()
            .enumerate()
            .map(|(z, c)| {
                let mut c = c.clone();
                let batch: Vec<(&SentencePair, f64)> = in_domain
                    .iter()
                    .zip(&resp)
                    .map(|(p, r)| (p, r[z] * config.finetune_weight))
                    .collect();
                for chunk in batch.chunks(config.batch) {
                    c.update(chunk)?;
                }
                Ok(c)
            })
            .collect::<Result<_>>()?;
        cur.components = components;
        if !cur.gate.frozen {
            let examples: Vec<(&[String], Vec<f64>)> = in_domain
                .iter()
                .zip(resp)
                .map(|(p, r)| (&p.source[..], r))
                .collect();
            gate_fit(
                &mut cur.gate,
                &examples,
                config.gate_training(GATE_STREAM + 1 + it as u64),
            )?;
        }
    }
    Ok(cur)
}
