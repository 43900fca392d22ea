//! Mixture of translation components with a source-side gate.
//!
//! p(y|x) = Σ_z p(z|x)·p(y|z,x). Components are count-based lexicon+bigram
//! models ([`Component`]), the gate is a hashed n-gram softmax classifier
//! ([`GateModel`]). Training follows one of four strategies: a single
//! model, a uniform random split, a topic split, or the dynamic split that
//! alternates a balanced hard E-step with per-component count updates.
//! [`soft_em_finetune`] then adapts a trained mixture to in-domain data.

mod component;
mod decode;
mod gate;
mod train;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

pub use component::{component_score, component_update, Component, ComponentParams};
pub use decode::{decode, step_distribution, target_length, DecodeOptions};
pub use gate::{
    features, gate_fit, gate_gradient, gate_loss, gate_predict, gate_train, Features, GateModel,
    GateTraining, GATE_DIM,
};
pub use train::{
    dynamic_pretrain, dynamic_pretrain_traced, responsibilities, soft_em_finetune, split_pretrain,
    DynamicTrace,
};

use crate::corpus::io::{read_vocab, write_atomic, write_vocab};
use crate::corpus::{TokenSeq, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Single,
    Uniform,
    Topic,
    Dynamic,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Single => "single",
            Strategy::Uniform => "uniform",
            Strategy::Topic => "topic",
            Strategy::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Strategy::Single),
            "uniform" => Ok(Strategy::Uniform),
            "topic" => Ok(Strategy::Topic),
            "dynamic" => Ok(Strategy::Dynamic),
            _ => Err(Error::Config(format!(
                "unknown strategy `{s}` (single, uniform, topic, dynamic)"
            ))),
        }
    }
}

/// Training and decoding hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Instances per component per E-step (and per update batch).
    pub batch: usize,
    /// Passes over the training data; fractions allowed.
    pub epochs: f64,
    /// Checkpoint interval as a fraction of an epoch.
    pub interval: f64,
    pub seed: u64,
    pub component: ComponentParams,
    pub beam: usize,
    pub diversity: f64,
    pub max_len: usize,
    pub restarts: usize,
    pub max_moves: usize,
    pub gate_epochs: usize,
    pub gate_lr: f64,
    pub finetune_iters: usize,
    /// Scale applied to responsibilities during fine-tuning updates.
    pub finetune_weight: f64,
    /// Factor applied to every component count at each dynamic epoch boundary.
    pub epoch_decay: f64,
    /// Debug: replace the balanced E-step with a per-instance argmax.
    pub unconstrained_estep: bool,
    /// Vocabulary size cap per side; 0 keeps every token.
    pub vocab_cap: usize,
    /// Where checkpoints go; none are written when unset.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 32,
            epochs: 1.0,
            interval: 0.1,
            seed: 0,
            component: ComponentParams::default(),
            beam: 4,
            diversity: 0.0,
            max_len: 100,
            restarts: 4,
            max_moves: 100_000,
            gate_epochs: 3,
            gate_lr: 0.5,
            finetune_iters: 1,
            finetune_weight: 1.0,
            epoch_decay: 1.0,
            unconstrained_estep: false,
            vocab_cap: 0,
            checkpoint_dir: None,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "batch",
    "epochs",
    "interval",
    "seed",
    "lambda",
    "delta",
    "rho",
    "beam",
    "diversity",
    "max_len",
    "restarts",
    "max_moves",
    "gate_epochs",
    "gate_lr",
    "finetune_iters",
    "finetune_weight",
    "epoch_decay",
    "unconstrained_estep",
    "vocab_cap",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch < 1 {
            return bad("batch must be >= 1");
        }
        if !(self.interval > 0.0) || !self.interval.is_finite() {
            return bad("interval must be > 0");
        }
        if !(self.epochs > 0.0) || !self.epochs.is_finite() {
            return bad("epochs must be > 0");
        }
        if self.beam < 1 {
            return bad("beam must be >= 1");
        }
        if self.restarts < 1 {
            return bad("restarts must be >= 1");
        }
        if !(self.finetune_weight > 0.0) || !(self.gate_lr > 0.0) {
            return bad("finetune_weight and gate_lr must be > 0");
        }
        if !(0.0..=1.0).contains(&self.epoch_decay) {
            return bad("epoch_decay must be in [0, 1]");
        }
        if !self.diversity.is_finite() || self.diversity < 0.0 {
            return bad("diversity must be >= 0");
        }
        self.component.validate()
    }

    /// Settings used on the cipher benchmark.
    pub fn benchmark() -> Self {
        Self {
            epochs: 10.0,
            beam: 16,
            epoch_decay: 0.2,
            component: ComponentParams {
                lambda: 0.3,
                ..ComponentParams::default()
            },
            ..Self::default()
        }
    }

    /// Number of checkpoints a run of `epochs` writes.
    pub fn checkpoints(&self) -> usize {
        ((self.epochs / self.interval).round() as usize).max(1)
    }

    /// Set one key from its text form. Returns false for an unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "batch" => self.batch = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "interval" => self.interval = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lambda" => self.component.lambda = parse(key, value)?,
            "delta" => self.component.delta = parse(key, value)?,
            "rho" => self.component.rho = parse(key, value)?,
            "beam" => self.beam = parse(key, value)?,
            "diversity" => self.diversity = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "restarts" => self.restarts = parse(key, value)?,
            "max_moves" => self.max_moves = parse(key, value)?,
            "gate_epochs" => self.gate_epochs = parse(key, value)?,
            "gate_lr" => self.gate_lr = parse(key, value)?,
            "finetune_iters" => self.finetune_iters = parse(key, value)?,
            "finetune_weight" => self.finetune_weight = parse(key, value)?,
            "epoch_decay" => self.epoch_decay = parse(key, value)?,
            "unconstrained_estep" => self.unconstrained_estep = parse(key, value)?,
            "vocab_cap" => self.vocab_cap = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// `(key, value)` in [`TRAIN_KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let c = &self.component;
        let values = [
            self.batch.to_string(),
            self.epochs.to_string(),
            self.interval.to_string(),
            self.seed.to_string(),
            c.lambda.to_string(),
            c.delta.to_string(),
            c.rho.to_string(),
            self.beam.to_string(),
            self.diversity.to_string(),
            self.max_len.to_string(),
            self.restarts.to_string(),
            self.max_moves.to_string(),
            self.gate_epochs.to_string(),
            self.gate_lr.to_string(),
            self.finetune_iters.to_string(),
            self.finetune_weight.to_string(),
            self.epoch_decay.to_string(),
            self.unconstrained_estep.to_string(),
            self.vocab_cap.to_string(),
        ];
        TRAIN_KEYS.iter().copied().zip(values).collect()
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn decode_options(&self) -> DecodeOptions {
        DecodeOptions {
            beam: self.beam,
            diversity: self.diversity,
            max_len: self.max_len,
        }
    }

    pub fn gate_training(&self, stream: u64) -> GateTraining {
        GateTraining {
            epochs: self.gate_epochs,
            learning_rate: self.gate_lr,
            seed: crate::rng::derive_seed(self.seed, stream),
        }
    }
}

const MANIFEST: &str = "MODEL v1";

/// K components, the gate over them and the strategy that trained them.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub components: Vec<Component>,
    pub gate: GateModel,
    pub strategy: Strategy,
}

impl MixtureModel {
    pub fn new(components: Vec<Component>, gate: GateModel, strategy: Strategy) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Input(
                "a mixture needs at least one component".into(),
            ));
        }
        if gate.k() != components.len() {
            return Err(Error::Input(format!(
                "gate has {} classes for {} components",
                gate.k(),
                components.len()
            )));
        }
        Ok(Self {
            components,
            gate,
            strategy,
        })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn source_vocab(&self) -> &Arc<Vocab> {
        self.components[0].source_vocab()
    }

    pub fn target_vocab(&self) -> &Arc<Vocab> {
        self.components[0].target_vocab()
    }

    /// p(z|x).
    pub fn gate_weights<S: AsRef<str>>(&self, source: &[S]) -> Vec<f64> {
        gate_predict(&self.gate, source)
    }

    /// Ensemble decode weighted by the gate.
    pub fn translate<S: AsRef<str>>(&self, source: &[S], opts: &DecodeOptions) -> Result<TokenSeq> {
        decode(&self.components, &self.gate_weights(source), source, opts)
    }

    /// Decode with component `z` alone.
    pub fn translate_with<S: AsRef<str>>(
        &self,
        z: usize,
        source: &[S],
        opts: &DecodeOptions,
    ) -> Result<TokenSeq> {
        decode(&self.components[z..=z], &[1.0], source, opts)
    }

    /// Translate many sources in parallel, preserving order.
    pub fn translate_all(
        &self,
        sources: &[TokenSeq],
        opts: &DecodeOptions,
    ) -> Result<Vec<TokenSeq>> {
        sources
            .par_iter()
            .map(|s| self.translate(s, opts))
            .collect()
    }

    /// Write a checkpoint directory. The directory is built under a temporary
    /// name and renamed into place.
    pub fn save(&self, dir: &Path, config: Option<&TrainConfig>) -> Result<()> {
        let name = dir
            .file_name()
            .ok_or_else(|| Error::Input(format!("bad checkpoint path {}", dir.display())))?
            .to_string_lossy()
            .into_owned();
        let tmp = dir.with_file_name(format!(".{name}.tmp"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        let manifest = format!(
            "{MANIFEST}\nstrategy\t{}\ncomponents\t{}\n",
            self.strategy,
            self.k()
        );
        write_atomic(&tmp.join("MODEL"), manifest.as_bytes())?;
        write_vocab(&tmp.join("source.vocab"), self.source_vocab())?;
        write_vocab(&tmp.join("target.vocab"), self.target_vocab())?;
        for (z, c) in self.components.iter().enumerate() {
            c.write(&tmp.join(format!("component.{z}.tsv")))?;
        }
        self.gate.write(&tmp.join("gate.tsv"))?;
        if let Some(cfg) = config {
            write_atomic(&tmp.join("config.txt"), cfg.to_text().as_bytes())?;
        }
        if dir.exists() {
            let old = dir.with_file_name(format!(".{name}.old"));
            if old.exists() {
                fs::remove_dir_all(&old)?;
            }
            fs::rename(dir, &old)?;
            fs::rename(&tmp, dir)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&tmp, dir)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("MODEL");
        let text = fs::read_to_string(&path)?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&MANIFEST) {
            return Err(Error::parse(&path, 1, format!("expected `{MANIFEST}`")));
        }
        let field = |i: usize, key: &str| -> Result<&str> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix('\t'))
                .ok_or_else(|| Error::parse(&path, i + 1, format!("expected `{key}<TAB>value`")))
        };
        let strategy: Strategy = field(1, "strategy")?.parse()?;
        let k: usize = field(2, "components")?
            .parse()
            .map_err(|_| Error::parse(&path, 3, "bad component count"))?;
        let src = Arc::new(read_vocab(&dir.join("source.vocab"))?);
        let tgt = Arc::new(read_vocab(&dir.join("target.vocab"))?);
        let components = (0..k)
            .map(|z| {
                Component::read(
                    &dir.join(format!("component.{z}.tsv")),
                    src.clone(),
                    tgt.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let gate = GateModel::read(&dir.join("gate.tsv"))?;
        Self::new(components, gate, strategy)
    }
}
