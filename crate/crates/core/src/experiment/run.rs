use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::io::{load_corpus, read_bpe, write_atomic};
use crate::corpus::{Corpus, Tokenizer};
use crate::error::{Error, Result};

use super::bench::{run_strategy, Benchmark, Splits, StrategyOutcome};
use super::config::{DataSource, ExperimentConfig};

pub const METRICS_HEADER: &str = "experiment,strategy,seed,epoch,metric,value";
pub const COMPONENTS_HEADER: &str =
    "experiment,strategy,seed,component,accuracy,bleu,average_weight,purity";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    /// Strategy name, with a `+finetune` suffix for fine-tuned results.
    pub strategy: String,
    pub seed: u64,
    pub epoch: f64,
    pub metric: String,
    pub value: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6}",
            self.experiment, self.strategy, self.seed, self.epoch, self.metric, self.value
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Parse a tokenizer setting: `char`, `word` or `bpe:<model file>`.
pub fn resolve_tokenizer(spec: &str) -> Result<Tokenizer> {
    match spec.strip_prefix("bpe:") {
        Some(path) => Ok(Tokenizer::Bpe(read_bpe(Path::new(path))?)),
        None => super::config::tokenizer(spec),
    }
}

/// Training, fine-tuning and evaluation corpora named by `config`.
pub fn load_data(config: &ExperimentConfig) -> Result<(Corpus, Corpus, Corpus)> {
    match &config.data {
        DataSource::Cipher => {
            let b = Benchmark::generate(&config.bench, config.train.seed)?;
            Ok((b.train, b.finetune, b.eval))
        }
        DataSource::Files {
            train,
            finetune,
            eval,
        } => {
            let src = resolve_tokenizer(&config.source_tokenizer)?;
            let tgt = resolve_tokenizer(&config.target_tokenizer)?;
            Ok((
                load_corpus(train, &src, &tgt)?,
                load_corpus(finetune, &src, &tgt)?,
                load_corpus(eval, &src, &tgt)?,
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<MetricsRow>,
    pub strategies: Vec<StrategyOutcome>,
}

fn manifest(config: &ExperimentConfig) -> String {
    format!(
        "MANIFEST v1\nexperiment\t{}\nconfig_sha256\t{}\nseed\t{}\nversion\t{}\n",
        config.experiment,
        config.hash(),
        config.train.seed,
        VERSION
    )
}

/// Run every configured strategy: pretrain, evaluate, fine-tune, evaluate.
///
/// Writes under `config.out`: `metrics.csv`, `components.csv`,
/// `manifest.txt`, `config.txt`, `checkpoints/<strategy>/ckpt-NNN` and
/// `models/<strategy>/{pretrain,finetune}`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let seed = config.train.seed;
    let (train, finetune, eval) = load_data(config)?;
    if eval.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let data = Splits {
        train: &train,
        finetune: &finetune,
        eval: &eval,
    };
    let out = &config.out;
    fs::create_dir_all(out.join("checkpoints"))?;
    fs::create_dir_all(out.join("models"))?;

    let mut rows = Vec::new();
    let mut components = format!("{COMPONENTS_HEADER}\n");
    let mut outcomes = Vec::new();
    for &strategy in &config.strategies {
        let name = strategy.name();
        let mut train_cfg = config.train.clone();
        train_cfg.checkpoint_dir = Some(out.join("checkpoints").join(name));
        let k = if strategy == crate::mixture::Strategy::Single {
            1
        } else {
            config.k
        };
        let o = run_strategy(
            data,
            strategy,
            k,
            &config.bench,
            &train_cfg,
            config.finetune,
        )?;

        let models = out.join("models").join(name);
        fs::create_dir_all(&models)?;
        o.pretrained_model
            .save(&models.join("pretrain"), Some(&train_cfg))?;
        if let Some(m) = &o.finetuned_model {
            m.save(&models.join("finetune"), Some(&train_cfg))?;
        }

        let mut push = |strategy: String, metric: &str, value: f64| {
            rows.push(MetricsRow {
                experiment: config.experiment.clone(),
                strategy,
                seed,
                epoch: config.train.epochs,
                metric: metric.to_string(),
                value,
            })
        };
        push(name.to_string(), "accuracy", o.pretrained.accuracy);
        push(name.to_string(), "bleu", o.pretrained.bleu);
        if let Some(s) = &o.finetuned {
            push(format!("{name}+finetune"), "accuracy", s.accuracy);
            push(format!("{name}+finetune"), "bleu", s.bleu);
        }
        for c in &o.components {
            let purity = o.purity.map(|p| format!("{p:.6}")).unwrap_or_default();
            let _ = writeln!(
                components,
                "{},{},{},{},{:.6},{:.6},{:.6},{}",
                config.experiment,
                name,
                seed,
                c.component,
                c.accuracy,
                c.bleu,
                c.average_weight,
                purity
            );
        }
        outcomes.push(o);
    }
    rows.sort_by(|a, b| {
        a.metric
            .cmp(&b.metric)
            .then_with(|| a.strategy.cmp(&b.strategy))
    });
    if let Some(bad) = rows.iter().find(|r| !r.value.is_finite()) {
        return Err(Error::Contract(format!(
            "non-finite metric {}: {}",
            bad.metric, bad.value
        )));
    }

    write_atomic(&out.join("metrics.csv"), metrics_csv(&rows).as_bytes())?;
    write_atomic(&out.join("components.csv"), components.as_bytes())?;
    write_atomic(&out.join("config.txt"), config.dump().as_bytes())?;
    write_atomic(&out.join("manifest.txt"), manifest(config).as_bytes())?;
    Ok(ExperimentOutcome {
        rows,
        strategies: outcomes,
    })
}
