use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::corpus::Tokenizer;
use crate::error::{Error, Result};
use crate::mixture::{Strategy, TrainConfig};

use super::bench::BenchmarkSpec;

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// The generated three-domain cipher benchmark.
    Cipher,
    /// Bitext files: `source<TAB>target[<TAB>domain]` per line.
    Files {
        train: PathBuf,
        finetune: PathBuf,
        eval: PathBuf,
    },
}

/// Flat `key=value` experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub strategies: Vec<Strategy>,
    pub k: usize,
    pub finetune: bool,
    pub out: PathBuf,
    pub data: DataSource,
    pub source_tokenizer: String,
    pub target_tokenizer: String,
    pub bench: BenchmarkSpec,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "cipher".into(),
            strategies: vec![Strategy::Uniform, Strategy::Topic, Strategy::Dynamic],
            k: 3,
            finetune: true,
            out: PathBuf::from("runs/cipher"),
            data: DataSource::Cipher,
            source_tokenizer: "char".into(),
            target_tokenizer: "word".into(),
            bench: BenchmarkSpec::default(),
            train: TrainConfig::benchmark(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

/// `char` or `word`; `bpe:<path>` specs are resolved when data is loaded.
pub fn tokenizer(name: &str) -> Result<Tokenizer> {
    match name {
        "char" => Ok(Tokenizer::Char),
        "word" => Ok(Tokenizer::Word),
        _ => Err(Error::Config(format!(
            "unknown tokenizer `{name}` (char, word)"
        ))),
    }
}

impl ExperimentConfig {
    /// Apply one setting; unknown keys are a config error naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let w = &mut self.bench.world;
        match key {
            "experiment" => self.experiment = value.to_string(),
            "strategies" => {
                self.strategies = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?;
            }
            "k" => self.k = num(key, value)?,
            "finetune" => self.finetune = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "data" => match value {
                "cipher" => self.data = DataSource::Cipher,
                "files" => {
                    if self.data == DataSource::Cipher {
                        self.data = DataSource::Files {
                            train: PathBuf::new(),
                            finetune: PathBuf::new(),
                            eval: PathBuf::new(),
                        };
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "data: expected `cipher` or `files`, got `{value}`"
                    )))
                }
            },
            "train_pairs" | "finetune_pairs" | "eval_pairs" => {
                if self.data == DataSource::Cipher {
                    self.set("data", "files")?;
                }
                if let DataSource::Files {
                    train,
                    finetune,
                    eval,
                } = &mut self.data
                {
                    let slot = match key {
                        "train_pairs" => train,
                        "finetune_pairs" => finetune,
                        _ => eval,
                    };
                    *slot = PathBuf::from(value);
                }
            }
            "source_tokenizer" => {
                if !value.starts_with("bpe:") {
                    tokenizer(value)?;
                }
                self.source_tokenizer = value.to_string();
            }
            "target_tokenizer" => {
                if !value.starts_with("bpe:") {
                    tokenizer(value)?;
                }
                self.target_tokenizer = value.to_string();
            }
            "bench_train" => self.bench.train = num(key, value)?,
            "bench_finetune" => self.bench.finetune = num(key, value)?,
            "bench_eval" => self.bench.eval = num(key, value)?,
            "bench_drift" => self.bench.drift = num(key, value)?,
            "bench_vocab" => w.vocab_size = num(key, value)?,
            "bench_shared" => w.shared_fraction = num(key, value)?,
            "bench_divergence" => w.divergence = num(key, value)?,
            "bench_shared_targets" => w.shared_targets = num(key, value)?,
            "bench_branching" => w.branching = num(key, value)?,
            "bench_min_len" => w.min_len = num(key, value)?,
            "bench_max_len" => w.max_len = num(key, value)?,
            "topic_alpha" => self.bench.topic_alpha = num(key, value)?,
            "topic_iterations" => self.bench.topic_iterations = num(key, value)?,
            _ => {
                if !self.train.set(key, value)? {
                    return Err(Error::Config(format!("unknown config key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Parse `key=value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    /// Read, apply `overrides` in order, and validate.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::parse(&fs::read_to_string(path)?)?;
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.bench.world.validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies: at least one strategy".into()));
        }
        if self.strategies.contains(&Strategy::Single) && self.k != 1 {
            return Err(Error::Config("strategies: `single` needs k=1".into()));
        }
        for (key, t) in [
            ("source_tokenizer", &self.source_tokenizer),
            ("target_tokenizer", &self.target_tokenizer),
        ] {
            if let Some(p) = t.strip_prefix("bpe:") {
                if !Path::new(p).exists() {
                    return Err(Error::Config(format!("{key}: {p} does not exist")));
                }
            }
        }
        if let DataSource::Files {
            train,
            finetune,
            eval,
        } = &self.data
        {
            for (key, p) in [
                ("train_pairs", train),
                ("finetune_pairs", finetune),
                ("eval_pairs", eval),
            ] {
                if p.as_os_str().is_empty() {
                    return Err(Error::Config(format!("{key}: required when data=files")));
                }
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{key}: {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Effective configuration, one `key=value` per line in a fixed order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let w = &self.bench.world;
        let strategies: Vec<&str> = self.strategies.iter().map(Strategy::name).collect();
        let _ = writeln!(out, "experiment={}", self.experiment);
        let _ = writeln!(out, "strategies={}", strategies.join(","));
        let _ = writeln!(out, "k={}", self.k);
        let _ = writeln!(out, "finetune={}", self.finetune);
        let _ = writeln!(out, "out={}", self.out.display());
        match &self.data {
            DataSource::Cipher => {
                let _ = writeln!(out, "data=cipher");
            }
            DataSource::Files {
                train,
                finetune,
                eval,
            } => {
                let _ = writeln!(out, "data=files");
                let _ = writeln!(out, "train_pairs={}", train.display());
                let _ = writeln!(out, "finetune_pairs={}", finetune.display());
                let _ = writeln!(out, "eval_pairs={}", eval.display());
            }
        }
        let _ = writeln!(out, "source_tokenizer={}", self.source_tokenizer);
        let _ = writeln!(out, "target_tokenizer={}", self.target_tokenizer);
        let _ = writeln!(out, "bench_train={}", self.bench.train);
        let _ = writeln!(out, "bench_finetune={}", self.bench.finetune);
        let _ = writeln!(out, "bench_eval={}", self.bench.eval);
        let _ = writeln!(out, "bench_drift={}", self.bench.drift);
        let _ = writeln!(out, "bench_vocab={}", w.vocab_size);
        let _ = writeln!(out, "bench_shared={}", w.shared_fraction);
        let _ = writeln!(out, "bench_divergence={}", w.divergence);
        let _ = writeln!(out, "bench_shared_targets={}", w.shared_targets);
        let _ = writeln!(out, "bench_branching={}", w.branching);
        let _ = writeln!(out, "bench_min_len={}", w.min_len);
        let _ = writeln!(out, "bench_max_len={}", w.max_len);
        let _ = writeln!(out, "topic_alpha={}", self.bench.topic_alpha);
        let _ = writeln!(out, "topic_iterations={}", self.bench.topic_iterations);
        out.push_str(&self.train.to_text());
        out
    }

    /// SHA-256 of [`Self::dump`] without the `out` line, hex encoded.
    pub fn hash(&self) -> String {
        let text: String = self
            .dump()
            .lines()
            .filter(|l| !l.starts_with("out="))
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_parses_back() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("strategies", "dynamic,uniform").unwrap();
        cfg.set("batch", "16").unwrap();
        cfg.set("bench_shared", "0.5").unwrap();
        let back = ExperimentConfig::parse(&cfg.dump()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("epochs=2\nbogus_key=1\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn missing_paths_are_named() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("train_pairs", "/definitely/not/here.tsv").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("train_pairs"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = ExperimentConfig::parse("# header\n\nk = 2 # two\nseed=5\n").unwrap();
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.train.seed, 5);
    }

    #[test]
    fn hash_tracks_settings() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.set("seed", "1").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.set("out", "elsewhere").unwrap();
        assert_eq!(a.hash(), c.hash());
    }
}
