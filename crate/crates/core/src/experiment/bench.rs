use rand::seq::SliceRandom;

use crate::corpus::synthetic::{OrderRule, SyntheticSpec, SyntheticWorld};
use crate::corpus::Corpus;
use crate::error::Result;
use crate::eval::{evaluate, report_components, ComponentReport, Scores};
use crate::mixture::{
    dynamic_pretrain_traced, soft_em_finetune, split_pretrain, DynamicTrace, MixtureModel,
    Strategy, TrainConfig,
};
use crate::rng;
use crate::topic::{fit_bilingual_topics, split_by_topic};

/// Sizes and generator settings of the three-domain cipher benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub world: SyntheticSpec,
    pub train: usize,
    pub finetune: usize,
    pub eval: usize,
    /// In-domain data comes from domain 0 with this fraction of its chain redrawn.
    pub drift: f64,
    pub topic_alpha: f64,
    pub topic_iterations: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            world: SyntheticSpec {
                domains: 3,
                vocab_size: 40,
                shared_fraction: 1.0,
                divergence: 0.1,
                branching: 2,
                order: vec![
                    OrderRule::Identity,
                    OrderRule::Reverse,
                    OrderRule::SwapAdjacent,
                ],
                min_len: 4,
                max_len: 10,
                pairs: 30_000,
                ..Default::default()
            },
            train: 30_000,
            finetune: 3_000,
            eval: 1_000,
            drift: 0.5,
            topic_alpha: 0.1,
            topic_iterations: 20,
        }
    }
}

impl BenchmarkSpec {
    /// Three ciphers of one plaintext language: disjoint source alphabets,
    /// a common target vocabulary.
    pub fn disjoint() -> Self {
        let mut s = Self::default();
        s.world.shared_fraction = 0.0;
        s.world.divergence = 0.0;
        s.world.shared_targets = true;
        s
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub world: SyntheticWorld,
    pub train: Corpus,
    pub finetune: Corpus,
    pub eval: Corpus,
}

impl Benchmark {
    pub fn generate(spec: &BenchmarkSpec, seed: u64) -> Result<Self> {
        let world = SyntheticWorld::new(&spec.world, seed)?;
        let train = world.corpus(spec.train, &mut rng::rng(seed, 0xB0));
        let drifted = world.drifted_domain(0, spec.drift, seed);
        let mut r = rng::rng(seed, 0xB1);
        let mut in_domain = |n: usize| -> Corpus {
            (0..n)
                .map(|_| world.to_pair(&world.sample_from(&drifted, 0, &mut r)))
                .collect()
        };
        let finetune = in_domain(spec.finetune);
        let eval = in_domain(spec.eval);
        Ok(Self {
            world,
            train,
            finetune,
            eval,
        })
    }
}

/// Result of pretraining one strategy.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: MixtureModel,
    /// Component per training pair where the strategy defines one.
    pub labels: Option<Vec<usize>>,
    pub trace: Option<DynamicTrace>,
}

/// Random equal-size split of `corpus` into `k` parts.
pub fn random_split(corpus: &Corpus, k: usize, seed: u64) -> (Vec<Corpus>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut rng::rng(seed, 0x5b11));
    let mut labels = vec![0; corpus.len()];
    let parts = (0..k)
        .map(|z| {
            let mine: Vec<usize> = idx.iter().copied().skip(z).step_by(k).collect();
            for &i in &mine {
                labels[i] = z;
            }
            corpus.select(&mine)
        })
        .collect();
    (parts, labels)
}

pub fn pretrain(
    strategy: Strategy,
    train: &Corpus,
    k: usize,
    spec: &BenchmarkSpec,
    config: &TrainConfig,
) -> Result<Pretrained> {
    match strategy {
        Strategy::Single => Ok(Pretrained {
            model: split_pretrain(std::slice::from_ref(train), Strategy::Single, config)?,
            labels: Some(vec![0; train.len()]),
            trace: None,
        }),
        Strategy::Uniform => {
            let (parts, labels) = random_split(train, k, config.seed);
            Ok(Pretrained {
                model: split_pretrain(&parts, Strategy::Uniform, config)?,
                labels: Some(labels),
                trace: None,
            })
        }
        Strategy::Topic => {
            let fit = fit_bilingual_topics(
                train,
                k,
                spec.topic_alpha,
                spec.topic_iterations,
                config.seed,
            )?;
            let labels = crate::topic::assign_topics(&fit.model, train);
            let parts = split_by_topic(&fit.model, train);
            Ok(Pretrained {
                model: split_pretrain(&parts, Strategy::Topic, config)?,
                labels: Some(labels),
                trace: None,
            })
        }
        Strategy::Dynamic => {
            let (model, trace) = dynamic_pretrain_traced(train, k, config)?;
            let labels = trace
                .final_assignment
                .iter()
                .map(|z| z.unwrap_or(0))
                .collect();
            Ok(Pretrained {
                model,
                labels: Some(labels),
                trace: Some(trace),
            })
        }
    }
}

/// The three corpora one experiment runs on.
#[derive(Debug, Clone, Copy)]
pub struct Splits<'a> {
    pub train: &'a Corpus,
    pub finetune: &'a Corpus,
    pub eval: &'a Corpus,
}

impl Benchmark {
    pub fn splits(&self) -> Splits<'_> {
        Splits {
            train: &self.train,
            finetune: &self.finetune,
            eval: &self.eval,
        }
    }
}

/// Models and scores of one strategy before and after fine-tuning.
#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub pretrained: Scores,
    /// Absent when fine-tuning was skipped.
    pub finetuned: Option<Scores>,
    pub components: Vec<ComponentReport>,
    pub purity: Option<f64>,
    pub pretrained_model: MixtureModel,
    pub finetuned_model: Option<MixtureModel>,
    pub trace: Option<DynamicTrace>,
}

pub fn run_strategy(
    data: Splits<'_>,
    strategy: Strategy,
    k: usize,
    spec: &BenchmarkSpec,
    config: &TrainConfig,
    finetune: bool,
) -> Result<StrategyOutcome> {
    let pre = pretrain(strategy, data.train, k, spec, config)?;
    let opts = config.decode_options();
    let pretrained = evaluate(&pre.model, data.eval, &opts)?;
    let components = report_components(&pre.model, data.eval, &opts)?;
    let tuned = if finetune {
        Some(soft_em_finetune(&pre.model, data.finetune, config)?)
    } else {
        None
    };
    let finetuned = tuned
        .as_ref()
        .map(|m| evaluate(m, data.eval, &opts))
        .transpose()?;
    let purity = match (&pre.labels, data.train.gold_labels()) {
        (Some(l), Some(g)) => Some(crate::eval::purity(l, &g)?),
        _ => None,
    };
    Ok(StrategyOutcome {
        strategy,
        pretrained,
        finetuned,
        components,
        purity,
        pretrained_model: pre.model,
        finetuned_model: tuned,
        trace: pre.trace,
    })
}
