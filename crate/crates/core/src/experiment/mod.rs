//! Benchmarks and experiment orchestration.

mod bench;
mod config;
mod run;

pub use bench::{
    pretrain, random_split, run_strategy, Benchmark, BenchmarkSpec, Pretrained, Splits,
    StrategyOutcome,
};
pub use config::{DataSource, ExperimentConfig};
pub use run::{
    load_data, metrics_csv, resolve_tokenizer, run_experiment, ExperimentOutcome, MetricsRow,
    COMPONENTS_HEADER, METRICS_HEADER, VERSION,
};
