use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mixnmt::align::{align_document_pair, filter_pairs, fit_aligner, AlignParams, Script};
use mixnmt::assign::{solve_balanced_hillclimb, ScoreMatrix};
use mixnmt::corpus::io::{
    corpus_to_raw, load_corpus, read_documents, read_pairs, write_bpe, write_documents, write_gold,
    write_pairs,
};
use mixnmt::corpus::synthetic::{OrderRule, SyntheticSpec, SyntheticWorld};
use mixnmt::corpus::{learn_bpe, Corpus, RawPair, Tokenizer};
use mixnmt::eval::{evaluate, report_components};
use mixnmt::experiment::{
    load_data, metrics_csv, pretrain, resolve_tokenizer, run_experiment, Benchmark, BenchmarkSpec,
    ExperimentConfig,
};
use mixnmt::mixture::{soft_em_finetune, MixtureModel, Strategy};
use mixnmt::rng;
use mixnmt::topic::{fit_bilingual_topics, split_by_topic};

#[derive(Parser)]
#[command(
    name = "mixctl",
    version,
    about = "Mixture-of-components translation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic bitext, documents or the cipher benchmark.
    MakeSynthetic(MakeSynthetic),
    /// Sentence-align document pairs and filter the result.
    Align(AlignCmd),
    /// Learn BPE merges from one side of a pair file.
    LearnBpe(LearnBpe),
    /// Fit the bilingual topic model and split a pair file by topic.
    TopicSplit(TopicSplit),
    /// Pretrain a mixture with one strategy.
    Pretrain(Pretrain),
    /// Fine-tune a saved mixture on the configured in-domain data.
    Finetune(Finetune),
    /// Translate source lines read from a file or stdin.
    Decode(Decode),
    /// Score a saved mixture on a pair file.
    Evaluate(EvalCmd),
    /// Per-component scores and average gate weights.
    Report(EvalCmd),
    /// Run a full experiment from a config file.
    Run(Run),
    /// Solve a balanced assignment for a score matrix CSV.
    Assign(AssignCmd),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the effective config and exit.
    #[arg(long)]
    dump_config: bool,
}

impl ConfigArgs {
    /// Returns `None` after printing when `--dump-config` was given.
    fn load(&self) -> Result<Option<ExperimentConfig>> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentConfig::parse(&text)?
            }
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set {kv}: expected KEY=VALUE"))?;
            cfg.set(k.trim(), v)?;
        }
        if self.dump_config {
            print!("{}", cfg.dump());
            return Ok(None);
        }
        cfg.validate()?;
        Ok(Some(cfg))
    }
}

#[derive(Args)]
struct MakeSynthetic {
    /// `pairs`, `documents` or `benchmark`.
    #[arg(long, default_value = "pairs")]
    kind: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 1)]
    domains: usize,
    #[arg(long, default_value_t = 50)]
    vocab: usize,
    #[arg(long, default_value_t = 0.0)]
    shared: f64,
    #[arg(long, default_value_t = 0.0)]
    divergence: f64,
    /// One target vocabulary for all domains (their own tokens only).
    #[arg(long)]
    shared_targets: bool,
    #[arg(long, default_value_t = 0)]
    branching: usize,
    /// Comma-separated order rules: identity, reverse, swap.
    #[arg(long, default_value = "identity")]
    order: String,
    #[arg(long, default_value_t = 0.0)]
    misalignment: f64,
    #[arg(long, default_value_t = 0.0)]
    identical: f64,
    #[arg(long, default_value_t = 0.0)]
    wrong_language: f64,
    /// Seed bitext size written next to documents.
    #[arg(long, default_value_t = 500)]
    seed_pairs: usize,
}

#[derive(Args)]
struct AlignCmd {
    /// Directory of source documents.
    #[arg(long)]
    src_dir: PathBuf,
    /// Directory of target documents with matching file names.
    #[arg(long)]
    tgt_dir: PathBuf,
    /// Aligned seed pairs for the lexical and length models.
    #[arg(long)]
    seed_pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    /// Pairing threshold; estimated from the seed pairs when omitted.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value = "cjk")]
    source_script: String,
    #[arg(long, default_value = "latin")]
    target_script: String,
}

#[derive(Args)]
struct LearnBpe {
    #[arg(long)]
    input: PathBuf,
    /// `source` or `target`.
    #[arg(long, default_value = "target")]
    side: String,
    #[arg(long, default_value_t = 1000)]
    merges: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TopicSplit {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "char")]
    source_tokenizer: String,
    #[arg(long, default_value = "word")]
    target_tokenizer: String,
}

#[derive(Args)]
struct Pretrain {
    #[command(flatten)]
    config: ConfigArgs,
    /// Overrides the first configured strategy.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct Finetune {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct DecodeFlags {
    #[arg(long, default_value_t = 16)]
    beam: usize,
    #[arg(long, default_value_t = 0.0)]
    diversity: f64,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
    /// `char`, `word` or `bpe:<model file>`.
    #[arg(long, default_value = "char")]
    source_tokenizer: String,
    #[arg(long, default_value = "word")]
    target_tokenizer: String,
}

impl DecodeFlags {
    fn options(&self) -> mixnmt::mixture::DecodeOptions {
        mixnmt::mixture::DecodeOptions {
            beam: self.beam,
            diversity: self.diversity,
            max_len: self.max_len,
        }
    }
}

#[derive(Args)]
struct Decode {
    #[arg(long)]
    model: PathBuf,
    /// One source sentence per line; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    flags: DecodeFlags,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    model: PathBuf,
    /// Pair file to score against.
    #[arg(long)]
    eval: PathBuf,
    #[command(flatten)]
    flags: DecodeFlags,
}

#[derive(Args)]
struct Run {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct AssignCmd {
    /// CSV with one row of K scores per instance.
    #[arg(long)]
    scores: PathBuf,
    /// Instances per component.
    #[arg(long)]
    batch: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 100_000)]
    max_moves: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_orders(s: &str) -> Result<Vec<OrderRule>> {
    s.split(',')
        .map(|o| OrderRule::parse(o.trim()).with_context(|| format!("unknown order rule `{o}`")))
        .collect()
}

fn make_synthetic(a: &MakeSynthetic) -> Result<()> {
    let mut spec = SyntheticSpec {
        domains: a.domains,
        vocab_size: a.vocab,
        shared_fraction: a.shared,
        divergence: a.divergence,
        shared_targets: a.shared_targets,
        branching: a.branching,
        order: parse_orders(&a.order)?,
        pairs: a.pairs,
        ..Default::default()
    };
    spec.noise.misalignment = a.misalignment;
    spec.noise.identical = a.identical;
    spec.noise.wrong_language = a.wrong_language;
    fs::create_dir_all(&a.out)?;
    let raw = |c: &Corpus| corpus_to_raw(c, &Tokenizer::Char, &Tokenizer::Word);
    match a.kind.as_str() {
        "pairs" => {
            let world = SyntheticWorld::new(&spec, a.seed)?;
            let c = world.corpus(a.pairs, &mut rng::rng(a.seed, 0x5EED_0002));
            write_pairs(&a.out.join("pairs.tsv"), &raw(&c))?;
        }
        "documents" => {
            let world = SyntheticWorld::new(&spec, a.seed)?;
            let (docs, gold) = world.documents(a.pairs, &mut rng::rng(a.seed, 0x5EED_0003));
            write_documents(&a.out.join("docs"), &docs)?;
            write_gold(&a.out.join("gold.tsv"), &gold)?;
            let seed = world.seed_bitext(a.seed_pairs, &mut rng::rng(a.seed, 0x5EED_0004));
            write_pairs(&a.out.join("seed.tsv"), &seed)?;
        }
        "benchmark" => {
            let b = Benchmark::generate(&BenchmarkSpec::default(), a.seed)?;
            for (name, c) in [
                ("train", &b.train),
                ("finetune", &b.finetune),
                ("eval", &b.eval),
            ] {
                write_pairs(&a.out.join(format!("{name}.tsv")), &raw(c))?;
            }
        }
        other => bail!("--kind: expected pairs, documents or benchmark, got `{other}`"),
    }
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn script(s: &str) -> Result<Script> {
    Script::parse(s).with_context(|| format!("unknown script `{s}`"))
}

fn align(a: &AlignCmd) -> Result<()> {
    let seed = read_pairs(&a.seed_pairs)?;
    let (table, mut params) = fit_aligner(&seed, AlignParams::default(), a.iterations)?;
    if let Some(t) = a.tau {
        params.tau = t;
    }
    let docs = read_documents(&a.src_dir, &a.tgt_dir)?;
    let pairs: Vec<RawPair> = docs
        .iter()
        .flat_map(|d| align_document_pair(d, &table, &params))
        .collect();
    let kept = filter_pairs(
        &pairs,
        &params,
        script(&a.source_script)?,
        script(&a.target_script)?,
    );
    write_pairs(&a.out, &kept)?;
    eprintln!(
        "{} documents, {} aligned, {} kept",
        docs.len(),
        pairs.len(),
        kept.len()
    );
    Ok(())
}

fn learn_bpe_cmd(a: &LearnBpe) -> Result<()> {
    let pairs = read_pairs(&a.input)?;
    let words: Vec<&str> = pairs
        .iter()
        .map(|p| match a.side.as_str() {
            "source" => Ok(p.source.as_str()),
            "target" => Ok(p.target.as_str()),
            other => bail!("--side: expected source or target, got `{other}`"),
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(str::split_whitespace)
        .collect();
    let model = learn_bpe(&words, a.merges);
    write_bpe(&a.out, &model)?;
    Ok(())
}

fn topic_split(a: &TopicSplit) -> Result<()> {
    let src = resolve_tokenizer(&a.source_tokenizer)?;
    let tgt = resolve_tokenizer(&a.target_tokenizer)?;
    let corpus = load_corpus(&a.input, &src, &tgt)?;
    let fit = fit_bilingual_topics(&corpus, a.k, a.alpha, a.iterations, a.seed)?;
    fs::create_dir_all(&a.out)?;
    fit.model.write(&a.out.join("topics.tsv"))?;
    for (z, part) in split_by_topic(&fit.model, &corpus).iter().enumerate() {
        write_pairs(
            &a.out.join(format!("split-{z}.tsv")),
            &corpus_to_raw(part, &src, &tgt),
        )?;
        eprintln!("topic {z}: {} pairs", part.len());
    }
    Ok(())
}

fn pretrain_cmd(a: &Pretrain) -> Result<()> {
    let Some(cfg) = a.config.load()? else {
        return Ok(());
    };
    let strategy = a.strategy.unwrap_or(cfg.strategies[0]);
    let (train, _, _) = load_data(&cfg)?;
    let k = if strategy == Strategy::Single {
        1
    } else {
        cfg.k
    };
    let pre = pretrain(strategy, &train, k, &cfg.bench, &cfg.train)?;
    pre.model.save(&a.model_out, Some(&cfg.train))?;
    eprintln!("saved {} model to {}", strategy, a.model_out.display());
    Ok(())
}

fn finetune_cmd(a: &Finetune) -> Result<()> {
    let Some(cfg) = a.config.load()? else {
        return Ok(());
    };
    let model = MixtureModel::load(&a.model)?;
    let (_, finetune, _) = load_data(&cfg)?;
    let tuned = soft_em_finetune(&model, &finetune, &cfg.train)?;
    tuned.save(&a.model_out, Some(&cfg.train))?;
    eprintln!("saved fine-tuned model to {}", a.model_out.display());
    Ok(())
}

fn decode_cmd(a: &Decode) -> Result<()> {
    let model = MixtureModel::load(&a.model)?;
    let src = resolve_tokenizer(&a.flags.source_tokenizer)?;
    let tgt = resolve_tokenizer(&a.flags.target_tokenizer)?;
    let lines: Vec<String> = match &a.input {
        Some(p) => fs::read_to_string(p)?.lines().map(String::from).collect(),
        None => io::stdin().lock().lines().collect::<io::Result<_>>()?,
    };
    let sources: Vec<_> = lines.iter().map(|l| src.tokenize(l)).collect();
    let hyps = model.translate_all(&sources, &a.flags.options())?;
    let mut out = io::stdout().lock();
    for h in hyps {
        writeln!(out, "{}", tgt.detokenize(&h))?;
    }
    Ok(())
}

fn load_eval(a: &EvalCmd) -> Result<(MixtureModel, Corpus)> {
    let model = MixtureModel::load(&a.model)?;
    let src = resolve_tokenizer(&a.flags.source_tokenizer)?;
    let tgt = resolve_tokenizer(&a.flags.target_tokenizer)?;
    Ok((model, load_corpus(&a.eval, &src, &tgt)?))
}

fn evaluate_cmd(a: &EvalCmd) -> Result<()> {
    let (model, eval) = load_eval(a)?;
    let s = evaluate(&model, &eval, &a.flags.options())?;
    println!("accuracy\t{:.6}\nbleu\t{:.6}", s.accuracy, s.bleu);
    Ok(())
}

fn report_cmd(a: &EvalCmd) -> Result<()> {
    let (model, eval) = load_eval(a)?;
    println!("component,accuracy,bleu,average_weight");
    for r in report_components(&model, &eval, &a.flags.options())? {
        println!(
            "{},{:.6},{:.6},{:.6}",
            r.component, r.accuracy, r.bleu, r.average_weight
        );
    }
    Ok(())
}

fn run_cmd(a: &Run) -> Result<()> {
    let Some(cfg) = a.config.load()? else {
        return Ok(());
    };
    let outcome = run_experiment(&cfg)?;
    print!("{}", metrics_csv(&outcome.rows));
    eprintln!("results in {}", cfg.out.display());
    Ok(())
}

fn assign_cmd(a: &AssignCmd) -> Result<()> {
    let scores = ScoreMatrix::read_csv(&a.scores)?;
    let assignment = solve_balanced_hillclimb(&scores, a.batch, a.seed, a.restarts, a.max_moves)?;
    let objective = mixnmt::assign::objective(&scores, &assignment)?;
    let mut out = String::new();
    for z in assignment.as_slice() {
        out.push_str(&format!("{z}\n"));
    }
    print!("{out}");
    eprintln!("objective {objective:.6}");
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::MakeSynthetic(a) => make_synthetic(a),
        Command::Align(a) => align(a),
        Command::LearnBpe(a) => learn_bpe_cmd(a),
        Command::TopicSplit(a) => topic_split(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Assign(a) => assign_cmd(a),
    }
}
