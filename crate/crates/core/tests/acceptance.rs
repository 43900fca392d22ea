//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use mixnmt::align::{
    align_blocks, align_document_pair, filter_pairs, fit_aligner, score_block, train_model1,
    AlignParams, Script, TTable,
};
use mixnmt::assign::{objective, solve_balanced_enumerate, solve_balanced_hillclimb, ScoreMatrix};
use mixnmt::corpus::synthetic::{
    generate_synthetic_corpus, NoiseRates, SyntheticSpec, SyntheticWorld,
};
use mixnmt::corpus::{tokenize_pairs, Origin, RawPair, BOS};
use mixnmt::eval::{corpus_bleu, pearson, purity, variance};
use mixnmt::experiment::{
    run_experiment, run_strategy, Benchmark, BenchmarkSpec, ExperimentConfig, StrategyOutcome,
};
use mixnmt::mixture::{
    dynamic_pretrain_traced, features, gate_gradient, gate_loss, gate_predict, gate_train,
    responsibilities, step_distribution, Features, GateTraining, Strategy, TrainConfig,
};
use mixnmt::rng;
use mixnmt::topic::{assign_topics, fit_bilingual_topics, infer_topic_posterior};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1 ------------------------------------------------------------------------

fn balanced_assignment() -> Check {
    let (k, b) = (3, 3);
    let mut exact = 0;
    let mut worst_gap: f64 = 0.0;
    for inst in 0..100u64 {
        let mut r = rng::rng(inst, 0xA1);
        let rows: Vec<Vec<f64>> = (0..k * b)
            .map(|_| {
                (0..k)
                    .map(|_| r.gen::<f64>().max(f64::MIN_POSITIVE).ln())
                    .collect()
            })
            .collect();
        let s = ScoreMatrix::from_rows(&rows).map_err(e2s)?;
        let got = solve_balanced_hillclimb(&s, b, inst, 8, 100_000).map_err(e2s)?;
        ensure(
            got.is_balanced(k, b),
            format!("instance {inst}: not exactly-B"),
        )?;
        let best = objective(&s, &solve_balanced_enumerate(&s, b).map_err(e2s)?).map_err(e2s)?;
        let val = objective(&s, &got).map_err(e2s)?;
        let gap = (best - val) / best.abs().max(1e-12);
        if gap <= 1e-9 {
            exact += 1;
        }
        worst_gap = worst_gap.max(gap);
    }
    ensure(exact >= 90, format!("optimal in {exact}/100"))?;
    ensure(
        worst_gap <= 0.05,
        format!("worst relative gap {worst_gap:.4}"),
    )?;
    Ok(format!("optimal in {exact}/100, worst gap {worst_gap:.4}"))
}

// 2, 3 -------------------------------------------------------------------

/// Add-one smoothing and a three-instance warm start.
fn dynamic_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        seed,
        epochs: 5.0,
        batch: 32,
        interval: 1e-4,
        ..TrainConfig::benchmark()
    };
    c.component.delta = 1.0;
    c
}

fn exactly_b() -> Check {
    let bench = Benchmark::generate(&BenchmarkSpec::default(), 1).map_err(e2s)?;
    let cfg = dynamic_config(1);
    let (_, trace) = dynamic_pretrain_traced(&bench.train, 3, &cfg).map_err(e2s)?;
    let v = trace.violations(32);
    ensure(v == 0, format!("{v} violating E-steps"))?;
    Ok(format!("{} E-steps, 0 violations", trace.step_counts.len()))
}

fn degeneracy_contrast() -> Check {
    let mut shares = Vec::new();
    for seed in [1, 2, 3] {
        let bench = Benchmark::generate(&BenchmarkSpec::default(), seed).map_err(e2s)?;
        let balanced = dynamic_config(seed);
        let (_, bt) = dynamic_pretrain_traced(&bench.train, 3, &balanced).map_err(e2s)?;
        ensure(
            bt.violations(32) == 0,
            format!("seed {seed}: balanced run deviates from B"),
        )?;
        let free = TrainConfig {
            unconstrained_estep: true,
            ..balanced
        };
        let (_, ft) = dynamic_pretrain_traced(&bench.train, 3, &free).map_err(e2s)?;
        let share = ft.max_epoch_share();
        ensure(
            share > 0.6,
            format!("seed {seed}: argmax max epoch share {share:.3}"),
        )?;
        shares.push(format!("{share:.3}"));
    }
    Ok(format!("argmax max epoch shares {}", shares.join(", ")))
}

// 4, 10 ------------------------------------------------------------------

const STRATEGIES: [Strategy; 3] = [Strategy::Uniform, Strategy::Topic, Strategy::Dynamic];

fn benchmark_runs() -> Result<Vec<Vec<StrategyOutcome>>, String> {
    let spec = BenchmarkSpec::default();
    let mut out = Vec::new();
    for seed in [1, 2, 3] {
        let bench = Benchmark::generate(&spec, seed).map_err(e2s)?;
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::benchmark()
        };
        let mut row = Vec::new();
        for s in STRATEGIES {
            row.push(run_strategy(bench.splits(), s, 3, &spec, &cfg, true).map_err(e2s)?);
        }
        out.push(row);
    }
    Ok(out)
}

fn strategy_ordering(runs: &[Vec<StrategyOutcome>]) -> Check {
    let n = runs.len() as f64;
    let mean = |i: usize, tuned: bool| {
        runs.iter()
            .map(|r| {
                if tuned {
                    r[i].finetuned.expect("fine-tuned").accuracy
                } else {
                    r[i].pretrained.accuracy
                }
            })
            .sum::<f64>()
            / n
    };
    let mut detail = Vec::new();
    for tuned in [false, true] {
        let (u, t, d) = (mean(0, tuned), mean(1, tuned), mean(2, tuned));
        let block = if tuned { "finetune" } else { "pretrain" };
        detail.push(format!("{block} u={u:.4} t={t:.4} d={d:.4}"));
        ensure(
            d >= t && t >= u,
            format!("{block}: ordering fails ({})", detail.last().unwrap()),
        )?;
        ensure(
            d - u >= 0.01,
            format!("{block}: dynamic - uniform = {:.4}", d - u),
        )?;
    }
    for (i, s) in STRATEGIES.iter().enumerate() {
        let gain = mean(i, true) - mean(i, false);
        ensure(gain >= 0.01, format!("{s}: fine-tuning gain {gain:.4}"))?;
    }
    Ok(detail.join("; "))
}

fn figure_two(runs: &[Vec<StrategyOutcome>]) -> Check {
    let mut var_ok = 0;
    let mut corr_ok = 0;
    let mut detail = Vec::new();
    for r in runs {
        let acc = |o: &StrategyOutcome| o.components.iter().map(|c| c.accuracy).collect::<Vec<_>>();
        let (vu, vt, vd) = (
            variance(&acc(&r[0])),
            variance(&acc(&r[1])),
            variance(&acc(&r[2])),
        );
        if vu < vt && vu < vd {
            var_ok += 1;
        }
        let w: Vec<f64> = r[2].components.iter().map(|c| c.average_weight).collect();
        let corr = pearson(&acc(&r[2]), &w);
        if corr > 0.0 {
            corr_ok += 1;
        }
        detail.push(format!(
            "var u/t/d {vu:.2e}/{vt:.2e}/{vd:.2e} corr {corr:.3}"
        ));
    }
    let need = runs.len() / 2 + 1;
    ensure(
        var_ok >= need,
        format!("variance ordering in {var_ok} seeds: {}", detail.join("; ")),
    )?;
    ensure(
        corr_ok >= need,
        format!(
            "positive correlation in {corr_ok} seeds: {}",
            detail.join("; ")
        ),
    )?;
    Ok(detail.join("; "))
}

// 5 ----------------------------------------------------------------------

fn topic_corpus(shared: f64, seed: u64) -> mixnmt::corpus::Corpus {
    let spec = SyntheticSpec {
        domains: 2,
        vocab_size: 120,
        shared_fraction: shared,
        branching: 6,
        pairs: 2000,
        ..Default::default()
    };
    generate_synthetic_corpus(&spec, seed).expect("valid spec")
}

fn topic_purity() -> Check {
    let mut detail = Vec::new();
    for (shared, bound) in [(0.0, 1.0), (0.2, 0.9)] {
        for seed in [1, 2, 3] {
            let c = topic_corpus(shared, seed);
            let fit = fit_bilingual_topics(&c, 2, 0.1, 20, seed).map_err(e2s)?;
            for (i, w) in fit.objective.windows(2).enumerate() {
                ensure(
                    w[1] >= w[0] - 1e-9,
                    format!("shared {shared} seed {seed}: EM drops at {i}"),
                )?;
            }
            let p =
                purity(&assign_topics(&fit.model, &c), &c.gold_labels().unwrap()).map_err(e2s)?;
            ensure(
                p >= bound,
                format!("shared {shared} seed {seed}: purity {p:.4}"),
            )?;
            detail.push(format!("{p:.3}"));
        }
    }
    Ok(format!("purities {}", detail.join(" ")))
}

// 6 ----------------------------------------------------------------------

fn align_setup(
    noise: NoiseRates,
    seed: u64,
) -> Result<(SyntheticWorld, TTable, AlignParams), String> {
    let spec = SyntheticSpec {
        domains: 2,
        vocab_size: 80,
        branching: 4,
        min_len: 4,
        max_len: 14,
        pairs: 600,
        noise,
        ..Default::default()
    };
    let world = SyntheticWorld::new(&spec, seed).map_err(e2s)?;
    let bitext = world.seed_bitext(2000, &mut rng::rng(seed, 77));
    let (table, params) = fit_aligner(&bitext, AlignParams::default(), 8).map_err(e2s)?;
    Ok((world, table, params))
}

fn best_cover(
    i: usize,
    j: usize,
    src: &[String],
    tgt: &[String],
    t: &TTable,
    p: &AlignParams,
) -> f64 {
    if i == src.len() && j == tgt.len() {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    for pat in &p.patterns {
        let (di, dj) = pat.sizes();
        if i + di > src.len() || j + dj > tgt.len() {
            continue;
        }
        let s = score_block(&src[i..i + di], &tgt[j..j + dj], t, p).unwrap();
        best = best.max(s + best_cover(i + di, j + dj, src, tgt, t, p));
    }
    best
}

fn origins(pairs: &[RawPair]) -> HashSet<Origin> {
    pairs.iter().filter_map(|p| p.origin.clone()).collect()
}

fn alignment_pipeline() -> Check {
    let (world, table, params) = align_setup(NoiseRates::default(), 3)?;
    let (docs, gold) = world.documents(600, &mut rng::rng(3, 11));
    let found: Vec<RawPair> = docs
        .iter()
        .flat_map(|d| align_document_pair(d, &table, &params))
        .collect();
    let gold: HashSet<Origin> = gold.into_iter().collect();
    let got = origins(&found);
    let clean_recall = got.intersection(&gold).count() as f64 / gold.len() as f64;
    ensure(
        clean_recall == 1.0,
        format!("noise-free recall {clean_recall:.4}"),
    )?;

    let mut r = rng::rng(1, 5);
    for case in 0..200 {
        let n = r.gen_range(0..=6);
        let m = r.gen_range(0..=6);
        let src: Vec<String> = (0..n)
            .map(|_| world.source_text(&world.sample(0, &mut r).source))
            .collect();
        let tgt: Vec<String> = (0..m)
            .map(|_| world.target_text(&world.sample(1, &mut r).target))
            .collect();
        if n + m == 0 {
            continue;
        }
        let total: f64 = align_blocks(&src, &tgt, &table, &params)
            .iter()
            .map(|b| b.score)
            .sum();
        let oracle = best_cover(0, 0, &src, &tgt, &table, &params);
        ensure(
            (total - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
            format!("case {case} ({n}x{m}): dp {total} vs enumeration {oracle}"),
        )?;
    }

    let noise = NoiseRates {
        misalignment: 0.10,
        identical: 0.05,
        wrong_language: 0.05,
        merge_fraction: 0.0,
    };
    let mut detail = vec![format!("clean recall {clean_recall:.3}")];
    for seed in [6, 7] {
        let (world, table, params) = align_setup(noise, seed)?;
        let (docs, gold) = world.documents(1500, &mut rng::rng(seed, 13));
        let found: Vec<RawPair> = docs
            .iter()
            .flat_map(|d| align_document_pair(d, &table, &params))
            .collect();
        let kept = filter_pairs(&found, &params, Script::Cjk, Script::Latin);
        let gold: HashSet<Origin> = gold.into_iter().collect();
        let got = origins(&kept);
        let tp = got.intersection(&gold).count() as f64;
        let (p, rc) = (tp / got.len() as f64, tp / gold.len() as f64);
        ensure(
            p >= 0.95 && rc >= 0.90,
            format!("seed {seed}: precision {p:.4} recall {rc:.4}"),
        )?;
        detail.push(format!("noisy p/r {p:.3}/{rc:.3}"));
    }
    Ok(detail.join(", "))
}

// 7 ----------------------------------------------------------------------

fn simplex(p: &[f64], tol: f64, what: &str) -> Result<(), String> {
    let s: f64 = p.iter().sum();
    ensure(
        (s - 1.0).abs() <= tol && p.iter().all(|v| *v >= 0.0 && v.is_finite()),
        format!("{what}: sums to {s}"),
    )
}

fn numerics() -> Check {
    let bench = Benchmark::generate(
        &BenchmarkSpec {
            train: 3000,
            finetune: 200,
            eval: 50,
            ..BenchmarkSpec::default()
        },
        5,
    )
    .map_err(e2s)?;
    let labelled: Vec<(&[String], Vec<f64>)> = bench
        .train
        .iter()
        .take(400)
        .map(|p| {
            let mut t = vec![0.0; 3];
            t[p.domain.unwrap()] = 1.0;
            (p.source.as_slice(), t)
        })
        .collect();
    let mut gate = gate_train(&labelled, 3, GateTraining::default()).map_err(e2s)?;
    let examples: Vec<(Features, Vec<f64>)> = labelled
        .iter()
        .map(|(s, t)| (features(s), t.clone()))
        .collect();
    let active: Vec<u32> = {
        let mut v: Vec<u32> = examples
            .iter()
            .flat_map(|(x, _)| x.iter().map(|e| e.0))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut r = rng::rng(5, 0xF0);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let z = r.gen_range(0..3);
        let f = active[r.gen_range(0..active.len())] as usize;
        let w = gate.weight(z, f);
        gate.set_weight(z, f, w + h);
        let up = gate_loss(&gate, &examples);
        gate.set_weight(z, f, w - h);
        let down = gate_loss(&gate, &examples);
        gate.set_weight(z, f, w);
        let fd = (up - down) / (2.0 * h);
        let an = gate_gradient(&gate, &examples, z, f);
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    ensure(
        worst <= 1e-4,
        format!("gate gradient relative error {worst:.2e}"),
    )?;

    let cfg = TrainConfig {
        seed: 5,
        epochs: 1.0,
        ..TrainConfig::benchmark()
    };
    let (model, _) = dynamic_pretrain_traced(&bench.train, 3, &cfg).map_err(e2s)?;
    let fit = fit_bilingual_topics(&bench.train, 3, 0.1, 10, 5).map_err(e2s)?;
    for (i, w) in fit.objective.windows(2).enumerate() {
        ensure(w[1] >= w[0] - 1e-9, format!("topic EM drops at {i}"))?;
    }
    let src_vocab = model.source_vocab().clone();
    let tgt_vocab = model.target_vocab().clone();
    for p in bench.eval.iter() {
        simplex(&gate_predict(&model.gate, &p.source), 1e-9, "gate")?;
        simplex(&responsibilities(&model, p), 1e-9, "responsibilities")?;
        simplex(
            &infer_topic_posterior(&fit.model, p),
            1e-9,
            "topic posterior",
        )?;
        let ids = src_vocab.encode(&p.source);
        let weights = model.gate_weights(&p.source);
        for prev in [BOS, tgt_vocab.id(&p.target[0])] {
            let d = step_distribution(&model.components, &weights, &ids, prev).map_err(e2s)?;
            simplex(&d, 1e-9, "step distribution")?;
        }
    }

    let raw: Vec<RawPair> = bench
        .train
        .iter()
        .take(1000)
        .map(|p| RawPair::new(p.source.concat(), p.target.join(" ")))
        .collect();
    let corpus = tokenize_pairs(
        &raw,
        &mixnmt::corpus::Tokenizer::Char,
        &mixnmt::corpus::Tokenizer::Word,
    );
    let m1 = train_model1(&corpus, 8).map_err(e2s)?;
    for (i, w) in m1.log_likelihood.windows(2).enumerate() {
        ensure(w[1] >= w[0] - 1e-9, format!("Model 1 EM drops at {i}"))?;
    }
    Ok(format!("gradient rel err {worst:.2e}"))
}

// 8 ----------------------------------------------------------------------

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn bleu_of(h: &[&str], r: &[&str]) -> Result<f64, String> {
    let h: Vec<_> = h.iter().map(|s| toks(s)).collect();
    let r: Vec<_> = r.iter().map(|s| toks(s)).collect();
    corpus_bleu(&h, &r).map_err(e2s)
}

fn metric_oracles() -> Check {
    let floor = 1e-9f64.ln();
    let cases: [(&[&str], &[&str], f64); 5] = [
        // p1 = 1/4 after clipping, higher orders empty
        (
            &["the the the the"],
            &["the cat"],
            100.0 * (0.25 * (0.25f64.ln() + 3.0 * floor)).exp(),
        ),
        // 5/5, 2/4, 1/3, 0/2
        (
            &["a b c d x"],
            &["a b c x d"],
            100.0 * (0.25 * (0.5f64.ln() + (1.0f64 / 3.0).ln() + floor)).exp(),
        ),
        // all precisions 1; brevity penalty exp(1 - 6/4)
        (&["a b c d"], &["a b c d e f"], 100.0 * (-0.5f64).exp()),
        // pooled: 8/8, 4/6, 2/4, 1/2
        (
            &["a b c d", "e f g h"],
            &["a b c d", "e f h g"],
            100.0 * (0.25 * ((4.0f64 / 6.0).ln() + 2.0 * 0.5f64.ln())).exp(),
        ),
        // pooled clipping: 3/6, 1/4, 0/2, 0/1
        (
            &["the the the the", "a cat"],
            &["the cat", "a cat"],
            100.0 * (0.25 * (0.5f64.ln() + 0.25f64.ln() + 2.0 * floor)).exp(),
        ),
    ];
    for (i, (h, r, want)) in cases.iter().enumerate() {
        let got = bleu_of(h, r)?;
        ensure(
            (got - want).abs() <= 1e-6,
            format!("case {i}: {got} vs {want}"),
        )?;
    }
    let id = bleu_of(&["a b c d e", "x y z w"], &["a b c d e", "x y z w"])?;
    ensure(id == 100.0, format!("identity {id}"))?;
    Ok("5 hand cases within 1e-6, identity 100".into())
}

// 9 ----------------------------------------------------------------------

fn collect_files(
    root: &Path,
    dir: &Path,
    out: &mut BTreeMap<String, Vec<u8>>,
) -> std::io::Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(rel, fs::read(&p)?);
        }
    }
    Ok(())
}

fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let text = "experiment=repro\nseed=9\nepochs=1\ninterval=0.1\n\
                bench_train=1500\nbench_finetune=150\nbench_eval=60\n";
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = ExperimentConfig::parse(text).map_err(e2s)?;
        cfg.out = tmp.path().join(run);
        run_experiment(&cfg).map_err(e2s)?;
        let mut files = BTreeMap::new();
        collect_files(&cfg.out, &cfg.out, &mut files).map_err(e2s)?;
        files.remove("config.txt");
        snapshots.push(files);
    }
    ensure(snapshots[0].contains_key("metrics.csv"), "no metrics.csv")?;
    let keys: Vec<&String> = snapshots[0].keys().collect();
    ensure(
        keys == snapshots[1].keys().collect::<Vec<_>>(),
        "runs wrote different files",
    )?;
    for (k, v) in &snapshots[0] {
        ensure(snapshots[1][k] == *v, format!("{k} differs between runs"))?;
    }
    let mut counts = Vec::new();
    for s in STRATEGIES {
        let dir = tmp.path().join("a/checkpoints").join(s.name());
        let n = fs::read_dir(&dir).map_err(e2s)?.count();
        ensure(n == 10, format!("{s}: {n} checkpoints"))?;
        counts.push(n.to_string());
    }
    Ok(format!(
        "{} identical files; checkpoints {}",
        keys.len(),
        counts.join("/")
    ))
}

// ------------------------------------------------------------------------

fn report(n: usize, name: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let mut result = f();
    let took = start.elapsed();
    if result.is_ok() && took > limit {
        result = Err(format!(
            "took {:.1}s, limit {}s",
            took.as_secs_f64(),
            limit.as_secs()
        ));
    }
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    println!(
        "criterion {n:>2} {tag} {name}: {detail} ({:.1}s)",
        took.as_secs_f64()
    );
    result.is_ok()
}

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut ok = true;
    ok &= report(
        1,
        "balanced assignment",
        Duration::from_secs(10),
        balanced_assignment,
    );
    ok &= report(2, "exactly-B E-steps", min(3), exactly_b);
    ok &= report(3, "degeneracy contrast", min(15), degeneracy_contrast);

    let start = Instant::now();
    let runs = benchmark_runs();
    let run_time = start.elapsed();
    ok &= report(4, "strategy ordering", min(15), || {
        let r = runs.as_ref().map_err(Clone::clone)?;
        strategy_ordering(r).map(|d| format!("{d}; runs {:.0}s", run_time.as_secs_f64()))
    }) && run_time <= min(15);

    ok &= report(5, "topic split purity", min(2), topic_purity);
    ok &= report(6, "alignment pipeline", min(2), alignment_pipeline);
    ok &= report(7, "numerics", min(5), numerics);
    ok &= report(8, "metric oracles", Duration::from_secs(10), metric_oracles);
    ok &= report(
        9,
        "reproducibility and checkpoints",
        min(10),
        reproducibility,
    );
    ok &= report(10, "per-component pattern", min(1), || {
        figure_two(runs.as_ref().map_err(Clone::clone)?)
    });
    if !ok {
        std::process::exit(1);
    }
}
