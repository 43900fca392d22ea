use mixnmt::eval::purity;
use mixnmt::experiment::{Benchmark, BenchmarkSpec};
use mixnmt::mixture::{dynamic_pretrain_traced, TrainConfig};

#[test]
fn cipher_domains_are_recovered() {
    let spec = BenchmarkSpec {
        train: 10_000,
        finetune: 10,
        eval: 10,
        ..BenchmarkSpec::disjoint()
    };
    let mut total = 0.0;
    for seed in [1, 2, 3] {
        let bench = Benchmark::generate(&spec, seed).unwrap();
        let cfg = TrainConfig {
            seed,
            epochs: 5.0,
            ..TrainConfig::benchmark()
        };
        let (_, trace) = dynamic_pretrain_traced(&bench.train, 3, &cfg).unwrap();
        assert_eq!(trace.violations(cfg.batch), 0);
        let gold = bench.train.gold_labels().unwrap();
        let (labels, gold): (Vec<usize>, Vec<usize>) = trace
            .final_assignment
            .iter()
            .zip(gold)
            .filter_map(|(z, g)| z.map(|z| (z, g)))
            .unzip();
        let p = purity(&labels, &gold).unwrap();
        eprintln!("seed {seed}: purity {p:.3}");
        total += p;
    }
    assert!(total / 3.0 >= 0.9, "mean purity {}", total / 3.0);
}
