use std::collections::HashMap;

use mixnmt::corpus::synthetic::{generate_synthetic_corpus, SyntheticSpec};
use mixnmt::corpus::Corpus;
use mixnmt::topic::{assign_topics, fit_bilingual_topics, split_by_topic};

fn corpus(shared: f64, seed: u64) -> Corpus {
    let spec = SyntheticSpec {
        domains: 2,
        vocab_size: 120,
        shared_fraction: shared,
        branching: 6,
        pairs: 2000,
        ..Default::default()
    };
    generate_synthetic_corpus(&spec, seed).unwrap()
}

/// Fraction of items whose cluster's majority gold label matches their own.
fn purity(labels: &[usize], gold: &[usize]) -> f64 {
    let mut table: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&c, &g) in labels.iter().zip(gold) {
        *table.entry(c).or_default().entry(g).or_default() += 1;
    }
    let hits: usize = table
        .values()
        .map(|m| m.values().copied().max().unwrap())
        .sum();
    hits as f64 / labels.len() as f64
}

#[test]
fn disjoint_vocabularies_split_perfectly() {
    for seed in [1, 2, 3] {
        let c = corpus(0.0, seed);
        let fit = fit_bilingual_topics(&c, 2, 0.1, 20, seed).unwrap();
        let labels = assign_topics(&fit.model, &c);
        assert_eq!(
            purity(&labels, &c.gold_labels().unwrap()),
            1.0,
            "seed {seed}"
        );
        for w in fit.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        let parts = split_by_topic(&fit.model, &c);
        assert_eq!(parts.iter().map(Corpus::len).sum::<usize>(), c.len());
    }
}

#[test]
fn shared_vocabulary_split_is_mostly_pure() {
    for seed in [1, 2, 3] {
        let c = corpus(0.2, seed);
        let fit = fit_bilingual_topics(&c, 2, 0.1, 20, seed).unwrap();
        let p = purity(&assign_topics(&fit.model, &c), &c.gold_labels().unwrap());
        assert!(p >= 0.9, "seed {seed}: purity {p}");
        for w in fit.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }
}

#[test]
fn initialization_seed_does_not_change_purity() {
    let c = corpus(0.0, 4);
    let gold = c.gold_labels().unwrap();
    let ps: Vec<f64> = (0..4)
        .map(|s| {
            purity(
                &assign_topics(&fit_bilingual_topics(&c, 2, 0.1, 20, s).unwrap().model, &c),
                &gold,
            )
        })
        .collect();
    let (lo, hi) = ps
        .iter()
        .fold((1.0f64, 0.0f64), |(a, b), &p| (a.min(p), b.max(p)));
    assert!(hi - lo <= 0.02, "{ps:?}");
}
