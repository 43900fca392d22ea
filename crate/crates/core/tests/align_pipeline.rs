use std::collections::HashSet;

use mixnmt::align::{
    align_blocks, align_document_pair, filter_pairs, fit_aligner, score_block, AlignParams,
    Pattern, Script, TTable,
};
use mixnmt::corpus::synthetic::{NoiseRates, SyntheticSpec, SyntheticWorld};
use mixnmt::corpus::{Origin, RawPair};
use mixnmt::rng;
use rand::Rng;

fn spec(noise: NoiseRates) -> SyntheticSpec {
    SyntheticSpec {
        domains: 2,
        vocab_size: 80,
        branching: 4,
        min_len: 4,
        max_len: 14,
        pairs: 600,
        noise,
        ..Default::default()
    }
}

fn setup(noise: NoiseRates, seed: u64) -> (SyntheticWorld, TTable, AlignParams) {
    let world = SyntheticWorld::new(&spec(noise), seed).unwrap();
    let bitext = world.seed_bitext(2000, &mut rng::rng(seed, 77));
    let (table, params) = fit_aligner(&bitext, AlignParams::default(), 8).unwrap();
    (world, table, params)
}

/// Every monotone cover of n × m units by the allowed patterns, scored independently.
fn best_cover_score(src: &[String], tgt: &[String], t: &TTable, p: &AlignParams) -> f64 {
    fn go(i: usize, j: usize, src: &[String], tgt: &[String], t: &TTable, p: &AlignParams) -> f64 {
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
            best = best.max(s + go(i + di, j + dj, src, tgt, t, p));
        }
        best
    }
    go(0, 0, src, tgt, t, p)
}

#[test]
fn dp_matches_exhaustive_enumeration() {
    let (world, table, params) = setup(NoiseRates::default(), 1);
    let mut r = rng::rng(1, 5);
    let sentence_src = |r: &mut rng::Rng| world.source_text(&world.sample(0, r).source);
    let sentence_tgt = |r: &mut rng::Rng| world.target_text(&world.sample(0, r).target);
    for case in 0..60 {
        let n = r.gen_range(0..=6);
        let m = r.gen_range(0..=6);
        let src: Vec<String> = (0..n).map(|_| sentence_src(&mut r)).collect();
        let tgt: Vec<String> = (0..m).map(|_| sentence_tgt(&mut r)).collect();
        let blocks = align_blocks(&src, &tgt, &table, &params);
        let total: f64 = blocks.iter().map(|b| b.score).sum();
        let oracle = best_cover_score(&src, &tgt, &table, &params);
        if n + m == 0 {
            assert!(blocks.is_empty());
            continue;
        }
        assert!(
            (total - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
            "case {case}: {total} vs {oracle}"
        );
        // complete, monotone cover
        let (mut i, mut j) = (0, 0);
        for b in &blocks {
            assert_eq!(b.source.start, i);
            assert_eq!(b.target.start, j);
            assert!(!(b.source.is_empty() && b.target.is_empty()));
            i = b.source.end;
            j = b.target.end;
        }
        assert_eq!((i, j), (n, m));
    }
}

#[test]
fn merged_translation_is_a_two_to_one_block() {
    let (world, table, params) = setup(NoiseRates::default(), 2);
    let mut r = rng::rng(2, 9);
    let a = world.sample(0, &mut r);
    let b = world.sample(0, &mut r);
    let mut joined = a.target.clone();
    joined.extend(&b.target);
    let src = vec![world.source_text(&a.source), world.source_text(&b.source)];
    let tgt = vec![world.target_text(&joined)];
    let blocks = align_blocks(&src, &tgt, &table, &params);
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0].pattern(), Pattern::TwoOne);
}

fn origins(pairs: &[RawPair]) -> HashSet<Origin> {
    pairs.iter().map(|p| p.origin.clone().unwrap()).collect()
}

#[test]
fn noise_free_documents_recover_gold_exactly() {
    let (world, table, params) = setup(NoiseRates::default(), 3);
    let (docs, gold) = world.documents(600, &mut rng::rng(3, 11));
    let found: Vec<RawPair> = docs
        .iter()
        .flat_map(|d| align_document_pair(d, &table, &params))
        .collect();
    assert_eq!(origins(&found), gold.into_iter().collect());
}

#[test]
fn dropped_target_sentence_is_not_paired() {
    let (world, table, params) = setup(NoiseRates::default(), 4);
    let mut r = rng::rng(4, 1);
    let pairs: Vec<_> = (0..5).map(|_| world.sample(0, &mut r)).collect();
    let doc = mixnmt::corpus::synthetic::DocumentPair {
        id: "d".into(),
        source: vec![pairs
            .iter()
            .map(|p| format!("{}。", world.source_text(&p.source)))
            .collect()],
        target: vec![pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != 2)
            .map(|(_, p)| format!("{} .", world.target_text(&p.target)))
            .collect()],
    };
    let found = align_document_pair(&doc, &table, &params);
    let src_idx: Vec<usize> = found
        .iter()
        .map(|p| p.origin.as_ref().unwrap().src_index)
        .collect();
    assert_eq!(src_idx, vec![0, 1, 3, 4]);
}

#[test]
fn empty_documents_give_nothing() {
    let (_, table, params) = setup(NoiseRates::default(), 5);
    let doc = mixnmt::corpus::synthetic::DocumentPair {
        id: "e".into(),
        source: vec![],
        target: vec![],
    };
    assert!(align_document_pair(&doc, &table, &params).is_empty());
}

#[test]
fn noisy_documents_precision_and_recall() {
    let noise = NoiseRates {
        misalignment: 0.10,
        identical: 0.05,
        wrong_language: 0.05,
        merge_fraction: 0.0,
    };
    for seed in [6, 7] {
        let (world, table, params) = setup(noise, seed);
        let (docs, gold) = world.documents(1500, &mut rng::rng(seed, 13));
        let found: Vec<RawPair> = docs
            .iter()
            .flat_map(|d| align_document_pair(d, &table, &params))
            .collect();
        let kept = filter_pairs(&found, &params, Script::Cjk, Script::Latin);
        let gold: HashSet<Origin> = gold.into_iter().collect();
        let got = origins(&kept);
        let tp = got.intersection(&gold).count() as f64;
        let precision = tp / got.len() as f64;
        let recall = tp / gold.len() as f64;
        assert!(precision >= 0.95, "seed {seed}: precision {precision}");
        assert!(recall >= 0.90, "seed {seed}: recall {recall}");
    }
}
