use std::ops::Range;

use super::dp::{align_units, AlignParams, Pattern, Unit};
use super::model1::TTable;
use crate::corpus::synthetic::DocumentPair;
use crate::corpus::{Origin, RawPair};

/// Two-level alignment: paragraphs first, then sentences inside each
/// aligned paragraph block. Only 1-1 sentence blocks are returned, each with
/// its pairing score and its sentence indices within the document.
pub fn align_document_pair(
    doc: &DocumentPair,
    ttable: &TTable,
    params: &AlignParams,
) -> Vec<RawPair> {
    let src_pars: Vec<Unit> = doc
        .source
        .iter()
        .map(|p| Unit::new(&p.join(" "), params, ttable))
        .collect();
    let tgt_pars: Vec<Unit> = doc
        .target
        .iter()
        .map(|p| Unit::target(&p.join(" "), params, ttable))
        .collect();
    let src_offsets = offsets(&doc.source);
    let tgt_offsets = offsets(&doc.target);

    // Consecutive paragraph blocks that are not 1-1 are merged into one
    // region, so sentences lost or moved across paragraph boundaries are
    // still aligned sentence by sentence.
    let mut regions: Vec<(Range<usize>, Range<usize>)> = Vec::new();
    let mut open = false;
    for block in align_units(&src_pars, &tgt_pars, ttable, params) {
        let one_one = block.pattern() == Pattern::OneOne;
        match regions.last_mut() {
            Some((s, t)) if open && !one_one => {
                s.end = block.source.end;
                t.end = block.target.end;
            }
            _ => regions.push((block.source.clone(), block.target.clone())),
        }
        open = !one_one;
    }

    let mut out = Vec::new();
    for (src_range, tgt_range) in regions {
        if src_range.is_empty() || tgt_range.is_empty() {
            continue;
        }
        let block = crate::align::AlignedBlock {
            source: src_range,
            target: tgt_range,
            score: 0.0,
        };
        let src_sents: Vec<&String> = doc.source[block.source.clone()].iter().flatten().collect();
        let tgt_sents: Vec<&String> = doc.target[block.target.clone()].iter().flatten().collect();
        let s_base = src_offsets[block.source.start];
        let t_base = tgt_offsets[block.target.start];
        let s_units: Vec<Unit> = src_sents
            .iter()
            .map(|s| Unit::new(s, params, ttable))
            .collect();
        let t_units: Vec<Unit> = tgt_sents
            .iter()
            .map(|t| Unit::target(t, params, ttable))
            .collect();
        for sb in align_units(&s_units, &t_units, ttable, params) {
            if sb.pattern() != Pattern::OneOne {
                continue;
            }
            let (i, j) = (sb.source.start, sb.target.start);
            out.push(RawPair {
                source: src_sents[i].clone(),
                target: tgt_sents[j].clone(),
                domain: None,
                score: Some(sb.score),
                origin: Some(Origin {
                    doc: doc.id.clone(),
                    src_index: s_base + i,
                    tgt_index: t_base + j,
                }),
            });
        }
    }
    out
}

fn offsets(pars: &[Vec<String>]) -> Vec<usize> {
    let mut acc = 0;
    pars.iter()
        .map(|p| {
            let o = acc;
            acc += p.len();
            o
        })
        .collect()
}
