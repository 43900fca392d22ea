//! Sentence alignment of document pairs and bitext filtering.

mod document;
mod dp;
mod filter;
mod model1;

pub use document::align_document_pair;
pub use dp::{align_blocks, score_block, AlignParams, AlignedBlock, Pattern};
pub use filter::{filter_pairs, script_fraction, Script, MIN_SCRIPT_FRACTION};
pub use model1::{train_model1, Model1Fit, TTable, NULL_TOKEN};

use crate::corpus::{tokenize_pairs, RawPair};
use crate::error::Result;

/// Train a t-table on aligned seed pairs and estimate the length model and
/// threshold from the same pairs.
pub fn fit_aligner(
    seed: &[RawPair],
    base: AlignParams,
    iterations: usize,
) -> Result<(TTable, AlignParams)> {
    let corpus = tokenize_pairs(seed, &base.source_tokenizer, &base.target_tokenizer);
    let table = train_model1(&corpus, iterations)?.table;
    let params = AlignParams::estimate(seed, &table, base)?;
    Ok((table, params))
}
