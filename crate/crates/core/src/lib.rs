//! Training toolkit for translation mixtures on multi-domain parallel corpora.
//!
//! The pipeline runs from raw documents to evaluated mixtures:
//! [`align`] turns document pairs into sentence pairs, [`topic`] and
//! [`mixture`] split the data (by bilingual topics or by the balanced
//! hard-EM E-step in [`assign`]), [`mixture`] trains and decodes the
//! component ensemble, and [`eval`] / [`experiment`] score and orchestrate
//! runs.

pub mod align;
pub mod assign;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod mixture;
pub mod rng;
pub mod topic;

pub use error::{Error, Result};
