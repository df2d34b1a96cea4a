//! Small masked language models trained under staged, tag-conditional
//! masking curricula over age-ordered child-directed speech, plus
//! minimal-pair evaluation.
//!
//! Pipeline: [`corpus`] builds an age-ordered text corpus, [`tokenizer`]
//! learns a BPE vocabulary, [`tagging`] aligns word-level tags with
//! subwords, [`curriculum`] decides what to mask at every step, [`model`]
//! holds the encoder with hand-written gradients, [`trainer`] runs the loop
//! and [`eval`] scores minimal pairs.

pub mod cli;
pub mod corpus;
pub mod curriculum;
pub mod error;
pub mod eval;
pub mod model;
pub mod tagging;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
