//! Audit toolkit for gender bias in captioned image datasets and the
//! models trained on them.
//!
//! The pipeline: parse COCO-style annotations ([`coco`], [`mask`]), label
//! each image's depicted gender from its captions ([`lexicon`]), measure
//! per-category co-occurrence bias ([`bias`]), carve balanced or
//! anti-stereotypical splits ([`split`]), score generated captions and
//! attention maps ([`caption`], [`attention`]), and check training-side
//! numerics against frozen conformance vectors ([`kernel`]). The [`cli`]
//! module wires these into the `cocogb` binary.

pub mod attention;
pub mod bias;
pub mod caption;
pub mod cli;
pub mod coco;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod lexicon;
pub mod mask;
pub mod split;

pub use error::{Error, Result};
