//! Logit-lens toolkit for studying which language a transformer "thinks in"
//! across its layers.
//!
//! The crate reads activation traces dumped from a model (see
//! [`trace_format`]), decodes every intermediate layer through the model's
//! own final norm and unembedding ([`lens`]), and aggregates answer
//! probabilities per language over a lexicon of translation, repetition and
//! cloze prompts ([`lexicon`], [`experiments`]). [`steering`] measures the
//! average residual shift between two layers.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod lens;
pub mod lexicon;
pub mod manifest;
pub mod plot;
pub mod steering;
pub mod trace_format;

pub use error::{Error, Result};
