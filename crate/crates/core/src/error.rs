//! Error type shared by every analysis stage.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // --- files and formats ---
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid metadata in {path}: {reason}")]
    InvalidMeta { path: PathBuf, reason: String },

    #[error("shape mismatch for {what}: expected {expected} values, found {found}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what} at flat index {index}")]
    NonFinite { what: String, index: usize },

    #[error("unknown norm kind {0:?} (expected rms, layernorm or none)")]
    UnknownNormKind(String),

    #[error("{what} mismatch: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    // --- trace consistency ---
    #[error("invalid stored positions: {reason}")]
    InvalidPositions { reason: String },

    #[error("position {position} is not stored in trace {example_id}")]
    PositionNotStored { example_id: String, position: usize },

    #[error("layer {layer} out of range (model has layers 0..={num_layers})")]
    LayerOutOfRange { layer: usize, num_layers: usize },

    #[error(
        "answer span {surface:?} ({lang}) has non-consecutive predictor positions {positions:?}"
    )]
    SpanNotConsecutive {
        lang: String,
        surface: String,
        positions: Vec<usize>,
    },

    #[error("answer span {surface:?} ({lang}) needs position {position}, which is not stored")]
    SpanPositionMissing {
        lang: String,
        surface: String,
        position: usize,
    },

    #[error(
        "answer span {surface:?} ({lang}) has {tokens} tokens but {positions} predictor positions"
    )]
    SpanLengthMismatch {
        lang: String,
        surface: String,
        tokens: usize,
        positions: usize,
    },

    #[error("token id {token} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("answer span has no tokens")]
    EmptySpan,

    #[error("top-k with k={k} out of range for vocabulary of {vocab_size}")]
    TopKOutOfRange { k: usize, vocab_size: usize },

    // --- lexicon and prompts ---
    #[error("{path}: row {row}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("concept {concept_id:?} (row {row}): ja and zh forms share characters {shared:?}")]
    ScriptOverlap {
        concept_id: String,
        row: usize,
        shared: String,
    },

    #[error("duplicate concept id {concept_id:?} at row {row}")]
    DuplicateConcept { concept_id: String, row: usize },

    #[error("concept {concept_id:?} (row {row}) has no {lang} form")]
    MissingForm {
        concept_id: String,
        row: usize,
        lang: String,
    },

    #[error("concept {concept_id:?} (row {row}): {lang} cloze description must contain the blank marker exactly once (found {count})")]
    BlankMarker {
        concept_id: String,
        row: usize,
        lang: String,
        count: usize,
    },

    #[error("invalid prompt request: {0}")]
    InvalidPrompt(String),

    #[error("lexicon has {available} usable demonstration entries, {requested} requested")]
    NotEnoughShots { requested: usize, available: usize },

    #[error("lexicon is empty")]
    EmptyLexicon,

    // --- experiments ---
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("missing answer spans: {}", .missing.iter().map(|(id, lang)| format!("{id}:{lang}")).collect::<Vec<_>>().join(", "))]
    MissingSpans { missing: Vec<(String, String)> },

    #[error("no scorable examples for language {language}")]
    NoScorableExamples { language: String },

    #[error("manifest hash mismatch: config produces {expected}, traces carry {found} ({} traces)", .example_ids.len())]
    ManifestDrift {
        expected: String,
        found: String,
        example_ids: Vec<String>,
    },

    #[error("unknown prompt id {0:?}")]
    UnknownPromptId(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the variant, used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile { .. } => "missing_file",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::InvalidMeta { .. } => "invalid_meta",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::UnknownNormKind(_) => "unknown_norm_kind",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidPositions { .. } => "invalid_positions",
            Error::PositionNotStored { .. } => "position_not_stored",
            Error::LayerOutOfRange { .. } => "layer_out_of_range",
            Error::SpanNotConsecutive { .. } => "span_not_consecutive",
            Error::SpanPositionMissing { .. } => "span_position_missing",
            Error::SpanLengthMismatch { .. } => "span_length_mismatch",
            Error::TokenOutOfRange { .. } => "token_out_of_range",
            Error::EmptySpan => "empty_span",
            Error::TopKOutOfRange { .. } => "top_k_out_of_range",
            Error::MalformedRow { .. } => "malformed_row",
            Error::ScriptOverlap { .. } => "script_overlap",
            Error::DuplicateConcept { .. } => "duplicate_concept",
            Error::MissingForm { .. } => "missing_form",
            Error::BlankMarker { .. } => "blank_marker",
            Error::InvalidPrompt(_) => "invalid_prompt",
            Error::NotEnoughShots { .. } => "not_enough_shots",
            Error::EmptyLexicon => "empty_lexicon",
            Error::EmptyCorpus => "empty_corpus",
            Error::MissingSpans { .. } => "missing_spans",
            Error::NoScorableExamples { .. } => "no_scorable_examples",
            Error::ManifestDrift { .. } => "manifest_drift",
            Error::UnknownPromptId(_) => "unknown_prompt_id",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Csv { .. } => "csv",
        }
    }

    /// Example ids implicated by the error, if any.
    pub fn example_ids(&self) -> Vec<String> {
        match self {
            Error::MissingSpans { missing } => {
                let mut ids: Vec<String> = missing.iter().map(|(id, _)| id.clone()).collect();
                ids.dedup();
                ids
            }
            Error::ManifestDrift { example_ids, .. } => example_ids.clone(),
            Error::PositionNotStored { example_id, .. } => vec![example_id.clone()],
            Error::UnknownPromptId(id) => vec![id.clone()],
            _ => Vec::new(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }
}
