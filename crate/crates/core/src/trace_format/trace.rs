use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pack::ModelPack;
use super::tensor_io::{check_finite, read_json, read_tensor, write_json, write_tensor, Precision};
use crate::error::{Error, Result};

pub const TRACE_FORMAT_VERSION: u32 = 1;

/// A teacher-forced answer: its token ids and, for each token, the sequence
/// position whose next-token distribution scores it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub surface: String,
    pub token_ids: Vec<u32>,
    pub predictor_positions: Vec<usize>,
}

impl AnswerSpan {
    /// Checks the span's own invariants and that every predictor position is
    /// stored.
    pub fn validate(&self, lang: &str, vocab_size: usize, stored: &[usize]) -> Result<()> {
        if self.token_ids.is_empty() {
            return Err(Error::EmptySpan);
        }
        if self.token_ids.len() != self.predictor_positions.len() {
            return Err(Error::SpanLengthMismatch {
                lang: lang.to_string(),
                surface: self.surface.clone(),
                tokens: self.token_ids.len(),
                positions: self.predictor_positions.len(),
            });
        }
        if let Some(&token) = self.token_ids.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange { token, vocab_size });
        }
        if self
            .predictor_positions
            .windows(2)
            .any(|w| w[1] != w[0] + 1)
        {
            return Err(Error::SpanNotConsecutive {
                lang: lang.to_string(),
                surface: self.surface.clone(),
                positions: self.predictor_positions.clone(),
            });
        }
        if let Some(&position) = self
            .predictor_positions
            .iter()
            .find(|p| stored.binary_search(p).is_err())
        {
            return Err(Error::SpanPositionMissing {
                lang: lang.to_string(),
                surface: self.surface.clone(),
                position,
            });
        }
        Ok(())
    }
}

/// Contents of `traces/<id>/meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub example_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub prompt_token_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_length: Option<usize>,
    pub positions: Vec<usize>,
    pub hidden_dtype: Precision,
    pub answer_spans: BTreeMap<String, Vec<AnswerSpan>>,
}

fn default_version() -> u32 {
    TRACE_FORMAT_VERSION
}

/// Hidden states of one forward pass at the positions needed for scoring.
///
/// `hidden` is `(num_layers + 1) × positions.len() × hidden_dim`, row-major.
/// Layer 0 is the embedding output and layer `l` the output of block `l`,
/// before the final normalization.
///
/// A language mapped to an empty span list marks an answer that produced no
/// scorable tokens; such examples are excluded from that language's curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub example_id: String,
    pub manifest_hash: Option<String>,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub prompt_token_ids: Vec<u32>,
    pub sequence_length: Option<usize>,
    pub positions: Vec<usize>,
    pub hidden: Vec<f32>,
    pub answer_spans: BTreeMap<String, Vec<AnswerSpan>>,
}

impl ActivationTrace {
    /// Slot of an absolute position within `positions`.
    pub fn slot(&self, position: usize) -> Option<usize> {
        self.positions.binary_search(&position).ok()
    }

    /// Hidden state at `layer` for a stored absolute `position`.
    pub fn hidden_at(&self, layer: usize, position: usize) -> Result<&[f32]> {
        if layer > self.num_layers {
            return Err(Error::LayerOutOfRange {
                layer,
                num_layers: self.num_layers,
            });
        }
        let slot = self
            .slot(position)
            .ok_or_else(|| Error::PositionNotStored {
                example_id: self.example_id.clone(),
                position,
            })?;
        let d = self.hidden_dim;
        let start = (layer * self.positions.len() + slot) * d;
        Ok(&self.hidden[start..start + d])
    }

    /// The last prompt position, whose distribution predicts the first answer token.
    pub fn final_prompt_position(&self) -> Option<usize> {
        self.prompt_token_ids.len().checked_sub(1)
    }

    /// Length of the teacher-forced sequence, either declared or derived as
    /// prompt length plus the longest answer span.
    pub fn effective_sequence_length(&self) -> usize {
        self.sequence_length.unwrap_or_else(|| {
            let longest = self
                .answer_spans
                .values()
                .flatten()
                .map(|s| s.token_ids.len())
                .max()
                .unwrap_or(0);
            self.prompt_token_ids.len() + longest
        })
    }

    /// Validates every trace invariant against the pack's dimensions.
    pub fn validate(&self, pack: &ModelPack) -> Result<()> {
        if self.num_layers != pack.num_layers {
            return Err(Error::DimensionMismatch {
                what: "num_layers".into(),
                expected: pack.num_layers,
                found: self.num_layers,
            });
        }
        if self.hidden_dim != pack.hidden_dim {
            return Err(Error::DimensionMismatch {
                what: "hidden_dim".into(),
                expected: pack.hidden_dim,
                found: self.hidden_dim,
            });
        }
        let expected = (self.num_layers + 1) * self.positions.len() * self.hidden_dim;
        if self.hidden.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "hidden".into(),
                expected,
                found: self.hidden.len(),
            });
        }
        if self.positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPositions {
                reason: format!(
                    "positions must be strictly increasing and unique, got {:?}",
                    self.positions
                ),
            });
        }
        let seq_len = self.effective_sequence_length();
        if let Some(&p) = self.positions.iter().find(|&&p| p >= seq_len) {
            return Err(Error::InvalidPositions {
                reason: format!("position {p} outside sequence of length {seq_len}"),
            });
        }
        if let Some(&token) = self
            .prompt_token_ids
            .iter()
            .find(|&&t| t as usize >= pack.vocab_size)
        {
            return Err(Error::TokenOutOfRange {
                token,
                vocab_size: pack.vocab_size,
            });
        }
        for (lang, spans) in &self.answer_spans {
            for span in spans {
                span.validate(lang, pack.vocab_size, &self.positions)?;
            }
        }
        check_finite(&self.hidden, "hidden")
    }

    pub fn meta(&self, precision: Precision) -> TraceMeta {
        TraceMeta {
            format_version: TRACE_FORMAT_VERSION,
            example_id: self.example_id.clone(),
            manifest_hash: self.manifest_hash.clone(),
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            prompt_token_ids: self.prompt_token_ids.clone(),
            sequence_length: self.sequence_length,
            positions: self.positions.clone(),
            hidden_dtype: precision,
            answer_spans: self.answer_spans.clone(),
        }
    }
}

/// Reads one trace directory and validates it against `pack`.
pub fn read_trace(dir: impl AsRef<Path>, pack: &ModelPack) -> Result<ActivationTrace> {
    let dir = dir.as_ref();
    let meta: TraceMeta = read_json(&dir.join("meta.json"))?;
    if meta.num_layers != pack.num_layers {
        return Err(Error::DimensionMismatch {
            what: "num_layers".into(),
            expected: pack.num_layers,
            found: meta.num_layers,
        });
    }
    if meta.hidden_dim != pack.hidden_dim {
        return Err(Error::DimensionMismatch {
            what: "hidden_dim".into(),
            expected: pack.hidden_dim,
            found: meta.hidden_dim,
        });
    }
    let precision = meta.hidden_dtype;
    let expected = (meta.num_layers + 1) * meta.positions.len() * meta.hidden_dim;
    let hidden_path = dir.join(format!("hidden.{}", precision.extension()));
    let hidden = read_tensor(&hidden_path, precision, expected, "hidden")?;
    let trace = ActivationTrace {
        example_id: meta.example_id,
        manifest_hash: meta.manifest_hash,
        num_layers: meta.num_layers,
        hidden_dim: meta.hidden_dim,
        prompt_token_ids: meta.prompt_token_ids,
        sequence_length: meta.sequence_length,
        positions: meta.positions,
        hidden,
        answer_spans: meta.answer_spans,
    };
    trace.validate(pack)?;
    Ok(trace)
}

pub fn write_trace(
    dir: impl AsRef<Path>,
    trace: &ActivationTrace,
    precision: Precision,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("meta.json"), &trace.meta(precision))?;
    write_tensor(
        &dir.join(format!("hidden.{}", precision.extension())),
        precision,
        &trace.hidden,
    )
}

/// Trace directories under `root`, sorted by name.
pub fn trace_dirs(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Reads every trace under `root` in directory-name order.
pub fn read_corpus(root: impl AsRef<Path>, pack: &ModelPack) -> Result<Vec<ActivationTrace>> {
    trace_dirs(root)?
        .into_iter()
        .map(|dir| read_trace(dir, pack))
        .collect()
}
