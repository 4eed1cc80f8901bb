use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tensor_io::{check_finite, read_json, read_tensor, write_json, write_tensor, Precision};
use crate::error::{Error, Result};

pub const PACK_FORMAT_VERSION: u32 = 1;

/// Final normalization applied by the model before unembedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Rms,
    LayerNorm,
    None,
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rms" => Ok(NormKind::Rms),
            "layernorm" => Ok(NormKind::LayerNorm),
            "none" => Ok(NormKind::None),
            other => Err(Error::UnknownNormKind(other.to_string())),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::Rms => "rms",
            NormKind::LayerNorm => "layernorm",
            NormKind::None => "none",
        })
    }
}

/// Contents of `pack/meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackMeta {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub model_id: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub norm_kind: String,
    pub norm_epsilon: f64,
    /// Free-form description of what the dumper extracted as the lens matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lens_note: Option<String>,
}

fn default_version() -> u32 {
    PACK_FORMAT_VERSION
}

impl PackMeta {
    /// Checks the scalar invariants and resolves the norm kind.
    pub fn validate(&self, path: &Path) -> Result<NormKind> {
        let bad = |reason: &str| Error::InvalidMeta {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if self.num_layers == 0 {
            return Err(bad("num_layers must be positive"));
        }
        if self.hidden_dim == 0 {
            return Err(bad("hidden_dim must be positive"));
        }
        if self.vocab_size == 0 {
            return Err(bad("vocab_size must be positive"));
        }
        if self.vocab_size > u32::MAX as usize {
            return Err(bad("vocab_size exceeds the 32-bit token id range"));
        }
        if !(self.norm_epsilon.is_finite() && self.norm_epsilon > 0.0) {
            return Err(bad("norm_epsilon must be a small positive number"));
        }
        self.norm_kind.parse()
    }
}

/// Everything the lens needs from a model: the unembedding matrix, the final
/// normalization parameters and, optionally, token strings for display.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPack {
    pub model_id: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub norm_kind: NormKind,
    pub norm_epsilon: f64,
    pub norm_weight: Vec<f32>,
    pub norm_bias: Option<Vec<f32>>,
    /// Row-major `vocab_size × hidden_dim`.
    pub unembed: Vec<f32>,
    pub vocab: Option<Vec<String>>,
    pub lens_note: Option<String>,
}

impl ModelPack {
    pub fn validate(&self) -> Result<()> {
        let (v, d) = (self.vocab_size, self.hidden_dim);
        if self.num_layers == 0 || d == 0 || v == 0 {
            return Err(Error::InvalidConfig(
                "model pack dimensions must be positive".into(),
            ));
        }
        if !(self.norm_epsilon.is_finite() && self.norm_epsilon > 0.0) {
            return Err(Error::InvalidConfig("norm_epsilon must be positive".into()));
        }
        if self.unembed.len() != v * d {
            return Err(Error::ShapeMismatch {
                what: "unembed".into(),
                expected: v * d,
                found: self.unembed.len(),
            });
        }
        if self.norm_weight.len() != d {
            return Err(Error::ShapeMismatch {
                what: "norm_weight".into(),
                expected: d,
                found: self.norm_weight.len(),
            });
        }
        match (&self.norm_bias, self.norm_kind) {
            (Some(bias), NormKind::LayerNorm) if bias.len() != d => {
                return Err(Error::ShapeMismatch {
                    what: "norm_bias".into(),
                    expected: d,
                    found: bias.len(),
                })
            }
            (Some(_), kind) if kind != NormKind::LayerNorm => {
                return Err(Error::InvalidConfig(format!(
                    "norm_bias is only valid for layernorm, pack uses {kind}"
                )))
            }
            _ => {}
        }
        if let Some(vocab) = &self.vocab {
            if vocab.len() != v {
                return Err(Error::ShapeMismatch {
                    what: "vocab".into(),
                    expected: v,
                    found: vocab.len(),
                });
            }
        }
        check_finite(&self.unembed, "unembed")?;
        check_finite(&self.norm_weight, "norm_weight")?;
        if let Some(bias) = &self.norm_bias {
            check_finite(bias, "norm_bias")?;
        }
        Ok(())
    }

    /// Row `token` of the unembedding matrix.
    pub fn unembed_row(&self, token: usize) -> &[f32] {
        &self.unembed[token * self.hidden_dim..(token + 1) * self.hidden_dim]
    }

    /// Display string for a token id; `<id>` when the pack ships no vocabulary.
    pub fn token_str(&self, token: u32) -> String {
        self.vocab
            .as_ref()
            .and_then(|v| v.get(token as usize).cloned())
            .unwrap_or_else(|| format!("<{token}>"))
    }

    pub fn meta(&self) -> PackMeta {
        PackMeta {
            format_version: PACK_FORMAT_VERSION,
            model_id: self.model_id.clone(),
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            vocab_size: self.vocab_size,
            norm_kind: self.norm_kind.to_string(),
            norm_epsilon: self.norm_epsilon,
            lens_note: self.lens_note.clone(),
        }
    }
}

/// Loads and validates a pack directory (`meta.json`, `unembed.f32`,
/// `norm_weight.f32`, plus `norm_bias.f32` for layernorm and optional
/// `vocab.json`).
pub fn read_model_pack(dir: impl AsRef<Path>) -> Result<ModelPack> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: PackMeta = read_json(&meta_path)?;
    let norm_kind = meta.validate(&meta_path)?;
    let (v, d) = (meta.vocab_size, meta.hidden_dim);

    let unembed = read_tensor(&dir.join("unembed.f32"), Precision::F32, v * d, "unembed")?;
    let norm_weight = read_tensor(
        &dir.join("norm_weight.f32"),
        Precision::F32,
        d,
        "norm_weight",
    )?;
    let norm_bias = match norm_kind {
        NormKind::LayerNorm => Some(read_tensor(
            &dir.join("norm_bias.f32"),
            Precision::F32,
            d,
            "norm_bias",
        )?),
        _ => None,
    };
    let vocab_path = dir.join("vocab.json");
    let vocab: Option<Vec<String>> = if vocab_path.exists() {
        Some(read_json(&vocab_path)?)
    } else {
        None
    };

    let pack = ModelPack {
        model_id: meta.model_id,
        num_layers: meta.num_layers,
        hidden_dim: d,
        vocab_size: v,
        norm_kind,
        norm_epsilon: meta.norm_epsilon,
        norm_weight,
        norm_bias,
        unembed,
        vocab,
        lens_note: meta.lens_note,
    };
    pack.validate()?;
    Ok(pack)
}

pub fn write_model_pack(dir: impl AsRef<Path>, pack: &ModelPack) -> Result<()> {
    pack.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("meta.json"), &pack.meta())?;
    write_tensor(&dir.join("unembed.f32"), Precision::F32, &pack.unembed)?;
    write_tensor(
        &dir.join("norm_weight.f32"),
        Precision::F32,
        &pack.norm_weight,
    )?;
    if let Some(bias) = &pack.norm_bias {
        write_tensor(&dir.join("norm_bias.f32"), Precision::F32, bias)?;
    }
    if let Some(vocab) = &pack.vocab {
        write_json(&dir.join("vocab.json"), vocab)?;
    }
    Ok(())
}
