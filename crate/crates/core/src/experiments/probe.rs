use serde::Serialize;

use crate::error::{Error, Result};
use crate::lens::{entropy, layer_distribution, top_k};
use crate::trace_format::{ActivationTrace, ModelPack};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeToken {
    pub token_id: u32,
    pub token: String,
    pub prob: f64,
}

/// What one layer "would answer" at the final prompt position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub layer: usize,
    /// Descending by probability.
    pub top_tokens: Vec<ProbeToken>,
    pub entropy_bits: f64,
}

/// Top-k tokens and full-distribution entropy at every layer `0..=L`, read at
/// the last prompt position.
pub fn culture_probe(trace: &ActivationTrace, pack: &ModelPack, k: usize) -> Result<Vec<ProbeRow>> {
    let position = trace
        .final_prompt_position()
        .ok_or_else(|| Error::InvalidPositions {
            reason: format!("trace {} has an empty prompt", trace.example_id),
        })?;
    (0..=pack.num_layers)
        .map(|layer| {
            let dist = layer_distribution(trace, pack, layer, position)?;
            let top_tokens = top_k(&dist, k)?
                .into_iter()
                .map(|(token_id, prob)| ProbeToken {
                    token_id,
                    token: pack.token_str(token_id),
                    prob,
                })
                .collect();
            Ok(ProbeRow {
                layer,
                top_tokens,
                entropy_bits: entropy(&dist),
            })
        })
        .collect()
}
