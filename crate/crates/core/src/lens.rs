//! Logit lens: final normalization, unembedding and softmax applied to an
//! intermediate hidden state, plus the quantities derived from the resulting
//! next-token distribution.
//!
//! Hidden states are stored as `f32`; all arithmetic here runs in `f64`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::trace_format::{ActivationTrace, AnswerSpan, ModelPack, NormKind};

/// Next-token distribution read off one layer at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDistribution {
    pub layer: usize,
    pub position: usize,
    pub probs: Vec<f64>,
}

impl LayerDistribution {
    /// Entries in `[0, 1]` summing to 1 within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.probs.iter().all(|p| (0.0..=1.0).contains(p))
            && (self.probs.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    pub fn argmax(&self) -> u32 {
        argmax(&self.probs)
    }
}

fn argmax(values: &[f64]) -> u32 {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best as u32
}

/// `h / sqrt(mean(h²) + eps) ⊙ weight`
pub fn rms_norm(h: &[f64], weight: &[f32], eps: f64) -> Vec<f64> {
    let mean_sq = h.iter().map(|x| x * x).sum::<f64>() / h.len() as f64;
    let inv = 1.0 / (mean_sq + eps).sqrt();
    h.iter()
        .zip(weight)
        .map(|(x, w)| x * inv * f64::from(*w))
        .collect()
}

/// `(h - mean) / sqrt(var + eps) ⊙ weight + bias`, with population variance.
pub fn layer_norm(h: &[f64], weight: &[f32], bias: Option<&[f32]>, eps: f64) -> Vec<f64> {
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    h.iter()
        .enumerate()
        .map(|(i, x)| {
            let b = bias.map_or(0.0, |b| f64::from(b[i]));
            (x - mean) * inv * f64::from(weight[i]) + b
        })
        .collect()
}

/// Applies the model's own final normalization to a residual-stream vector.
pub fn final_normalize(h: &[f64], pack: &ModelPack) -> Result<Vec<f64>> {
    if h.len() != pack.hidden_dim {
        return Err(Error::DimensionMismatch {
            what: "hidden vector length".into(),
            expected: pack.hidden_dim,
            found: h.len(),
        });
    }
    Ok(match pack.norm_kind {
        NormKind::Rms => rms_norm(h, &pack.norm_weight, pack.norm_epsilon),
        NormKind::LayerNorm => layer_norm(
            h,
            &pack.norm_weight,
            pack.norm_bias.as_deref(),
            pack.norm_epsilon,
        ),
        NormKind::None => h.to_vec(),
    })
}

/// `unembed · x` for an already-normalized vector.
pub fn unembed_logits(pack: &ModelPack, normed: &[f64]) -> Vec<f64> {
    pack.unembed
        .chunks_exact(pack.hidden_dim)
        .map(|row| row.iter().zip(normed).map(|(w, x)| f64::from(*w) * x).sum())
        .collect()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log Σ exp(logits)`, max-stabilized.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Lens logits for a raw hidden state: normalize, then unembed.
pub fn lens_logits(pack: &ModelPack, h: &[f64]) -> Result<Vec<f64>> {
    let normed = final_normalize(h, pack)?;
    Ok(unembed_logits(pack, &normed))
}

/// Lens distribution for an arbitrary residual-stream vector, e.g. a stored
/// state with a shift added.
pub fn lens_distribution(
    pack: &ModelPack,
    h: &[f64],
    layer: usize,
    position: usize,
) -> Result<LayerDistribution> {
    Ok(LayerDistribution {
        layer,
        position,
        probs: softmax(&lens_logits(pack, h)?),
    })
}

pub(crate) fn widen(h: &[f32]) -> Vec<f64> {
    h.iter().map(|x| f64::from(*x)).collect()
}

/// Next-token distribution that the stored state at (`layer`, `position`)
/// would produce if it were the final layer.
pub fn layer_distribution(
    trace: &ActivationTrace,
    pack: &ModelPack,
    layer: usize,
    position: usize,
) -> Result<LayerDistribution> {
    let h = widen(trace.hidden_at(layer, position)?);
    lens_distribution(pack, &h, layer, position)
}

/// Natural-log probability of a teacher-forced span at `layer`: the sum over
/// its tokens of the log-probability each predictor position assigns.
pub fn sequence_log_probability(
    trace: &ActivationTrace,
    pack: &ModelPack,
    layer: usize,
    span: &AnswerSpan,
) -> Result<f64> {
    if span.token_ids.is_empty() {
        return Err(Error::EmptySpan);
    }
    if span.token_ids.len() != span.predictor_positions.len() {
        return Err(Error::SpanLengthMismatch {
            lang: String::new(),
            surface: span.surface.clone(),
            tokens: span.token_ids.len(),
            positions: span.predictor_positions.len(),
        });
    }
    let mut total = 0.0;
    for (&token, &position) in span.token_ids.iter().zip(&span.predictor_positions) {
        if token as usize >= pack.vocab_size {
            return Err(Error::TokenOutOfRange {
                token,
                vocab_size: pack.vocab_size,
            });
        }
        let logits = lens_logits(pack, &widen(trace.hidden_at(layer, position)?))?;
        total += logits[token as usize] - log_sum_exp(&logits);
    }
    Ok(total)
}

/// Probability of generating the whole span at `layer`: the product of the
/// per-token probabilities, accumulated in log space.
pub fn sequence_probability(
    trace: &ActivationTrace,
    pack: &ModelPack,
    layer: usize,
    span: &AnswerSpan,
) -> Result<f64> {
    sequence_log_probability(trace, pack, layer, span).map(f64::exp)
}

/// Log-probabilities of many spans at every layer `0..=L`, computing each
/// (layer, position) normalizer once. Result is indexed `[layer][span]`.
pub fn span_log_probabilities(
    trace: &ActivationTrace,
    pack: &ModelPack,
    spans: &[&AnswerSpan],
) -> Result<Vec<Vec<f64>>> {
    for span in spans {
        span.validate("", pack.vocab_size, &trace.positions)?;
    }
    let mut needed: Vec<usize> = spans
        .iter()
        .flat_map(|s| s.predictor_positions.iter().copied())
        .collect();
    needed.sort_unstable();
    needed.dedup();

    let mut out = Vec::with_capacity(trace.num_layers + 1);
    for layer in 0..=trace.num_layers {
        // (log-normalizer, logits) per needed position
        let per_position = needed
            .iter()
            .map(|&p| {
                let logits = lens_logits(pack, &widen(trace.hidden_at(layer, p)?))?;
                Ok((log_sum_exp(&logits), logits))
            })
            .collect::<Result<Vec<_>>>()?;
        let scores = spans
            .iter()
            .map(|span| {
                span.token_ids
                    .iter()
                    .zip(&span.predictor_positions)
                    .map(|(&t, p)| {
                        let (lse, logits) = &per_position[needed.binary_search(p).unwrap()];
                        logits[t as usize] - lse
                    })
                    .sum()
            })
            .collect();
        out.push(scores);
    }
    Ok(out)
}

/// The `k` most probable tokens, descending, ties broken by ascending id.
pub fn top_k(dist: &LayerDistribution, k: usize) -> Result<Vec<(u32, f64)>> {
    if k == 0 || k > dist.probs.len() {
        return Err(Error::TopKOutOfRange {
            k,
            vocab_size: dist.probs.len(),
        });
    }
    let mut ids: Vec<u32> = (0..dist.probs.len() as u32).collect();
    let order = |a: &u32, b: &u32| -> Ordering {
        dist.probs[*b as usize]
            .total_cmp(&dist.probs[*a as usize])
            .then(a.cmp(b))
    };
    if k < ids.len() {
        ids.select_nth_unstable_by(k - 1, order);
        ids.truncate(k);
    }
    ids.sort_unstable_by(order);
    Ok(ids
        .into_iter()
        .map(|i| (i, dist.probs[i as usize]))
        .collect())
}

/// Shannon entropy in bits, with `0 · log 0 = 0`.
pub fn entropy(dist: &LayerDistribution) -> f64 {
    -dist
        .probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>()
}
