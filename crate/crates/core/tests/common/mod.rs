//! Independent reference implementations shared by the integration tests.
//! Deliberately plain loops; nothing here calls into the library's math.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use latentlens::trace_format::{ActivationTrace, ModelPack, NormKind};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Lens probabilities for a raw hidden state, computed element by element.
pub fn naive_lens(pack: &ModelPack, h: &[f32]) -> Vec<f64> {
    let d = pack.hidden_dim;
    let mut x = vec![0.0f64; d];
    for i in 0..d {
        x[i] = h[i] as f64;
    }
    let mut normed = vec![0.0f64; d];
    match pack.norm_kind {
        NormKind::None => normed = x.clone(),
        NormKind::Rms => {
            let mut ss = 0.0;
            for i in 0..d {
                ss += x[i] * x[i];
            }
            let denom = (ss / d as f64 + pack.norm_epsilon).sqrt();
            for i in 0..d {
                normed[i] = x[i] / denom * pack.norm_weight[i] as f64;
            }
        }
        NormKind::LayerNorm => {
            let mut mean = 0.0;
            for i in 0..d {
                mean += x[i];
            }
            mean /= d as f64;
            let mut var = 0.0;
            for i in 0..d {
                var += (x[i] - mean) * (x[i] - mean);
            }
            var /= d as f64;
            let denom = (var + pack.norm_epsilon).sqrt();
            for i in 0..d {
                let b = pack.norm_bias.as_ref().map_or(0.0, |b| b[i] as f64);
                normed[i] = (x[i] - mean) / denom * pack.norm_weight[i] as f64 + b;
            }
        }
    }
    let v = pack.vocab_size;
    let mut logits = vec![0.0f64; v];
    for t in 0..v {
        let mut acc = 0.0;
        for i in 0..d {
            acc += pack.unembed[t * d + i] as f64 * normed[i];
        }
        logits[t] = acc;
    }
    let mut max = f64::NEG_INFINITY;
    for t in 0..v {
        if logits[t] > max {
            max = logits[t];
        }
    }
    let mut z = 0.0;
    let mut probs = vec![0.0f64; v];
    for t in 0..v {
        probs[t] = (logits[t] - max).exp();
        z += probs[t];
    }
    for t in 0..v {
        probs[t] /= z;
    }
    probs
}

pub fn stored_state(trace: &ActivationTrace, layer: usize, position: usize) -> &[f32] {
    let slot = trace.positions.iter().position(|p| *p == position).unwrap();
    let d = trace.hidden_dim;
    let start = (layer * trace.positions.len() + slot) * d;
    &trace.hidden[start..start + d]
}

/// Product of stepwise lens probabilities along a teacher-forced span.
pub fn naive_span_probability(
    pack: &ModelPack,
    trace: &ActivationTrace,
    layer: usize,
    tokens: &[u32],
    positions: &[usize],
) -> f64 {
    let mut p = 1.0;
    for (t, pos) in tokens.iter().zip(positions) {
        p *= naive_lens(pack, stored_state(trace, layer, *pos))[*t as usize];
    }
    p
}

/// Two-pass mean and 1.96·s/√n with Bessel's correction, in input order.
pub fn two_pass_mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut sum = 0.0;
    for x in xs {
        sum += x;
    }
    let mean = sum / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let mut ss = 0.0;
    for x in xs {
        ss += (x - mean) * (x - mean);
    }
    let sd = (ss / (n - 1.0)).sqrt();
    (mean, 1.96 * sd / n.sqrt())
}

/// Reference curves for max aggregation: per example, per language, the best
/// variant's span probability at each layer; then mean and CI over examples.
pub fn reference_curves(
    pack: &ModelPack,
    traces: &[ActivationTrace],
    languages: &[&str],
) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut per_example: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for trace in traces {
        for lang in languages {
            let Some(spans) = trace.answer_spans.get(*lang) else {
                continue;
            };
            for span in spans {
                for layer in 0..=pack.num_layers {
                    let p = naive_span_probability(
                        pack,
                        trace,
                        layer,
                        &span.token_ids,
                        &span.predictor_positions,
                    );
                    let slot = per_example
                        .entry(lang.to_string())
                        .or_default()
                        .entry(trace.example_id.clone())
                        .or_insert_with(|| vec![0.0; pack.num_layers + 1]);
                    if p > slot[layer] {
                        slot[layer] = p;
                    }
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for lang in languages {
        let examples = &per_example[*lang];
        let mut curve = Vec::new();
        for layer in 0..=pack.num_layers {
            let xs: Vec<f64> = examples.values().map(|v| v[layer]).collect();
            curve.push(two_pass_mean_ci(&xs));
        }
        out.insert(lang.to_string(), curve);
    }
    out
}

/// Full sort by descending probability, ties by ascending id.
pub fn sorted_top_k(probs: &[f64], k: usize) -> Vec<(u32, f64)> {
    let mut all: Vec<(u32, f64)> = probs
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u32, *p))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn shares_any_character(a: &str, b: &str) -> bool {
    for x in a.chars() {
        for y in b.chars() {
            if x == y {
                return true;
            }
        }
    }
    false
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
