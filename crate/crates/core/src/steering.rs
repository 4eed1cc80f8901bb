//! Cross-layer shift vectors: the average residual-stream difference between
//! a late and a mid layer, applied back onto mid-layer states, and a profile
//! of which dimensions carry it.
//!
//! Shifts are computed on raw block outputs (before the final norm); the norm
//! is applied only inside the lens.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::group_by_example;
use crate::lens::{lens_distribution, widen, LayerDistribution};
use crate::plot;
use crate::trace_format::{ActivationTrace, ModelPack};

/// Which stored position a shift is measured at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositionSelector {
    /// The last prompt position, which predicts the first answer token.
    #[default]
    FinalPrompt,
    Absolute(usize),
}

impl PositionSelector {
    pub fn resolve(self, trace: &ActivationTrace) -> Result<usize> {
        match self {
            PositionSelector::Absolute(p) => Ok(p),
            PositionSelector::FinalPrompt => {
                trace
                    .final_prompt_position()
                    .ok_or_else(|| Error::InvalidPositions {
                        reason: format!("trace {} has an empty prompt", trace.example_id),
                    })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftVector {
    pub layer_a: usize,
    pub layer_b: usize,
    pub n_examples: usize,
    pub delta: Vec<f64>,
}

/// Mean of `h[layer_b] − h[layer_a]` at the selected position, one sample per
/// distinct example id. Accumulated in example-id order.
pub fn compute_shift(
    traces: &[ActivationTrace],
    pack: &ModelPack,
    layer_a: usize,
    layer_b: usize,
    selector: PositionSelector,
) -> Result<ShiftVector> {
    if traces.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for layer in [layer_a, layer_b] {
        if layer > pack.num_layers {
            return Err(Error::LayerOutOfRange {
                layer,
                num_layers: pack.num_layers,
            });
        }
    }
    if layer_b <= layer_a {
        return Err(Error::InvalidConfig(format!(
            "shift needs layer_b > layer_a, got {layer_a} -> {layer_b}"
        )));
    }
    let d = pack.hidden_dim;
    let mut sum = vec![0.0f64; d];
    let groups = group_by_example(traces);
    for group in groups.values() {
        // every pass of an example shares the prompt prefix; use the first
        let trace = group[0];
        let position = selector.resolve(trace)?;
        let ha = trace.hidden_at(layer_a, position)?;
        let hb = trace.hidden_at(layer_b, position)?;
        if ha.len() != d {
            return Err(Error::DimensionMismatch {
                what: "hidden_dim".into(),
                expected: d,
                found: ha.len(),
            });
        }
        for ((s, a), b) in sum.iter_mut().zip(ha).zip(hb) {
            *s += f64::from(*b) - f64::from(*a);
        }
    }
    let n = groups.len();
    Ok(ShiftVector {
        layer_a,
        layer_b,
        n_examples: n,
        delta: sum.into_iter().map(|s| s / n as f64).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOutcome {
    pub before: LayerDistribution,
    pub after: LayerDistribution,
    pub top1_before: u32,
    pub top1_after: u32,
}

/// Lens distributions of `h[layer_a]` and of `h[layer_a] + delta`.
pub fn apply_shift(
    trace: &ActivationTrace,
    pack: &ModelPack,
    shift: &ShiftVector,
    position: usize,
) -> Result<ShiftOutcome> {
    if shift.delta.len() != pack.hidden_dim {
        return Err(Error::DimensionMismatch {
            what: "shift length".into(),
            expected: pack.hidden_dim,
            found: shift.delta.len(),
        });
    }
    let h = widen(trace.hidden_at(shift.layer_a, position)?);
    let shifted: Vec<f64> = h.iter().zip(&shift.delta).map(|(x, s)| x + s).collect();
    let before = lens_distribution(pack, &h, shift.layer_a, position)?;
    let after = lens_distribution(pack, &shifted, shift.layer_a, position)?;
    Ok(ShiftOutcome {
        top1_before: before.argmax(),
        top1_after: after.argmax(),
        before,
        after,
    })
}

/// Half the L1 distance between two distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// How the shift compares with the real `layer_b` state for one example.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub example_id: String,
    pub top1_before: u32,
    pub top1_after: u32,
    pub top1_target: u32,
    pub tv_after_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub layer_a: usize,
    pub layer_b: usize,
    pub n_examples: usize,
    /// Fraction of examples whose shifted top-1 matches the `layer_b` top-1.
    pub top1_agreement: f64,
    pub mean_tv_after_target: f64,
    pub rows: Vec<RecoveryRow>,
}

pub fn recovery_report(
    traces: &[ActivationTrace],
    pack: &ModelPack,
    shift: &ShiftVector,
    selector: PositionSelector,
) -> Result<RecoveryReport> {
    let groups = group_by_example(traces);
    let rows = groups
        .values()
        .map(|group| {
            let trace = group[0];
            let position = selector.resolve(trace)?;
            let outcome = apply_shift(trace, pack, shift, position)?;
            let target = lens_distribution(
                pack,
                &widen(trace.hidden_at(shift.layer_b, position)?),
                shift.layer_b,
                position,
            )?;
            Ok(RecoveryRow {
                example_id: trace.example_id.clone(),
                top1_before: outcome.top1_before,
                top1_after: outcome.top1_after,
                top1_target: target.argmax(),
                tv_after_target: total_variation(&outcome.after.probs, &target.probs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    let agree = rows
        .iter()
        .filter(|r| r.top1_after == r.top1_target)
        .count();
    Ok(RecoveryReport {
        layer_a: shift.layer_a,
        layer_b: shift.layer_b,
        n_examples: n,
        top1_agreement: if n == 0 { 0.0 } else { agree as f64 / n as f64 },
        mean_tv_after_target: if n == 0 {
            0.0
        } else {
            rows.iter().map(|r| r.tv_after_target).sum::<f64>() / n as f64
        },
        rows,
    })
}

/// Which dimensions carry a shift, and how concentrated its energy is.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityProfile {
    pub delta: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Nonzero dimensions as `(index, delta)`, by descending magnitude, ties
    /// by ascending index.
    pub top_dims: Vec<(usize, f64)>,
    /// `cumulative[k]` = energy of the k largest dims; `cumulative[0] = 0`.
    cumulative: Vec<f64>,
    /// Energy fractions at the requested k values.
    pub energy_at: Vec<(usize, f64)>,
}

impl SparsityProfile {
    /// Fraction of `Σ delta²` captured by the `k` largest-magnitude dims.
    /// A zero shift spreads its (zero) energy evenly, giving `k / d`.
    pub fn energy_fraction(&self, k: usize) -> f64 {
        let d = self.delta.len();
        let k = k.min(d);
        let total = self.cumulative[d];
        if total == 0.0 {
            return if d == 0 { 1.0 } else { k as f64 / d as f64 };
        }
        self.cumulative[k] / total
    }

    /// Rank (1-based) of every dimension by descending magnitude.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.delta.len()];
        for (r, i) in self.order().into_iter().enumerate() {
            ranks[i] = r + 1;
        }
        ranks
    }

    fn order(&self) -> Vec<usize> {
        magnitude_order(&self.magnitudes)
    }
}

fn magnitude_order(magnitudes: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..magnitudes.len()).collect();
    idx.sort_by(|&a, &b| magnitudes[b].total_cmp(&magnitudes[a]).then(a.cmp(&b)));
    idx
}

pub fn sparsity_profile(shift: &ShiftVector, k_list: &[usize]) -> SparsityProfile {
    let delta = shift.delta.clone();
    let magnitudes: Vec<f64> = delta.iter().map(|v| v.abs()).collect();
    let order = magnitude_order(&magnitudes);
    let mut cumulative = Vec::with_capacity(delta.len() + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for &i in &order {
        acc += delta[i] * delta[i];
        cumulative.push(acc);
    }
    let top_dims = order
        .iter()
        .filter(|&&i| delta[i] != 0.0)
        .map(|&i| (i, delta[i]))
        .collect();
    let mut profile = SparsityProfile {
        delta,
        magnitudes,
        top_dims,
        cumulative,
        energy_at: Vec::new(),
    };
    profile.energy_at = k_list
        .iter()
        .map(|&k| (k, profile.energy_fraction(k)))
        .collect();
    profile
}

/// Stem plot of the shift per dimension index. Zero dimensions draw nothing
/// above the baseline.
pub fn emit_shift_plot(profile: &SparsityProfile, title: &str) -> String {
    let d = profile.delta.len().max(1);
    let (w, h) = (800u32, 300u32);
    let (left, right, top, bottom) = (50.0, 20.0, 30.0, 30.0);
    let pw = f64::from(w) - left - right;
    let ph = f64::from(h) - top - bottom;
    let scale = profile.magnitudes.iter().copied().fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let base = top + ph / 2.0;
    let x = |i: usize| left + (i as f64 + 0.5) / d as f64 * pw;
    let y = |v: f64| base - v / scale * (ph / 2.0);

    let mut out = String::new();
    plot::header(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<text x="{left}" y="18">{}</text>"#,
        plot::escape(title)
    );
    let _ = writeln!(
        out,
        r#"<line class="baseline" x1="{left}" x2="{:.2}" y1="{base:.2}" y2="{base:.2}" stroke="black"/>"#,
        left + pw
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{scale:.3}</text>"#,
        left - 4.0,
        top + 4.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
        left - 4.0,
        top + ph + 4.0,
        -scale
    );
    for (i, v) in profile.delta.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let _ = writeln!(
            out,
            r##"<line class="stem" x1="{0:.2}" x2="{0:.2}" y1="{base:.2}" y2="{1:.2}" stroke="#1f77b4"/>"##,
            x(i),
            y(*v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">dimension (0..{})</text>"#,
        left + pw / 2.0,
        f64::from(h) - 8.0,
        profile.delta.len()
    );
    out.push_str("</svg>\n");
    out
}
