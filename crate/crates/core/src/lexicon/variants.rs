use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LexiconEntry;
use crate::error::{Error, Result};

/// Supplies surface strings that a real tokenizer produces for an answer in
/// context (e.g. when the opening quote merges with the first character).
pub trait TokenizerProbe {
    fn context_variants(&self, form: &str) -> Vec<String>;
}

/// Candidate surface strings for `entry` in `lang`: the bare form, the form
/// with one leading space, then any probe-supplied variants. Duplicates are
/// dropped, first occurrence wins. Empty when the entry has no such form.
pub fn answer_variants(
    entry: &LexiconEntry,
    lang: &str,
    probe: Option<&dyn TokenizerProbe>,
) -> Vec<String> {
    let Some(form) = entry.form(lang) else {
        return Vec::new();
    };
    let mut out = vec![form.to_string(), format!(" {form}")];
    if let Some(probe) = probe {
        for v in probe.context_variants(form) {
            if !v.is_empty() && !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// How the probabilities of one language's answer variants combine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantAggregation {
    #[default]
    Max,
    /// Sum, clamped to 1.
    Sum,
}

impl VariantAggregation {
    pub fn combine(self, probs: &[f64]) -> f64 {
        match self {
            VariantAggregation::Max => probs.iter().copied().fold(0.0, f64::max),
            VariantAggregation::Sum => probs.iter().sum::<f64>().min(1.0),
        }
    }
}

impl FromStr for VariantAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(VariantAggregation::Max),
            "sum" => Ok(VariantAggregation::Sum),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant aggregation {other:?} (expected max or sum)"
            ))),
        }
    }
}

impl fmt::Display for VariantAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariantAggregation::Max => "max",
            VariantAggregation::Sum => "sum",
        })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn entry() -> LexiconEntry {
        let forms: BTreeMap<String, String> = [("en", "principle"), ("ja", "原則")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        LexiconEntry {
            concept_id: "principle".into(),
            forms,
            cloze: BTreeMap::new(),
            row: 0,
        }
    }

    /// Pretends the tokenizer fuses the opening quote with the first
    /// character, so the answer surfaces as `"原` + `則`.
    struct QuoteMergingProbe;

    impl TokenizerProbe for QuoteMergingProbe {
        fn context_variants(&self, form: &str) -> Vec<String> {
            vec![format!("\"{form}"), form.to_string()]
        }
    }

    #[test]
    fn bare_and_spaced_variants() {
        assert_eq!(
            answer_variants(&entry(), "en", None),
            vec!["principle", " principle"]
        );
        assert_eq!(answer_variants(&entry(), "ja", None), vec!["原則", " 原則"]);
        assert!(answer_variants(&entry(), "zh", None).is_empty());
    }

    #[test]
    fn probe_adds_merged_form_once() {
        let v = answer_variants(&entry(), "ja", Some(&QuoteMergingProbe));
        assert_eq!(v, vec!["原則", " 原則", "\"原則"]);
    }

    #[test]
    fn aggregation_modes() {
        assert_eq!(VariantAggregation::Max.combine(&[0.1, 0.3, 0.2]), 0.3);
        assert!((VariantAggregation::Sum.combine(&[0.1, 0.3, 0.2]) - 0.6).abs() < 1e-15);
        assert_eq!(VariantAggregation::Sum.combine(&[0.7, 0.6]), 1.0);
        assert_eq!(
            "sum".parse::<VariantAggregation>().unwrap(),
            VariantAggregation::Sum
        );
    }
}
