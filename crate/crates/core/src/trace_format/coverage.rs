//! Coverage checks: does each example carry scorable answers for the
//! languages an analysis needs?

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::trace::ActivationTrace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub example_id: String,
    /// Required languages with no span list at all.
    pub missing: Vec<String>,
    /// Required languages whose spans are empty or reference unstored positions.
    pub unscorable: Vec<String>,
}

impl CoverageReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.unscorable.is_empty()
    }
}

fn scorable_languages(trace: &ActivationTrace) -> (BTreeSet<&str>, BTreeSet<&str>) {
    let mut present = BTreeSet::new();
    let mut scorable = BTreeSet::new();
    for (lang, spans) in &trace.answer_spans {
        present.insert(lang.as_str());
        let any_ok = spans.iter().any(|s| {
            !s.token_ids.is_empty()
                && s.token_ids.len() == s.predictor_positions.len()
                && s.predictor_positions.windows(2).all(|w| w[1] == w[0] + 1)
                && s.predictor_positions
                    .iter()
                    .all(|p| trace.slot(*p).is_some())
        });
        if any_ok {
            scorable.insert(lang.as_str());
        }
    }
    (present, scorable)
}

fn report<'a>(
    example_id: &str,
    present: &BTreeSet<&'a str>,
    scorable: &BTreeSet<&'a str>,
    required: &BTreeSet<String>,
) -> CoverageReport {
    let mut missing = Vec::new();
    let mut unscorable = Vec::new();
    for lang in required {
        if !present.contains(lang.as_str()) {
            missing.push(lang.clone());
        } else if !scorable.contains(lang.as_str()) {
            unscorable.push(lang.clone());
        }
    }
    CoverageReport {
        example_id: example_id.to_string(),
        missing,
        unscorable,
    }
}

/// Lists required languages that a single trace cannot score.
pub fn validate_manifest_coverage(
    trace: &ActivationTrace,
    required: &BTreeSet<String>,
) -> CoverageReport {
    let (present, scorable) = scorable_languages(trace);
    report(&trace.example_id, &present, &scorable, required)
}

/// One report per distinct example id, in id order. Traces sharing an example
/// id (one per answer-variant pass) are pooled.
pub fn validate_corpus_coverage(
    traces: &[ActivationTrace],
    required: &BTreeSet<String>,
) -> Vec<CoverageReport> {
    let mut grouped: BTreeMap<&str, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for trace in traces {
        let (p, s) = scorable_languages(trace);
        let entry = grouped.entry(trace.example_id.as_str()).or_default();
        entry.0.extend(p);
        entry.1.extend(s);
    }
    grouped
        .into_iter()
        .map(|(id, (present, scorable))| report(id, &present, &scorable, required))
        .collect()
}
