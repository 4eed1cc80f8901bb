use std::collections::BTreeMap;

use rayon::prelude::*;

use super::stats::mean_ci95;
use crate::error::{Error, Result};
use crate::lens::span_log_probabilities;
use crate::lexicon::VariantAggregation;
use crate::trace_format::{ActivationTrace, AnswerSpan, ModelPack};

/// Per-layer mean probability of one language's answer, with its 95% CI.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageCurve {
    pub language: String,
    /// Indexed by layer `0..=L`.
    pub mean: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub n: usize,
}

/// Per-layer answer probability of one example in one language.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleScores {
    pub example_id: String,
    pub language: String,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveBundle {
    pub num_layers: usize,
    /// Curves in the requested language order.
    pub curves: Vec<LanguageCurve>,
    /// Sorted by example id, then in requested language order.
    pub examples: Vec<ExampleScores>,
    /// Examples dropped per language because their answer had no scorable span.
    pub excluded: BTreeMap<String, Vec<String>>,
    pub n_examples: usize,
}

impl CurveBundle {
    pub fn curve(&self, language: &str) -> Option<&LanguageCurve> {
        self.curves.iter().find(|c| c.language == language)
    }
}

/// Groups traces by example id; several passes of one example share an id.
pub fn group_by_example(traces: &[ActivationTrace]) -> BTreeMap<&str, Vec<&ActivationTrace>> {
    let mut groups: BTreeMap<&str, Vec<&ActivationTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.example_id.as_str()).or_default().push(t);
    }
    groups
}

enum LangScore {
    Scored(Vec<f64>),
    Excluded,
    Missing,
}

fn score_example(
    traces: &[&ActivationTrace],
    pack: &ModelPack,
    languages: &[String],
    mode: VariantAggregation,
) -> Result<Vec<LangScore>> {
    let layers = pack.num_layers + 1;
    // variant probabilities per language per layer, pooled over passes
    let mut pooled: Vec<Option<Vec<Vec<f64>>>> = vec![None; languages.len()];
    for trace in traces {
        let mut spans: Vec<&AnswerSpan> = Vec::new();
        let mut owner: Vec<usize> = Vec::new();
        for (li, lang) in languages.iter().enumerate() {
            if let Some(list) = trace.answer_spans.get(lang) {
                pooled[li].get_or_insert_with(|| vec![Vec::new(); layers]);
                for span in list {
                    spans.push(span);
                    owner.push(li);
                }
            }
        }
        if spans.is_empty() {
            continue;
        }
        let scores = span_log_probabilities(trace, pack, &spans)?;
        for (layer, row) in scores.iter().enumerate() {
            for (si, logp) in row.iter().enumerate() {
                pooled[owner[si]].as_mut().unwrap()[layer].push(logp.exp());
            }
        }
    }
    Ok(pooled
        .into_iter()
        .map(|p| match p {
            None => LangScore::Missing,
            Some(per_layer) if per_layer[0].is_empty() => LangScore::Excluded,
            Some(per_layer) => {
                LangScore::Scored(per_layer.iter().map(|v| mode.combine(v)).collect())
            }
        })
        .collect())
}

/// Scores every example at every layer in each language and aggregates the
/// per-layer means and 95% confidence halfwidths.
///
/// An example's probability for a language is the variant aggregate (max by
/// default) of its spans' sequence probabilities. Per-example work runs in
/// parallel; results are identical to a sequential run.
pub fn language_curves(
    traces: &[ActivationTrace],
    pack: &ModelPack,
    languages: &[String],
    mode: VariantAggregation,
) -> Result<CurveBundle> {
    if traces.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let groups: Vec<(&str, Vec<&ActivationTrace>)> = group_by_example(traces).into_iter().collect();
    let scored: Vec<Vec<LangScore>> = groups
        .par_iter()
        .map(|(_, group)| score_example(group, pack, languages, mode))
        .collect::<Result<_>>()?;

    let mut missing = Vec::new();
    let mut excluded: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut examples = Vec::new();
    for ((id, _), per_lang) in groups.iter().zip(scored) {
        for (lang, score) in languages.iter().zip(per_lang) {
            match score {
                LangScore::Missing => missing.push((id.to_string(), lang.clone())),
                LangScore::Excluded => excluded
                    .entry(lang.clone())
                    .or_default()
                    .push(id.to_string()),
                LangScore::Scored(probs) => examples.push(ExampleScores {
                    example_id: id.to_string(),
                    language: lang.clone(),
                    probs,
                }),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingSpans { missing });
    }

    let layers = pack.num_layers + 1;
    let mut curves = Vec::with_capacity(languages.len());
    for lang in languages {
        let rows: Vec<&ExampleScores> = examples.iter().filter(|e| &e.language == lang).collect();
        if rows.is_empty() {
            return Err(Error::NoScorableExamples {
                language: lang.clone(),
            });
        }
        let mut mean = Vec::with_capacity(layers);
        let mut ci = Vec::with_capacity(layers);
        for layer in 0..layers {
            let samples: Vec<f64> = rows.iter().map(|r| r.probs[layer]).collect();
            let stat = mean_ci95(&samples);
            mean.push(stat.mean);
            ci.push(stat.halfwidth);
        }
        curves.push(LanguageCurve {
            language: lang.clone(),
            mean,
            ci_halfwidth: ci,
            n: rows.len(),
        });
    }
    Ok(CurveBundle {
        num_layers: pack.num_layers,
        curves,
        examples,
        excluded,
        n_examples: groups.len(),
    })
}
