use std::path::{Path, PathBuf};

use serde::Serialize;

use super::curves::{language_curves, CurveBundle};
use super::probe::ProbeRow;
use crate::error::{Error, Result};
use crate::lexicon::{LanguageTable, LexiconEntry, Task, VariantAggregation};
use crate::manifest::{build_manifest, ManifestRequest};
use crate::trace_format::{ActivationTrace, ModelPack};

/// What to run: a task in one direction, scored in a set of languages.
#[derive(Debug, Clone)]
pub struct TaskConfig {
    pub task: Task,
    pub source_lang: String,
    pub target_lang: String,
    pub shots: usize,
    pub languages: Vec<String>,
    pub aggregation: VariantAggregation,
    pub language_table: LanguageTable,
}

impl TaskConfig {
    /// `<task>_<src>-<tgt>`, shared by every output file name of the run.
    pub fn stem(&self) -> String {
        format!("{}_{}-{}", self.task, self.source_lang, self.target_lang)
    }
}

#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub manifest_hash: String,
    pub bundle: CurveBundle,
}

/// Recomputes the manifest the traces should have been dumped from, checks
/// every trace carries its hash, then computes the language curves.
pub fn run_task(
    config: &TaskConfig,
    lexicon: &[LexiconEntry],
    traces: &[ActivationTrace],
    pack: &ModelPack,
) -> Result<TaskOutput> {
    let manifest = build_manifest(
        lexicon,
        &ManifestRequest {
            model_id: &pack.model_id,
            task: config.task,
            source_lang: &config.source_lang,
            target_lang: &config.target_lang,
            shots: config.shots,
            answer_languages: &config.languages,
            languages: &config.language_table,
        },
    )?;
    let expected = manifest.content_hash;
    let drifted: Vec<&ActivationTrace> = traces
        .iter()
        .filter(|t| t.manifest_hash.as_deref() != Some(expected.as_str()))
        .collect();
    if let Some(first) = drifted.first() {
        return Err(Error::ManifestDrift {
            expected,
            found: first.manifest_hash.clone().unwrap_or_else(|| "none".into()),
            example_ids: drifted.iter().map(|t| t.example_id.clone()).collect(),
        });
    }
    let bundle = language_curves(traces, pack, &config.languages, config.aggregation)?;
    Ok(TaskOutput {
        manifest_hash: expected,
        bundle,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// `layer,lang,mean,ci,n`, layer-major, languages in bundle order.
pub fn write_curves_csv(path: &Path, bundle: &CurveBundle) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["layer", "lang", "mean", "ci", "n"])
        .map_err(csv_err(path))?;
    for layer in 0..=bundle.num_layers {
        for c in &bundle.curves {
            w.write_record([
                layer.to_string(),
                c.language.clone(),
                c.mean[layer].to_string(),
                c.ci_halfwidth[layer].to_string(),
                c.n.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `example_id,layer,lang,prob`.
pub fn write_examples_csv(path: &Path, bundle: &CurveBundle) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["example_id", "layer", "lang", "prob"])
        .map_err(csv_err(path))?;
    for e in &bundle.examples {
        for (layer, p) in e.probs.iter().enumerate() {
            w.write_record([
                e.example_id.clone(),
                layer.to_string(),
                e.language.clone(),
                p.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `layer,rank,token_id,token,prob,entropy_bits`, one row per top-k token.
pub fn write_probe_csv(path: &Path, rows: &[ProbeRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["layer", "rank", "token_id", "token", "prob", "entropy_bits"])
        .map_err(csv_err(path))?;
    for row in rows {
        for (rank, t) in row.top_tokens.iter().enumerate() {
            w.write_record([
                row.layer.to_string(),
                (rank + 1).to_string(),
                t.token_id.to_string(),
                t.token.clone(),
                t.prob.to_string(),
                row.entropy_bits.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct TaskSummary<'a> {
    task: Task,
    source_lang: &'a str,
    target_lang: &'a str,
    manifest_hash: &'a str,
    aggregation: VariantAggregation,
    n_examples: usize,
    n_per_language: Vec<(&'a str, usize)>,
    excluded: &'a std::collections::BTreeMap<String, Vec<String>>,
}

/// Writes `curves_<stem>.csv`, `examples_<task>.csv` and `report_<stem>.json`
/// into `out_dir`, returning the paths written.
pub fn write_task_outputs(
    out_dir: &Path,
    config: &TaskConfig,
    output: &TaskOutput,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let curves = out_dir.join(format!("curves_{}.csv", config.stem()));
    let examples = out_dir.join(format!("examples_{}.csv", config.task));
    let report = out_dir.join(format!("report_{}.json", config.stem()));
    write_curves_csv(&curves, &output.bundle)?;
    write_examples_csv(&examples, &output.bundle)?;
    let summary = TaskSummary {
        task: config.task,
        source_lang: &config.source_lang,
        target_lang: &config.target_lang,
        manifest_hash: &output.manifest_hash,
        aggregation: config.aggregation,
        n_examples: output.bundle.n_examples,
        n_per_language: output
            .bundle
            .curves
            .iter()
            .map(|c| (c.language.as_str(), c.n))
            .collect(),
        excluded: &output.bundle.excluded,
    };
    crate::trace_format::tensor_io::write_json(&report, &summary)?;
    Ok(vec![curves, examples, report])
}
