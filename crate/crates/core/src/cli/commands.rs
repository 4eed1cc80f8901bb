use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{
    culture_probe, run_task, write_probe_csv, write_task_outputs, TaskConfig,
};
use crate::lexicon::load_lexicon;
use crate::manifest::{build_manifest, write_manifest, ManifestRequest};
use crate::plot::{curves_svg, probe_svg};
use crate::steering::{
    compute_shift, emit_shift_plot, recovery_report, sparsity_profile, PositionSelector,
    SparsityProfile,
};
use crate::trace_format::tensor_io::write_json;
use crate::trace_format::{
    read_corpus, read_model_pack, read_trace, trace_dirs, validate_corpus_coverage,
    ActivationTrace, CoverageReport,
};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn task_config(cfg: &RunConfig) -> TaskConfig {
    TaskConfig {
        task: cfg.task,
        source_lang: cfg.source_lang.clone(),
        target_lang: cfg.target_lang.clone(),
        shots: cfg.shots,
        languages: cfg.languages.clone(),
        aggregation: cfg.aggregate,
        language_table: cfg.language_table.clone(),
    }
}

/// Writes `manifest_<stem>.json`, the job list for the activation dumper.
pub fn cmd_manifest(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let lexicon = load_lexicon(
        cfg.require(&cfg.lexicon, "lexicon")?,
        &cfg.lexicon_options(),
    )?;
    let manifest = build_manifest(
        &lexicon,
        &ManifestRequest {
            model_id: &cfg.model_id,
            task: cfg.task,
            source_lang: &cfg.source_lang,
            target_lang: &cfg.target_lang,
            shots: cfg.shots,
            answer_languages: &cfg.languages,
            languages: &cfg.language_table,
        },
    )?;
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("manifest_{}.json", cfg.stem()));
    write_manifest(&path, &manifest)?;
    Ok(vec![path])
}

/// Language curves for the configured task: CSVs, a JSON summary and an
/// optional plot.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let pack = read_model_pack(cfg.require(&cfg.pack, "pack")?)?;
    let lexicon = load_lexicon(
        cfg.require(&cfg.lexicon, "lexicon")?,
        &cfg.lexicon_options(),
    )?;
    let traces = read_corpus(cfg.require(&cfg.traces, "traces")?, &pack)?;
    let task = task_config(cfg);
    let output = run_task(&task, &lexicon, &traces, &pack)?;
    let mut written = write_task_outputs(&cfg.out_dir, &task, &output)?;
    if cfg.plot {
        let range = cfg.layer_range.unwrap_or((0, pack.num_layers));
        let path = cfg.out_dir.join(format!("curves_{}.svg", cfg.stem()));
        let title = format!(
            "{} {} -> {} ({})",
            cfg.task, cfg.source_lang, cfg.target_lang, pack.model_id
        );
        write_text(&path, &curves_svg(&output.bundle, &title, range))?;
        written.push(path);
    }
    Ok(written)
}

fn find_trace(
    cfg: &RunConfig,
    prompt_id: &str,
    pack: &crate::trace_format::ModelPack,
) -> Result<ActivationTrace> {
    let root = cfg.require(&cfg.traces, "traces")?;
    let direct = root.join(prompt_id);
    if direct.join("meta.json").is_file() {
        return read_trace(&direct, pack);
    }
    for dir in trace_dirs(root)? {
        let trace = read_trace(&dir, pack)?;
        if trace.example_id == prompt_id {
            return Ok(trace);
        }
    }
    Err(Error::UnknownPromptId(prompt_id.to_string()))
}

/// Per-layer top-k tokens and entropy at the final prompt position of one
/// trace, selected by directory name or example id.
pub fn cmd_probe(cfg: &RunConfig, prompt_id: &str) -> Result<Vec<PathBuf>> {
    let pack = read_model_pack(cfg.require(&cfg.pack, "pack")?)?;
    let trace = find_trace(cfg, prompt_id, &pack)?;
    let mut rows = culture_probe(&trace, &pack, cfg.k)?;
    if let Some((lo, hi)) = cfg.layer_range {
        rows.retain(|r| (lo..=hi).contains(&r.layer));
    }
    ensure_dir(&cfg.out_dir)?;
    let csv = cfg.out_dir.join(format!("probe_{prompt_id}.csv"));
    write_probe_csv(&csv, &rows)?;
    let mut written = vec![csv];
    if cfg.plot {
        let path = cfg.out_dir.join(format!("probe_{prompt_id}.svg"));
        write_text(&path, &probe_svg(&rows, pack.vocab_size))?;
        written.push(path);
    }
    Ok(written)
}

fn write_sparsity_csv(path: &Path, profile: &SparsityProfile) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(["dim", "delta", "abs_delta", "rank"])
        .map_err(csv_err)?;
    let ranks = profile.ranks();
    for (i, v) in profile.delta.iter().enumerate() {
        w.write_record([
            i.to_string(),
            v.to_string(),
            profile.magnitudes[i].to_string(),
            ranks[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct EnergyRow {
    k: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct SteerSummary<'a> {
    recovery: &'a crate::steering::RecoveryReport,
    energy: Vec<EnergyRow>,
    nonzero_dims: usize,
}

/// Shift vector between the configured layers, its sparsity profile, and how
/// well adding it to the earlier layer reproduces the later one.
pub fn cmd_steer(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let pack = read_model_pack(cfg.require(&cfg.pack, "pack")?)?;
    let traces = read_corpus(cfg.require(&cfg.traces, "traces")?, &pack)?;
    let (a, b) = cfg.steer_layers;
    let shift = compute_shift(&traces, &pack, a, b, PositionSelector::FinalPrompt)?;
    let profile = sparsity_profile(&shift, &cfg.k_list);
    let recovery = recovery_report(&traces, &pack, &shift, PositionSelector::FinalPrompt)?;

    ensure_dir(&cfg.out_dir)?;
    let shift_path = cfg.out_dir.join(format!("shift_{a}_{b}.json"));
    write_json(&shift_path, &shift)?;
    let sparsity_path = cfg.out_dir.join(format!("sparsity_{a}_{b}.csv"));
    write_sparsity_csv(&sparsity_path, &profile)?;
    let report_path = cfg.out_dir.join(format!("recovery_{a}_{b}.json"));
    write_json(
        &report_path,
        &SteerSummary {
            recovery: &recovery,
            energy: profile
                .energy_at
                .iter()
                .map(|&(k, fraction)| EnergyRow { k, fraction })
                .collect(),
            nonzero_dims: profile.top_dims.len(),
        },
    )?;
    let mut written = vec![shift_path, sparsity_path, report_path];
    if cfg.plot {
        let path = cfg.out_dir.join(format!("shift_{a}_{b}.svg"));
        let title = format!(
            "shift {a} -> {b} ({}, n={})",
            pack.model_id, shift.n_examples
        );
        write_text(&path, &emit_shift_plot(&profile, &title))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFinding {
    pub trace_dir: String,
    pub error_kind: String,
    pub message: String,
}

/// Everything `validate` found; empty lists mean the corpus is usable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub pack: Option<String>,
    pub n_traces: usize,
    pub invalid_traces: Vec<TraceFinding>,
    pub coverage: Vec<CoverageReport>,
    pub manifest_hash: Option<String>,
    pub drifted: Vec<String>,
}

impl ValidationReport {
    pub fn findings(&self) -> usize {
        usize::from(self.pack.is_some())
            + self.invalid_traces.len()
            + self.coverage.len()
            + self.drifted.len()
    }
}

/// Reads every trace, collecting problems instead of stopping at the first.
/// Writes `validate_report.json`.
pub fn cmd_validate(cfg: &RunConfig) -> Result<(ValidationReport, PathBuf)> {
    let pack_dir = cfg.require(&cfg.pack, "pack")?;
    let traces_dir = cfg.require(&cfg.traces, "traces")?;
    let mut report = ValidationReport {
        pack: None,
        n_traces: 0,
        invalid_traces: Vec::new(),
        coverage: Vec::new(),
        manifest_hash: None,
        drifted: Vec::new(),
    };
    match read_model_pack(pack_dir) {
        Err(e) => report.pack = Some(format!("{}: {e}", e.kind())),
        Ok(pack) => {
            let mut traces = Vec::new();
            for dir in trace_dirs(traces_dir)? {
                report.n_traces += 1;
                match read_trace(&dir, &pack) {
                    Ok(t) => traces.push(t),
                    Err(e) => report.invalid_traces.push(TraceFinding {
                        trace_dir: dir
                            .file_name()
                            .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                        error_kind: e.kind().to_string(),
                        message: e.to_string(),
                    }),
                }
            }
            let required: BTreeSet<String> = cfg.languages.iter().cloned().collect();
            report.coverage = validate_corpus_coverage(&traces, &required)
                .into_iter()
                .filter(|c| !c.missing.is_empty())
                .collect();
            if let Some(lexicon_path) = &cfg.lexicon {
                let lexicon = load_lexicon(lexicon_path, &cfg.lexicon_options())?;
                let manifest = build_manifest(
                    &lexicon,
                    &ManifestRequest {
                        model_id: &pack.model_id,
                        task: cfg.task,
                        source_lang: &cfg.source_lang,
                        target_lang: &cfg.target_lang,
                        shots: cfg.shots,
                        answer_languages: &cfg.languages,
                        languages: &cfg.language_table,
                    },
                )?;
                let drifted: BTreeSet<String> = traces
                    .iter()
                    .filter(|t| t.manifest_hash.as_deref() != Some(manifest.content_hash.as_str()))
                    .map(|t| t.example_id.clone())
                    .collect();
                report.drifted = drifted.into_iter().collect();
                report.manifest_hash = Some(manifest.content_hash);
            }
        }
    }
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("validate_report.json");
    write_json(&path, &report)?;
    Ok((report, path))
}
