//! Command-line front end: argument parsing, config resolution, the five
//! subcommands and structured error reports.
//!
//! Every command writes its outputs under the resolved output directory. On
//! failure a JSON error report goes to stderr and to `error_report.json` in
//! that directory, and the process exits with status 1. `validate` exits with
//! status 2 when it finds problems.

mod commands;
pub mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use commands::{
    cmd_analyze, cmd_manifest, cmd_probe, cmd_steer, cmd_validate, TraceFinding, ValidationReport,
};
pub use config::{ConfigLayer, RunConfig, OUT_DIR_ENV};

use crate::error::{Error, Result};
use crate::lexicon::{Task, VariantAggregation};

#[derive(Debug, Parser)]
#[command(
    name = "latentlens",
    version,
    about = "Layer-wise latent-language analysis of activation traces"
)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the dump manifest (prompts and answer strings) for a task.
    Manifest(CommonArgs),
    /// Per-layer language probability curves with 95% CIs.
    Analyze(CommonArgs),
    /// Per-layer top-k tokens and entropy for one prompt.
    Probe {
        #[arg(long)]
        prompt_id: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-layer shift vector, sparsity profile and recovery report.
    Steer(CommonArgs),
    /// Check a pack and trace corpus without analysing it.
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long = "source", alias = "source-lang")]
    pub source_lang: Option<String>,
    #[arg(long = "target", alias = "target-lang")]
    pub target_lang: Option<String>,
    #[arg(long)]
    pub shots: Option<usize>,
    /// Comma-separated language codes to score.
    #[arg(long, value_delimiter = ',')]
    pub languages: Option<Vec<String>>,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub pack: Option<PathBuf>,
    #[arg(long = "out", alias = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Tokens kept per layer by `probe`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Inclusive layer range for plots and probes.
    #[arg(long, num_args = 2, value_names = ["FROM", "TO"])]
    pub layer_range: Option<Vec<usize>>,
    /// How answer variants combine: max or sum.
    #[arg(long)]
    pub aggregate: Option<VariantAggregation>,
    #[arg(long, num_args = 2, value_names = ["FROM", "TO"])]
    pub steer_layers: Option<Vec<usize>>,
    /// Comma-separated k values for the shift energy profile.
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<usize>>,
    /// Reject lexicon rows whose ja and zh forms share characters.
    #[arg(long)]
    pub non_overlapping: bool,
    #[arg(long)]
    pub no_plot: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

fn pair(values: Option<Vec<usize>>) -> Option<(usize, usize)> {
    values.map(|v| (v[0], v[1]))
}

impl CommonArgs {
    pub fn into_layer(self) -> ConfigLayer {
        ConfigLayer {
            task: self.task,
            source_lang: self.source_lang,
            target_lang: self.target_lang,
            shots: self.shots,
            languages: self.languages,
            model_id: self.model_id,
            lexicon: self.lexicon,
            traces: self.traces,
            pack: self.pack,
            out_dir: self.out_dir,
            k: self.k,
            layer_range: pair(self.layer_range),
            aggregate: self.aggregate,
            steer_layers: pair(self.steer_layers),
            k_list: self.k_list,
            non_overlapping: self.non_overlapping.then_some(true),
            plot: self.no_plot.then_some(false),
            threads: self.threads,
            language_table: None,
        }
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Manifest(_) => "manifest",
            Command::Analyze(_) => "analyze",
            Command::Probe { .. } => "probe",
            Command::Steer(_) => "steer",
            Command::Validate(_) => "validate",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Manifest(c)
            | Command::Analyze(c)
            | Command::Steer(c)
            | Command::Validate(c) => c,
            Command::Probe { common, .. } => common,
        }
    }
}

/// Machine-readable failure record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub command: String,
    pub error_kind: String,
    pub message: String,
    pub example_ids: Vec<String>,
}

impl ErrorReport {
    pub fn new(command: &str, error: &Error) -> Self {
        ErrorReport {
            command: command.to_string(),
            error_kind: error.kind().to_string(),
            message: error.to_string(),
            example_ids: error.example_ids(),
        }
    }
}

/// Best effort: the report always reaches stderr; the file only if the output
/// directory is writable.
pub fn emit_error_report(out_dir: Option<&Path>, report: &ErrorReport) {
    let json = serde_json::to_string(report).unwrap_or_else(|_| report.message.clone());
    eprintln!("{json}");
    if let Some(dir) = out_dir {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ =
                crate::trace_format::tensor_io::write_json(&dir.join("error_report.json"), report);
        }
    }
}

pub fn resolve_config(config: Option<&Path>, command: &Command) -> Result<RunConfig> {
    let file = config.map(ConfigLayer::from_file).transpose()?;
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    RunConfig::resolve(command.common().clone().into_layer(), file, env_out)
}

fn execute(command: &Command, cfg: &RunConfig) -> Result<ExitCode> {
    let written = match command {
        Command::Manifest(_) => cmd_manifest(cfg)?,
        Command::Analyze(_) => cmd_analyze(cfg)?,
        Command::Probe { prompt_id, .. } => cmd_probe(cfg, prompt_id)?,
        Command::Steer(_) => cmd_steer(cfg)?,
        Command::Validate(_) => {
            let (report, path) = cmd_validate(cfg)?;
            println!("{}", path.display());
            let findings = report.findings();
            if findings > 0 {
                eprintln!("validate: {findings} finding(s)");
                return Ok(ExitCode::from(2));
            }
            return Ok(ExitCode::SUCCESS);
        }
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_with_threads(cfg: &RunConfig, command: &Command) -> Result<ExitCode> {
    match cfg.threads {
        None => execute(command, cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| execute(command, cfg)),
    }
}

/// Entry point for the binary.
pub fn run(cli: Cli) -> ExitCode {
    let name = cli.command.name();
    let cfg = match resolve_config(cli.config.as_deref(), &cli.command) {
        Ok(cfg) => cfg,
        Err(e) => {
            let out = cli.command.common().out_dir.clone();
            emit_error_report(out.as_deref(), &ErrorReport::new(name, &e));
            return ExitCode::from(1);
        }
    };
    match run_with_threads(&cfg, &cli.command) {
        Ok(code) => code,
        Err(e) => {
            emit_error_report(Some(&cfg.out_dir), &ErrorReport::new(name, &e));
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_lists() {
        let cli = Cli::try_parse_from([
            "latentlens",
            "steer",
            "--steer-layers",
            "3",
            "9",
            "--k-list",
            "1,2,4",
            "--languages",
            "en,ja",
            "--no-plot",
        ])
        .unwrap();
        let layer = cli.command.common().clone().into_layer();
        assert_eq!(layer.steer_layers, Some((3, 9)));
        assert_eq!(layer.k_list, Some(vec![1, 2, 4]));
        assert_eq!(
            layer.languages,
            Some(vec!["en".to_string(), "ja".to_string()])
        );
        assert_eq!(layer.plot, Some(false));
        assert_eq!(layer.non_overlapping, None);
    }

    #[test]
    fn task_and_aggregate_parse_from_text() {
        let cli = Cli::try_parse_from([
            "latentlens",
            "analyze",
            "--task",
            "cloze",
            "--aggregate",
            "sum",
        ])
        .unwrap();
        let c = cli.command.common();
        assert_eq!(c.task, Some(Task::Cloze));
        assert_eq!(c.aggregate, Some(VariantAggregation::Sum));
        assert!(Cli::try_parse_from(["latentlens", "analyze", "--task", "poetry"]).is_err());
    }

    #[test]
    fn error_report_names_kind_and_examples() {
        let e = Error::ManifestDrift {
            expected: "a".into(),
            found: "b".into(),
            example_ids: vec!["x1".into()],
        };
        let r = ErrorReport::new("analyze", &e);
        assert_eq!(r.error_kind, "manifest_drift");
        assert_eq!(r.example_ids, vec!["x1".to_string()]);
    }
}
