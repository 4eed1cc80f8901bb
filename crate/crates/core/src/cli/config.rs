use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lexicon::{LanguageTable, LexiconOptions, Task, VariantAggregation};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "LATENTLENS_OUT_DIR";

/// A partially specified configuration: the TOML file, or the flags given on
/// the command line. Layers merge field by field.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub task: Option<Task>,
    pub source_lang: Option<String>,
    pub target_lang: Option<String>,
    pub shots: Option<usize>,
    pub languages: Option<Vec<String>>,
    pub model_id: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    pub pack: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub k: Option<usize>,
    pub layer_range: Option<(usize, usize)>,
    pub aggregate: Option<VariantAggregation>,
    pub steer_layers: Option<(usize, usize)>,
    pub k_list: Option<Vec<usize>>,
    pub non_overlapping: Option<bool>,
    pub plot: Option<bool>,
    pub threads: Option<usize>,
    /// Extra or replacement display names and cloze markers.
    pub language_table: Option<LanguageTable>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut layer: ConfigLayer = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        // paths in a config file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut layer.lexicon,
            &mut layer.traces,
            &mut layer.pack,
            &mut layer.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(layer)
    }

    /// Fields set in `self` win over `base`.
    pub fn over(self, base: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            task: self.task.or(base.task),
            source_lang: self.source_lang.or(base.source_lang),
            target_lang: self.target_lang.or(base.target_lang),
            shots: self.shots.or(base.shots),
            languages: self.languages.or(base.languages),
            model_id: self.model_id.or(base.model_id),
            lexicon: self.lexicon.or(base.lexicon),
            traces: self.traces.or(base.traces),
            pack: self.pack.or(base.pack),
            out_dir: self.out_dir.or(base.out_dir),
            k: self.k.or(base.k),
            layer_range: self.layer_range.or(base.layer_range),
            aggregate: self.aggregate.or(base.aggregate),
            steer_layers: self.steer_layers.or(base.steer_layers),
            k_list: self.k_list.or(base.k_list),
            non_overlapping: self.non_overlapping.or(base.non_overlapping),
            plot: self.plot.or(base.plot),
            threads: self.threads.or(base.threads),
            language_table: match (self.language_table, base.language_table) {
                (Some(mut top), Some(base)) => {
                    let mut merged = base;
                    merged.merge(&top);
                    top = merged;
                    Some(top)
                }
                (top, base) => top.or(base),
            },
        }
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub source_lang: String,
    pub target_lang: String,
    pub shots: usize,
    pub languages: Vec<String>,
    pub model_id: String,
    pub lexicon: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    pub pack: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub k: usize,
    pub layer_range: Option<(usize, usize)>,
    pub aggregate: VariantAggregation,
    pub steer_layers: (usize, usize),
    pub k_list: Vec<usize>,
    pub non_overlapping: bool,
    pub plot: bool,
    pub threads: Option<usize>,
    pub language_table: LanguageTable,
}

impl RunConfig {
    /// Precedence: flags, then the output-dir environment variable, then the
    /// config file, then defaults.
    pub fn resolve(
        flags: ConfigLayer,
        file: Option<ConfigLayer>,
        env_out_dir: Option<PathBuf>,
    ) -> Result<Self> {
        let env = ConfigLayer {
            out_dir: env_out_dir,
            ..ConfigLayer::default()
        };
        let layer = flags.over(env.over(file.unwrap_or_default()));
        let task = layer.task.unwrap_or(Task::Translation);
        let (default_src, default_tgt) = match task {
            Task::Translation => ("fr", "ja"),
            Task::Repetition | Task::Cloze => ("ja", "ja"),
        };
        let source_lang = layer.source_lang.unwrap_or_else(|| default_src.into());
        let target_lang = match (layer.target_lang, task) {
            (Some(t), _) => t,
            (None, Task::Translation) => default_tgt.into(),
            (None, _) => source_lang.clone(),
        };
        let mut language_table = LanguageTable::default();
        if let Some(extra) = &layer.language_table {
            language_table.merge(extra);
        }
        let config = RunConfig {
            task,
            source_lang,
            target_lang,
            shots: layer.shots.unwrap_or_else(|| task.default_shots()),
            languages: layer
                .languages
                .unwrap_or_else(|| ["en", "fr", "ja", "zh"].map(String::from).to_vec()),
            model_id: layer.model_id.unwrap_or_else(|| "unknown".into()),
            lexicon: layer.lexicon,
            traces: layer.traces,
            pack: layer.pack,
            out_dir: layer.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            k: layer.k.unwrap_or(10),
            layer_range: layer.layer_range,
            aggregate: layer.aggregate.unwrap_or_default(),
            steer_layers: layer.steer_layers.unwrap_or((26, 40)),
            k_list: layer.k_list.unwrap_or_else(|| vec![1, 5, 10, 20, 50, 100]),
            non_overlapping: layer.non_overlapping.unwrap_or(false),
            plot: layer.plot.unwrap_or(true),
            threads: layer.threads,
            language_table,
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(Error::InvalidConfig("languages must not be empty".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        if let Some((lo, hi)) = self.layer_range {
            if lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "layer range {lo}..{hi} is empty"
                )));
            }
        }
        let (a, b) = self.steer_layers;
        if a >= b {
            return Err(Error::InvalidConfig(format!(
                "steer layers need a < b, got {a}, {b}"
            )));
        }
        Ok(())
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("no {name} path configured")))
    }

    pub fn lexicon_options(&self) -> LexiconOptions {
        LexiconOptions {
            non_overlapping: self.non_overlapping,
        }
    }

    pub fn stem(&self) -> String {
        format!("{}_{}-{}", self.task, self.source_lang, self.target_lang)
    }
}
