use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{LexiconEntry, BLANK_MARKER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Translation,
    Repetition,
    Cloze,
}

impl Task {
    /// 4-shot for translation and repetition, 2-shot for cloze.
    pub fn default_shots(self) -> usize {
        match self {
            Task::Translation | Task::Repetition => 4,
            Task::Cloze => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Translation => "translation",
            Task::Repetition => "repetition",
            Task::Cloze => "cloze",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translation" => Ok(Task::Translation),
            "repetition" => Ok(Task::Repetition),
            "cloze" => Ok(Task::Cloze),
            other => Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

/// How a language is rendered in prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageInfo {
    /// Label before the colon, e.g. `日本語`.
    pub display: String,
    /// Text between a cloze description and the opening answer quote,
    /// including any leading separator, e.g. `答え:`.
    pub cloze_marker: String,
}

/// Display names and cloze answer markers per language code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageTable(pub BTreeMap<String, LanguageInfo>);

impl Default for LanguageTable {
    fn default() -> Self {
        let rows = [
            ("en", "English", " Answer:"),
            ("fr", "Français", " Réponse:"),
            ("ja", "日本語", "答え:"),
            ("zh", "中文", "答案:"),
        ];
        LanguageTable(
            rows.into_iter()
                .map(|(code, display, marker)| {
                    (
                        code.to_string(),
                        LanguageInfo {
                            display: display.to_string(),
                            cloze_marker: marker.to_string(),
                        },
                    )
                })
                .collect(),
        )
    }
}

impl LanguageTable {
    pub fn get(&self, lang: &str) -> Result<&LanguageInfo> {
        self.0.get(lang).ok_or_else(|| {
            Error::InvalidPrompt(format!("no display name configured for language {lang:?}"))
        })
    }

    /// Overrides or adds entries from `other`.
    pub fn merge(&mut self, other: &LanguageTable) {
        for (code, info) in &other.0 {
            self.0.insert(code.clone(), info.clone());
        }
    }
}

/// A fully resolved prompt request: task, direction, demonstrations and query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub task: Task,
    pub source_lang: String,
    pub target_lang: String,
    pub shots: usize,
    pub shot_entries: Vec<LexiconEntry>,
    pub query_entry: LexiconEntry,
}

impl PromptSpec {
    /// Demonstrations are the first `shots` lexicon entries in file order,
    /// skipping the query.
    pub fn select(
        task: Task,
        source_lang: &str,
        target_lang: &str,
        shots: usize,
        lexicon: &[LexiconEntry],
        query_index: usize,
    ) -> Result<Self> {
        let query_entry = lexicon
            .get(query_index)
            .ok_or_else(|| Error::InvalidPrompt(format!("query index {query_index} out of range")))?
            .clone();
        let shot_entries: Vec<LexiconEntry> = lexicon
            .iter()
            .filter(|e| e.concept_id != query_entry.concept_id)
            .take(shots)
            .cloned()
            .collect();
        if shot_entries.len() < shots {
            return Err(Error::NotEnoughShots {
                requested: shots,
                available: shot_entries.len(),
            });
        }
        Ok(PromptSpec {
            task,
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
            shots,
            shot_entries,
            query_entry,
        })
    }

    fn check(&self, task: Task) -> Result<()> {
        if self.task != task {
            return Err(Error::InvalidPrompt(format!(
                "{} builder called with a {} spec",
                task, self.task
            )));
        }
        if self.shot_entries.len() != self.shots {
            return Err(Error::InvalidPrompt(format!(
                "spec declares {} shots but carries {}",
                self.shots,
                self.shot_entries.len()
            )));
        }
        if self
            .shot_entries
            .iter()
            .any(|e| e.concept_id == self.query_entry.concept_id)
        {
            return Err(Error::InvalidPrompt(format!(
                "query {:?} appears among the demonstrations",
                self.query_entry.concept_id
            )));
        }
        Ok(())
    }
}

fn pair_line(
    src: &LanguageInfo,
    src_form: &str,
    tgt: &LanguageInfo,
    tgt_form: Option<&str>,
) -> String {
    match tgt_form {
        Some(answer) => format!(
            "{}: \"{}\" - {}: \"{}\"",
            src.display, src_form, tgt.display, answer
        ),
        None => format!("{}: \"{}\" - {}: \"", src.display, src_form, tgt.display),
    }
}

fn pair_prompt(spec: &PromptSpec, table: &LanguageTable) -> Result<String> {
    let src = table.get(&spec.source_lang)?;
    let tgt = table.get(&spec.target_lang)?;
    let mut lines = Vec::with_capacity(spec.shots + 1);
    for entry in &spec.shot_entries {
        lines.push(pair_line(
            src,
            entry.require_form(&spec.source_lang)?,
            tgt,
            Some(entry.require_form(&spec.target_lang)?),
        ));
    }
    let query = &spec.query_entry;
    query.require_form(&spec.target_lang)?;
    lines.push(pair_line(
        src,
        query.require_form(&spec.source_lang)?,
        tgt,
        None,
    ));
    Ok(lines.join("\n"))
}

/// `<Src>: "<form>" - <Tgt>: "<form>"` per demonstration, then the query line
/// left open after the target's opening quote.
pub fn build_translation_prompt(spec: &PromptSpec, table: &LanguageTable) -> Result<String> {
    spec.check(Task::Translation)?;
    if spec.source_lang == spec.target_lang {
        return Err(Error::InvalidPrompt(format!(
            "translation needs distinct languages, got {} -> {}",
            spec.source_lang, spec.target_lang
        )));
    }
    pair_prompt(spec, table)
}

/// Same line grammar as translation with one language on both sides.
pub fn build_repetition_prompt(spec: &PromptSpec, table: &LanguageTable) -> Result<String> {
    spec.check(Task::Repetition)?;
    if spec.source_lang != spec.target_lang {
        return Err(Error::InvalidPrompt(format!(
            "repetition needs one language, got {} -> {}",
            spec.source_lang, spec.target_lang
        )));
    }
    pair_prompt(spec, table)
}

fn cloze_description<'a>(entry: &'a LexiconEntry, lang: &str) -> Result<&'a str> {
    let text = entry.cloze.get(lang).ok_or_else(|| Error::BlankMarker {
        concept_id: entry.concept_id.clone(),
        row: entry.row,
        lang: lang.to_string(),
        count: 0,
    })?;
    let count = text.matches(BLANK_MARKER).count();
    if count != 1 {
        return Err(Error::BlankMarker {
            concept_id: entry.concept_id.clone(),
            row: entry.row,
            lang: lang.to_string(),
            count,
        });
    }
    Ok(text)
}

/// One line per demonstration, `<masked description><marker> "<form>"`, then
/// the query description ending after the opening quote.
pub fn build_cloze_prompt(spec: &PromptSpec, table: &LanguageTable) -> Result<String> {
    spec.check(Task::Cloze)?;
    if spec.source_lang != spec.target_lang {
        return Err(Error::InvalidPrompt(format!(
            "cloze is monolingual, got {} -> {}",
            spec.source_lang, spec.target_lang
        )));
    }
    let lang = spec.target_lang.as_str();
    let marker = &table.get(lang)?.cloze_marker;
    let mut lines = Vec::with_capacity(spec.shots + 1);
    for entry in &spec.shot_entries {
        let description = cloze_description(entry, lang)?;
        lines.push(format!(
            "{description}{marker} \"{}\"",
            entry.require_form(lang)?
        ));
    }
    let query = &spec.query_entry;
    query.require_form(lang)?;
    lines.push(format!("{}{marker} \"", cloze_description(query, lang)?));
    Ok(lines.join("\n"))
}

pub fn build_prompt(spec: &PromptSpec, table: &LanguageTable) -> Result<String> {
    match spec.task {
        Task::Translation => build_translation_prompt(spec, table),
        Task::Repetition => build_repetition_prompt(spec, table),
        Task::Cloze => build_cloze_prompt(spec, table),
    }
}
