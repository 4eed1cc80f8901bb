//! Parallel multilingual lexicon and the prompts built from it.

mod prompt;
mod variants;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use prompt::{
    build_cloze_prompt, build_prompt, build_repetition_prompt, build_translation_prompt,
    LanguageInfo, LanguageTable, PromptSpec, Task,
};
pub use variants::{answer_variants, TokenizerProbe, VariantAggregation};

/// Placeholder that stands in for the concept word in a cloze description.
pub const BLANK_MARKER: &str = "__";

/// Languages every lexicon must provide columns for.
pub const CORE_LANGUAGES: [&str; 4] = ["en", "fr", "ja", "zh"];

/// One concept rendered in several languages, with optional cloze
/// descriptions per language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub concept_id: String,
    pub forms: BTreeMap<String, String>,
    pub cloze: BTreeMap<String, String>,
    /// 1-based line in the source file (0 for entries built in code).
    #[serde(skip)]
    pub row: usize,
}

impl LexiconEntry {
    pub fn form(&self, lang: &str) -> Option<&str> {
        self.forms
            .get(lang)
            .map(String::as_str)
            .filter(|f| !f.is_empty())
    }

    pub fn require_form(&self, lang: &str) -> Result<&str> {
        self.form(lang).ok_or_else(|| Error::MissingForm {
            concept_id: self.concept_id.clone(),
            row: self.row,
            lang: lang.to_string(),
        })
    }

    pub fn validate(&self, non_overlapping: bool) -> Result<()> {
        for (lang, text) in &self.cloze {
            let count = text.matches(BLANK_MARKER).count();
            if count != 1 {
                return Err(Error::BlankMarker {
                    concept_id: self.concept_id.clone(),
                    row: self.row,
                    lang: lang.clone(),
                    count,
                });
            }
        }
        if non_overlapping {
            if let (Some(ja), Some(zh)) = (self.form("ja"), self.form("zh")) {
                let shared = shared_characters(ja, zh);
                if !shared.is_empty() {
                    return Err(Error::ScriptOverlap {
                        concept_id: self.concept_id.clone(),
                        row: self.row,
                        shared,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Characters occurring in both strings, in sorted order.
pub fn shared_characters(a: &str, b: &str) -> String {
    let a: BTreeSet<char> = a.chars().collect();
    let b: HashSet<char> = b.chars().collect();
    a.into_iter().filter(|c| b.contains(c)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LexiconOptions {
    /// Reject entries whose ja and zh forms share any character.
    pub non_overlapping: bool,
}

/// Loads a tab-separated lexicon with header
/// `concept_id en fr ja zh cloze_en cloze_fr cloze_ja cloze_zh`.
/// Additional `<lang>` / `cloze_<lang>` columns are accepted. Empty cells mean
/// "absent".
pub fn load_lexicon(path: impl AsRef<Path>, options: &LexiconOptions) -> Result<Vec<LexiconEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(text.trim_start_matches('\u{feff}'), path, options)
}

pub fn parse_lexicon(
    text: &str,
    path: &Path,
    options: &LexiconOptions,
) -> Result<Vec<LexiconEntry>> {
    let malformed = |row: usize, reason: String| Error::MalformedRow {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let headers: Vec<&str> = headers.iter().map(str::trim).collect();
    if headers.first() != Some(&"concept_id") {
        return Err(malformed(1, "first column must be concept_id".into()));
    }
    for lang in CORE_LANGUAGES {
        for column in [lang.to_string(), format!("cloze_{lang}")] {
            if !headers.contains(&column.as_str()) {
                return Err(malformed(1, format!("missing column {column}")));
            }
        }
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            malformed(row, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let concept_id = record[0].trim().to_string();
        if concept_id.is_empty() {
            return Err(malformed(row, "empty concept_id".into()));
        }
        let mut forms = BTreeMap::new();
        let mut cloze = BTreeMap::new();
        for (column, value) in headers.iter().zip(record.iter()).skip(1) {
            let value = value.trim();
            if value.is_empty() {
                continue;
            }
            match column.strip_prefix("cloze_") {
                Some(lang) => cloze.insert(lang.to_string(), value.to_string()),
                None => forms.insert(column.to_string(), value.to_string()),
            };
        }
        let entry = LexiconEntry {
            concept_id,
            forms,
            cloze,
            row,
        };
        if !seen.insert(entry.concept_id.clone()) {
            return Err(Error::DuplicateConcept {
                concept_id: entry.concept_id,
                row,
            });
        }
        entry.validate(options.non_overlapping)?;
        entries.push(entry);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "concept_id\ten\tfr\tja\tzh\tcloze_en\tcloze_fr\tcloze_ja\tcloze_zh\n";

    fn parse(body: &str) -> Result<Vec<LexiconEntry>> {
        parse_lexicon(
            &format!("{HEADER}{body}"),
            Path::new("lex.tsv"),
            &LexiconOptions::default(),
        )
    }

    #[test]
    fn framed_row_loads_with_four_forms() {
        let entries = parse(
            "principle\tprinciple\tprincipe\t原則\t原则\t\t\t\"__\"は、基本的なルールや信念です。\t\n",
        )
        .unwrap();
        assert_eq!(entries.len(), 1);
        let e = &entries[0];
        assert_eq!(e.forms.len(), 4);
        assert_eq!(e.form("fr"), Some("principe"));
        assert_eq!(e.form("zh"), Some("原则"));
        assert_eq!(e.cloze["ja"], "\"__\"は、基本的なルールや信念です。");
        assert_eq!(e.row, 2);
    }

    #[test]
    fn many_rows_load_in_order() {
        let body: String = (0..166)
            .map(|i| format!("c{i}\tword{i}\tmot{i}\tア{i}\t丁{i}\t\t\t\t\n"))
            .collect();
        let entries = parse(&body).unwrap();
        assert_eq!(entries.len(), 166);
        assert_eq!(entries[165].concept_id, "c165");
    }

    #[test]
    fn identical_ja_zh_forms_overlap() {
        let strict = LexiconOptions {
            non_overlapping: true,
        };
        let text = format!("{HEADER}p\tprinciple\tprincipe\t原則\t原則\t\t\t\t\n");
        let err = parse_lexicon(&text, Path::new("lex.tsv"), &strict).unwrap_err();
        assert!(
            matches!(err, Error::ScriptOverlap { ref shared, .. } if shared == "則原"),
            "{err}"
        );
    }

    #[test]
    fn duplicate_ids_and_bad_rows_are_rejected() {
        let err = parse("a\tx\tx\tア\t丁\t\t\t\t\na\ty\ty\tイ\t七\t\t\t\t\n").unwrap_err();
        assert!(
            matches!(err, Error::DuplicateConcept { row: 3, .. }),
            "{err}"
        );
        let err = parse("a\tx\tx\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }), "{err}");
    }

    #[test]
    fn cloze_needs_exactly_one_blank() {
        let err = parse("a\tx\tx\tア\t丁\tno blank here\t\t\t\n").unwrap_err();
        assert!(matches!(err, Error::BlankMarker { count: 0, .. }), "{err}");
        let err = parse("a\tx\tx\tア\t丁\t__ and __\t\t\t\n").unwrap_err();
        assert!(matches!(err, Error::BlankMarker { count: 2, .. }), "{err}");
    }

    #[test]
    fn missing_column_is_reported() {
        let err = parse_lexicon(
            "concept_id\ten\tfr\n",
            Path::new("x"),
            &LexiconOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 1, .. }));
    }

    #[test]
    fn shared_characters_is_sorted_and_unique() {
        assert_eq!(shared_characters("abca", "cxa"), "ac");
        assert_eq!(shared_characters("音楽", "音乐"), "音");
    }
}
