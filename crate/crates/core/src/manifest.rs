//! Dump manifest: the job list handed to the model-side dumper, and the
//! content hash that ties dumped traces back to the prompts that produced them.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lexicon::{
    answer_variants, build_prompt, LanguageTable, LexiconEntry, PromptSpec, Task,
};
use crate::trace_format::tensor_io::{read_json, write_json};

pub const MANIFEST_VERSION: u32 = 1;

/// Which sequence positions the dumper must store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionPolicy {
    /// Last prompt position plus every answer-span predictor position, all layers.
    FinalPromptAndAnswerSpans,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpJob {
    pub example_id: String,
    pub prompt: String,
    /// Candidate answer strings per language, in preference order.
    pub answers: BTreeMap<String, Vec<String>>,
    pub positions: PositionPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpManifest {
    pub manifest_version: u32,
    pub model_id: String,
    pub task: Task,
    pub source_lang: String,
    pub target_lang: String,
    pub shots: usize,
    pub jobs: Vec<DumpJob>,
    pub content_hash: String,
}

/// The hashed part of a manifest. The model id is deliberately absent so
/// one manifest can be dumped against several models.
#[derive(Serialize)]
struct HashedContent<'a> {
    manifest_version: u32,
    task: Task,
    source_lang: &'a str,
    target_lang: &'a str,
    shots: usize,
    jobs: &'a [DumpJob],
}

impl DumpManifest {
    /// Hex SHA-256 over the canonical JSON of everything but the model id and
    /// the hash itself.
    pub fn compute_hash(&self) -> String {
        let content = HashedContent {
            manifest_version: self.manifest_version,
            task: self.task,
            source_lang: &self.source_lang,
            target_lang: &self.target_lang,
            shots: self.shots,
            jobs: &self.jobs,
        };
        let bytes = serde_json::to_vec(&content).expect("manifest content serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn verify(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for job in &self.jobs {
            if !seen.insert(job.example_id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate example id {:?} in manifest",
                    job.example_id
                )));
            }
        }
        let actual = self.compute_hash();
        if actual != self.content_hash {
            return Err(Error::ManifestDrift {
                expected: actual,
                found: self.content_hash.clone(),
                example_ids: Vec::new(),
            });
        }
        Ok(())
    }
}

/// Everything besides the lexicon that determines a manifest.
#[derive(Debug, Clone)]
pub struct ManifestRequest<'a> {
    pub model_id: &'a str,
    pub task: Task,
    pub source_lang: &'a str,
    pub target_lang: &'a str,
    pub shots: usize,
    pub answer_languages: &'a [String],
    pub languages: &'a LanguageTable,
}

/// One job per lexicon entry, in lexicon order, with answers for every
/// requested language.
pub fn build_manifest(
    lexicon: &[LexiconEntry],
    request: &ManifestRequest<'_>,
) -> Result<DumpManifest> {
    if lexicon.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    let jobs = lexicon
        .iter()
        .enumerate()
        .map(|(index, entry)| {
            let spec = PromptSpec::select(
                request.task,
                request.source_lang,
                request.target_lang,
                request.shots,
                lexicon,
                index,
            )?;
            let prompt = build_prompt(&spec, request.languages)?;
            let mut answers = BTreeMap::new();
            for lang in request.answer_languages {
                entry.require_form(lang)?;
                answers.insert(lang.clone(), answer_variants(entry, lang, None));
            }
            Ok(DumpJob {
                example_id: entry.concept_id.clone(),
                prompt,
                answers,
                positions: PositionPolicy::FinalPromptAndAnswerSpans,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = DumpManifest {
        manifest_version: MANIFEST_VERSION,
        model_id: request.model_id.to_string(),
        task: request.task,
        source_lang: request.source_lang.to_string(),
        target_lang: request.target_lang.to_string(),
        shots: request.shots,
        jobs,
        content_hash: String::new(),
    };
    manifest.content_hash = manifest.compute_hash();
    Ok(manifest)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &DumpManifest) -> Result<()> {
    write_json(path.as_ref(), manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DumpManifest> {
    let manifest: DumpManifest = read_json(path.as_ref())?;
    manifest.verify()?;
    Ok(manifest)
}
