mod common;

use std::collections::BTreeMap;
use std::path::Path;

use latentlens::fixtures::{toy_corpus, toy_pack, TOY_LEXICON};
use latentlens::lexicon::{parse_lexicon, LanguageTable, LexiconOptions, Task};
use latentlens::manifest::{build_manifest, read_manifest, write_manifest, ManifestRequest};
use latentlens::trace_format::{
    read_corpus, read_model_pack, read_trace, write_model_pack, write_trace, ActivationTrace,
    Precision,
};
use latentlens::Error;
use proptest::prelude::*;
use serde_json::{json, Value};

fn sample(seed: u64) -> (latentlens::trace_format::ModelPack, ActivationTrace) {
    let pack = toy_pack(seed);
    let trace = toy_corpus(&pack, seed + 1, &["ex".to_string()], Some("h")).remove(0);
    (pack, trace)
}

fn edit_meta(dir: &Path, edit: impl FnOnce(&mut Value)) {
    let path = dir.join("meta.json");
    let mut meta: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    edit(&mut meta);
    std::fs::write(&path, serde_json::to_string_pretty(&meta).unwrap()).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn f32_round_trip_is_exact(seed in 0u64..1_000_000) {
        let (pack, trace) = sample(seed);
        let dir = tempfile::tempdir().unwrap();
        write_model_pack(dir.path().join("pack"), &pack).unwrap();
        write_trace(dir.path().join("t"), &trace, Precision::F32).unwrap();
        let pack2 = read_model_pack(dir.path().join("pack")).unwrap();
        prop_assert_eq!(&pack2, &pack);
        prop_assert_eq!(read_trace(dir.path().join("t"), &pack2).unwrap(), trace);
    }

    #[test]
    fn f16_round_trip_matches_half_rounding(seed in 0u64..1_000_000) {
        let (pack, trace) = sample(seed);
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &trace, Precision::F16).unwrap();
        let back = read_trace(dir.path(), &pack).unwrap();
        for (a, b) in trace.hidden.iter().zip(&back.hidden) {
            prop_assert_eq!(half::f16::from_f32(*a).to_f32(), *b);
        }
    }

    #[test]
    fn truncated_hidden_file_is_rejected(seed in 0u64..1_000_000, cut in 1usize..16) {
        let (pack, trace) = sample(seed);
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &trace, Precision::F32).unwrap();
        let path = dir.path().join("hidden.f32");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - cut]).unwrap();
        let err = read_trace(dir.path(), &pack).unwrap_err();
        prop_assert!(matches!(err, Error::ShapeMismatch { .. }), "{}", err);
    }

    #[test]
    fn non_finite_state_is_rejected(seed in 0u64..1_000_000, idx in 0usize..36, which in 0usize..3) {
        let (pack, trace) = sample(seed);
        let dir = tempfile::tempdir().unwrap();
        let mut bad = trace.clone();
        let idx = idx % bad.hidden.len();
        bad.hidden[idx] = [f32::NAN, f32::INFINITY, f32::NEG_INFINITY][which];
        write_trace(dir.path(), &bad, Precision::F32).unwrap();
        let err = read_trace(dir.path(), &pack).unwrap_err();
        prop_assert!(matches!(err, Error::NonFinite { index, .. } if index == idx), "{}", err);
    }

    #[test]
    fn gapped_span_is_rejected(seed in 0u64..1_000_000) {
        let (pack, trace) = sample(seed);
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &trace, Precision::F32).unwrap();
        let first = trace.positions[0];
        edit_meta(dir.path(), |m| {
            m["answer_spans"]["ja"] = json!([{
                "surface": "原則", "token_ids": [1, 2], "predictor_positions": [first, first + 2]
            }]);
        });
        let err = read_trace(dir.path(), &pack).unwrap_err();
        prop_assert!(matches!(err, Error::SpanNotConsecutive { .. }), "{}", err);
    }

    #[test]
    fn header_dimension_edits_are_rejected(seed in 0u64..1_000_000, field in 0usize..2, bump in 1usize..4) {
        let (pack, trace) = sample(seed);
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &trace, Precision::F32).unwrap();
        let key = ["num_layers", "hidden_dim"][field];
        edit_meta(dir.path(), |m| {
            let v = m[key].as_u64().unwrap() as usize + bump;
            m[key] = json!(v);
        });
        let err = read_trace(dir.path(), &pack).unwrap_err();
        prop_assert!(matches!(err, Error::DimensionMismatch { .. }), "{}", err);
    }
}

#[test]
fn out_of_vocab_token_and_unstored_position_are_rejected() {
    let (pack, trace) = sample(7);
    let dir = tempfile::tempdir().unwrap();
    write_trace(dir.path(), &trace, Precision::F32).unwrap();
    let first = trace.positions[0];
    edit_meta(dir.path(), |m| {
        m["answer_spans"]["en"] =
            json!([{ "surface": "x", "token_ids": [5], "predictor_positions": [first] }]);
    });
    assert!(matches!(
        read_trace(dir.path(), &pack),
        Err(Error::TokenOutOfRange {
            token: 5,
            vocab_size: 5
        })
    ));
    edit_meta(dir.path(), |m| {
        m["answer_spans"]["en"] =
            json!([{ "surface": "x", "token_ids": [1], "predictor_positions": [first + 10] }]);
    });
    assert!(matches!(
        read_trace(dir.path(), &pack),
        Err(Error::SpanPositionMissing { .. })
    ));
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// A pack and trace written the way an external dumper would: hand-made JSON
/// and raw little-endian float arrays.
#[test]
fn externally_written_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let pack_dir = dir.path().join("pack");
    std::fs::create_dir_all(&pack_dir).unwrap();
    std::fs::write(
        pack_dir.join("meta.json"),
        r#"{"format_version": 1, "model_id": "hand/llama-like", "num_layers": 2, "hidden_dim": 4,
            "vocab_size": 5, "norm_kind": "rms", "norm_epsilon": 1e-5}"#,
    )
    .unwrap();
    let unembed: Vec<f32> = (0..20).map(|i| (i as f32 - 10.0) / 8.0).collect();
    std::fs::write(pack_dir.join("unembed.f32"), f32_bytes(&unembed)).unwrap();
    std::fs::write(pack_dir.join("norm_weight.f32"), f32_bytes(&[1.0; 4])).unwrap();
    let pack = read_model_pack(&pack_dir).unwrap();
    assert_eq!(
        (pack.num_layers, pack.hidden_dim, pack.vocab_size),
        (2, 4, 5)
    );
    assert_eq!(pack.token_str(3), "<3>");

    let trace_dir = dir.path().join("traces/0001");
    std::fs::create_dir_all(&trace_dir).unwrap();
    std::fs::write(
        trace_dir.join("meta.json"),
        r#"{"example_id": "0001", "manifest_hash": "abc", "num_layers": 2, "hidden_dim": 4,
            "prompt_token_ids": [0, 1, 2, 3, 4, 0, 1, 2, 3, 4],
            "positions": [9, 10], "hidden_dtype": "f32",
            "answer_spans": {"ja": [{"surface": "原則", "token_ids": [1, 4], "predictor_positions": [9, 10]}],
                             "en": []}}"#,
    )
    .unwrap();
    let hidden: Vec<f32> = (0..3 * 2 * 4).map(|i| (i % 7) as f32 - 3.0).collect();
    std::fs::write(trace_dir.join("hidden.f32"), f32_bytes(&hidden)).unwrap();
    let corpus = read_corpus(dir.path().join("traces"), &pack).unwrap();
    assert_eq!(corpus.len(), 1);
    let t = &corpus[0];
    assert_eq!(t.final_prompt_position(), Some(9));
    assert_eq!(t.effective_sequence_length(), 12);
    assert_eq!(t.hidden_at(1, 10).unwrap(), &hidden[12..16]);
    assert!(t.answer_spans["en"].is_empty());
}

#[test]
fn llama_scale_header_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("meta.json"),
        r#"{"model_id": "meta-llama/Llama-2-13b-hf", "num_layers": 40, "hidden_dim": 5120,
            "vocab_size": 32000, "norm_kind": "rms", "norm_epsilon": 1e-5}"#,
    )
    .unwrap();
    // header check happens before the large tensors are needed
    let err = read_model_pack(dir.path()).unwrap_err();
    assert!(matches!(err, Error::MissingFile { .. }), "{err}");
}

/// The manifest JSON is the contract with the dumper: field names and nesting
/// are fixed.
#[test]
fn manifest_json_layout() {
    let lexicon = parse_lexicon(
        TOY_LEXICON,
        Path::new("toy.tsv"),
        &LexiconOptions::default(),
    )
    .unwrap();
    let langs: Vec<String> = ["en", "fr", "ja", "zh"].map(String::from).to_vec();
    let table = LanguageTable::default();
    let manifest = build_manifest(
        &lexicon,
        &ManifestRequest {
            model_id: "m",
            task: Task::Translation,
            source_lang: "fr",
            target_lang: "ja",
            shots: 4,
            answer_languages: &langs,
            languages: &table,
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    write_manifest(&path, &manifest).unwrap();
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = vec![
        "content_hash",
        "jobs",
        "manifest_version",
        "model_id",
        "shots",
        "source_lang",
        "target_lang",
        "task",
    ];
    expected.sort();
    let mut keys_sorted = keys.clone();
    keys_sorted.sort();
    assert_eq!(keys_sorted, expected);
    assert_eq!(v["task"], "translation");
    let job = &v["jobs"][0];
    assert_eq!(job["example_id"], "principle");
    assert_eq!(job["positions"], "final_prompt_and_answer_spans");
    assert!(job["prompt"]
        .as_str()
        .unwrap()
        .ends_with("Français: \"principe\" - 日本語: \""));
    let answers: BTreeMap<String, Vec<String>> =
        serde_json::from_value(job["answers"].clone()).unwrap();
    assert_eq!(answers["ja"][0], "原則");
    assert_eq!(v["content_hash"].as_str().unwrap().len(), 64);
    assert_eq!(read_manifest(&path).unwrap(), manifest);
}
