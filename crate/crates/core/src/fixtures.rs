//! Seeded synthetic packs and traces.
//!
//! Everything here is deterministic in its seed (ChaCha8), so the committed
//! fixture directories can be regenerated byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::experiments::{culture_probe, write_probe_csv};
use crate::lexicon::{parse_lexicon, LanguageTable, LexiconOptions, Task};
use crate::manifest::{build_manifest, ManifestRequest};
use crate::steering::{emit_shift_plot, sparsity_profile, ShiftVector};
use crate::trace_format::{
    write_model_pack, write_trace, ActivationTrace, AnswerSpan, ModelPack, NormKind, Precision,
};

pub const TOY_SEED: u64 = 20240601;
pub const OFFSET_SEED: u64 = 40_26;

/// Five-concept lexicon used by the toy fixture corpus.
pub const TOY_LEXICON: &str = "\
concept_id\ten\tfr\tja\tzh\tcloze_en\tcloze_fr\tcloze_ja\tcloze_zh
principle\tprinciple\tprincipe\t原則\t原则\t\"__\" is a basic rule or belief.\t« __ » est une règle ou une croyance de base.\t\"__\"は、基本的なルールや信念です。\t“__”是基本的规则或信念。
music\tmusic\tmusique\t音楽\t音乐\t\"__\" is the art of sound.\t« __ » est l'art des sons.\t\"__\"は、音の芸術です。\t“__”是声音的艺术。
book\tbook\tlivre\t本\t书\t\"__\" is something you read.\t« __ » est quelque chose que l'on lit.\t\"__\"は、読むものです。\t“__”是用来阅读的东西。
station\tstation\tgare\t駅\t车站\t\"__\" is where trains stop.\t« __ » est l'endroit où les trains s'arrêtent.\t\"__\"は、電車が止まる場所です。\t“__”是火车停靠的地方。
photo\tphoto\tphoto\t写真\t照片\t\"__\" is a picture taken with a camera.\t« __ » est une image prise avec un appareil.\t\"__\"は、カメラで撮った画像です。\t“__”是用相机拍的图像。
";

pub const TOY_LANGUAGES: [&str; 4] = ["en", "fr", "ja", "zh"];

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Multiples of 1/64 in `[-range, range]`: exactly representable, so sums and
/// differences of a few of them stay exact in `f32` and `f64`.
fn dyadic(rng: &mut ChaCha8Rng, n: usize, range: i32) -> Vec<f32> {
    (0..n)
        .map(|_| rng.gen_range(-range * 64..=range * 64) as f32 / 64.0)
        .collect()
}

/// Pack with L=2, d=4, V=5 and RMS final norm.
pub fn toy_pack(seed: u64) -> ModelPack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v, d) = (5, 4);
    ModelPack {
        model_id: "toy-l2-d4-v5".into(),
        num_layers: 2,
        hidden_dim: d,
        vocab_size: v,
        norm_kind: NormKind::Rms,
        norm_epsilon: 1e-6,
        norm_weight: (0..d).map(|_| rng.gen_range(0.5f32..1.5)).collect(),
        norm_bias: None,
        unembed: uniform(&mut rng, v * d, 2.0),
        vocab: Some(
            ["▁the", "音", "楽", "▁music", "原"]
                .map(String::from)
                .to_vec(),
        ),
        lens_note: Some("synthetic".into()),
    }
}

/// A trace storing `n_positions` consecutive positions ending the prompt
/// region, with random hidden states and random spans for each language.
pub fn toy_trace(
    pack: &ModelPack,
    rng: &mut ChaCha8Rng,
    example_id: &str,
    n_positions: usize,
    languages: &[&str],
    manifest_hash: Option<String>,
) -> ActivationTrace {
    let prompt_len = rng.gen_range(4..9usize);
    let first = prompt_len - 1;
    let positions: Vec<usize> = (first..first + n_positions).collect();
    let mut answer_spans = BTreeMap::new();
    for lang in languages {
        let variants = rng.gen_range(1..=2usize);
        let spans = (0..variants)
            .map(|vi| {
                let len = rng.gen_range(1..=n_positions);
                AnswerSpan {
                    surface: format!("{lang}-{example_id}-{vi}"),
                    token_ids: (0..len)
                        .map(|_| rng.gen_range(0..pack.vocab_size as u32))
                        .collect(),
                    predictor_positions: (first..first + len).collect(),
                }
            })
            .collect();
        answer_spans.insert(lang.to_string(), spans);
    }
    let n = (pack.num_layers + 1) * n_positions * pack.hidden_dim;
    ActivationTrace {
        example_id: example_id.to_string(),
        manifest_hash,
        num_layers: pack.num_layers,
        hidden_dim: pack.hidden_dim,
        prompt_token_ids: (0..prompt_len)
            .map(|_| rng.gen_range(0..pack.vocab_size as u32))
            .collect(),
        sequence_length: Some(prompt_len + n_positions),
        positions,
        hidden: uniform(rng, n, 2.0),
        answer_spans,
    }
}

/// One three-position trace per id.
pub fn toy_corpus(
    pack: &ModelPack,
    seed: u64,
    ids: &[String],
    manifest_hash: Option<&str>,
) -> Vec<ActivationTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.iter()
        .map(|id| {
            toy_trace(
                pack,
                &mut rng,
                id,
                3,
                &TOY_LANGUAGES,
                manifest_hash.map(str::to_string),
            )
        })
        .collect()
}

/// A model whose block outputs at `layer_b` equal those at `layer_a` plus a
/// fixed vector, for every example.
#[derive(Debug, Clone)]
pub struct ConstantOffsetFixture {
    pub pack: ModelPack,
    pub traces: Vec<ActivationTrace>,
    pub offset: Vec<f64>,
    pub layer_a: usize,
    pub layer_b: usize,
}

pub fn constant_offset_fixture(
    seed: u64,
    num_layers: usize,
    hidden_dim: usize,
    vocab_size: usize,
    n_examples: usize,
    layer_a: usize,
    layer_b: usize,
) -> ConstantOffsetFixture {
    offset_fixture_with(
        seed,
        num_layers,
        hidden_dim,
        vocab_size,
        n_examples,
        (layer_a, layer_b),
        None,
    )
}

/// Like [`constant_offset_fixture`], planting `offset` instead of a random
/// dense one. Offset values should be multiples of 1/64 for exact recovery.
pub fn offset_fixture_with(
    seed: u64,
    num_layers: usize,
    hidden_dim: usize,
    vocab_size: usize,
    n_examples: usize,
    (layer_a, layer_b): (usize, usize),
    offset: Option<Vec<f32>>,
) -> ConstantOffsetFixture {
    assert!(layer_a < layer_b && layer_b <= num_layers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = hidden_dim;
    let pack = ModelPack {
        model_id: format!("offset-l{num_layers}-d{d}-v{vocab_size}"),
        num_layers,
        hidden_dim: d,
        vocab_size,
        norm_kind: NormKind::Rms,
        norm_epsilon: 1e-6,
        norm_weight: (0..d).map(|_| rng.gen_range(0.5f32..1.5)).collect(),
        norm_bias: None,
        unembed: uniform(&mut rng, vocab_size * d, 1.0),
        vocab: Some((0..vocab_size).map(|i| format!("tok{i}")).collect()),
        lens_note: Some("synthetic constant-offset".into()),
    };
    let random_offset = dyadic(&mut rng, d, 1);
    let offset = offset.unwrap_or(random_offset);
    assert_eq!(offset.len(), d);
    let traces = (0..n_examples)
        .map(|i| {
            let prompt_len = rng.gen_range(3..7usize);
            let p = prompt_len - 1;
            let mut hidden = dyadic(&mut rng, (num_layers + 1) * d, 2);
            for j in 0..d {
                hidden[layer_b * d + j] = hidden[layer_a * d + j] + offset[j];
            }
            let mut answer_spans = BTreeMap::new();
            for lang in ["en", "ja"] {
                answer_spans.insert(
                    lang.to_string(),
                    vec![AnswerSpan {
                        surface: format!("{lang}{i}"),
                        token_ids: vec![rng.gen_range(0..vocab_size as u32)],
                        predictor_positions: vec![p],
                    }],
                );
            }
            ActivationTrace {
                example_id: format!("pair{i:02}"),
                manifest_hash: None,
                num_layers,
                hidden_dim: d,
                prompt_token_ids: (0..prompt_len)
                    .map(|_| rng.gen_range(0..vocab_size as u32))
                    .collect(),
                sequence_length: None,
                positions: vec![p],
                hidden,
                answer_spans,
            }
        })
        .collect();
    ConstantOffsetFixture {
        pack,
        traces,
        offset: offset.into_iter().map(f64::from).collect(),
        layer_a,
        layer_b,
    }
}

/// A `d`-dimensional vector with `nnz` nonzero entries at distinct random
/// indices, each a nonzero multiple of 1/64 in `[-4, 4]`.
pub fn sparse_delta(seed: u64, d: usize, nnz: usize) -> Vec<f32> {
    assert!(nnz <= d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut delta = vec![0.0f32; d];
    for i in rand::seq::index::sample(&mut rng, d, nnz) {
        let mut v = 0;
        while v == 0 {
            v = rng.gen_range(-256..=256);
        }
        delta[i] = v as f32 / 64.0;
    }
    delta
}

/// Seed and size of the committed golden shift plot.
pub const GOLDEN_PLOT_SEED: u64 = 64;
pub const GOLDEN_PLOT_DIM: usize = 64;

/// The committed golden shift plot: an 8-sparse shift in 64 dimensions.
pub fn golden_shift_plot() -> String {
    let delta = sparse_delta(GOLDEN_PLOT_SEED, GOLDEN_PLOT_DIM, 8);
    let shift = ShiftVector {
        layer_a: 26,
        layer_b: 40,
        n_examples: 1,
        delta: delta.into_iter().map(f64::from).collect(),
    };
    emit_shift_plot(&sparsity_profile(&shift, &[]), "golden shift d=64")
}

pub const TOY_CONFIG: &str = "\
# toy fixture corpus: French -> Japanese translation over five concepts
task = \"translation\"
source_lang = \"fr\"
target_lang = \"ja\"
shots = 4
languages = [\"en\", \"fr\", \"ja\", \"zh\"]
model_id = \"toy-l2-d4-v5\"
lexicon = \"lexicon.tsv\"
pack = \"pack\"
traces = \"traces\"
k = 3
aggregate = \"max\"
steer_layers = [1, 2]
";

pub const OFFSET_CONFIG: &str = "\
# constant-offset model: block 40 output = block 26 output + fixed vector
pack = \"pack\"
traces = \"traces\"
steer_layers = [26, 40]
k = 5
";

/// Writes the toy corpus (`toy/`), the constant-offset corpus (`offset/`)
/// and golden plot and probe outputs (`golden/`) under `root`.
pub fn write_fixture_set(root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();

    let toy = root.join("toy");
    std::fs::create_dir_all(&toy).map_err(|e| Error::io(&toy, e))?;
    std::fs::write(toy.join("lexicon.tsv"), TOY_LEXICON).map_err(|e| Error::io(&toy, e))?;
    std::fs::write(toy.join("config.toml"), TOY_CONFIG).map_err(|e| Error::io(&toy, e))?;
    let lexicon = parse_lexicon(
        TOY_LEXICON,
        &toy.join("lexicon.tsv"),
        &LexiconOptions::default(),
    )?;
    let languages: Vec<String> = TOY_LANGUAGES.map(String::from).to_vec();
    let table = LanguageTable::default();
    let manifest = build_manifest(
        &lexicon,
        &ManifestRequest {
            model_id: "toy-l2-d4-v5",
            task: Task::Translation,
            source_lang: "fr",
            target_lang: "ja",
            shots: 4,
            answer_languages: &languages,
            languages: &table,
        },
    )?;
    let pack = toy_pack(TOY_SEED);
    write_model_pack(toy.join("pack"), &pack)?;
    let ids: Vec<String> = lexicon.iter().map(|e| e.concept_id.clone()).collect();
    let toy_traces = toy_corpus(&pack, TOY_SEED + 1, &ids, Some(&manifest.content_hash));
    for trace in &toy_traces {
        write_trace(
            toy.join("traces").join(&trace.example_id),
            trace,
            Precision::F32,
        )?;
    }

    let offset = root.join("offset");
    std::fs::create_dir_all(&offset).map_err(|e| Error::io(&offset, e))?;
    std::fs::write(offset.join("config.toml"), OFFSET_CONFIG).map_err(|e| Error::io(&offset, e))?;
    let fx = constant_offset_fixture(OFFSET_SEED, 40, 16, 24, 30, 26, 40);
    write_model_pack(offset.join("pack"), &fx.pack)?;
    for trace in &fx.traces {
        write_trace(
            offset.join("traces").join(&trace.example_id),
            trace,
            Precision::F32,
        )?;
    }

    let golden = root.join("golden");
    std::fs::create_dir_all(&golden).map_err(|e| Error::io(&golden, e))?;
    let path = golden.join("shift_d64.svg");
    std::fs::write(&path, golden_shift_plot()).map_err(|e| Error::io(&path, e))?;
    let rows = culture_probe(&toy_traces[0], &pack, 3)?;
    write_probe_csv(
        &golden.join(format!("probe_{}.csv", toy_traces[0].example_id)),
        &rows,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_valid() {
        let pack = toy_pack(TOY_SEED);
        assert_eq!(pack, toy_pack(TOY_SEED));
        pack.validate().unwrap();
        let ids: Vec<String> = (0..5).map(|i| format!("e{i}")).collect();
        let a = toy_corpus(&pack, 9, &ids, None);
        assert_eq!(a, toy_corpus(&pack, 9, &ids, None));
        for t in &a {
            t.validate(&pack).unwrap();
        }
    }

    #[test]
    fn sparse_delta_has_exact_support() {
        let d = sparse_delta(3, 100, 10);
        assert_eq!(d.iter().filter(|v| **v != 0.0).count(), 10);
        assert_eq!(d, sparse_delta(3, 100, 10));
    }

    #[test]
    fn offset_fixture_plants_exact_offset() {
        let fx = constant_offset_fixture(1, 6, 8, 10, 4, 3, 6);
        let d = 8;
        for t in &fx.traces {
            t.validate(&fx.pack).unwrap();
            for j in 0..d {
                let diff = f64::from(t.hidden[6 * d + j]) - f64::from(t.hidden[3 * d + j]);
                assert_eq!(diff, fx.offset[j]);
            }
        }
    }
}
