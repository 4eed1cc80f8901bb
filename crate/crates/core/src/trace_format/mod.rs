//! On-disk activation-trace format.
//!
//! ```text
//! pack/meta.json            model id, L, d, V, norm kind and epsilon
//! pack/unembed.f32          V × d, little-endian f32, row-major
//! pack/norm_weight.f32      d
//! pack/norm_bias.f32        d (layernorm only)
//! pack/vocab.json           optional token strings
//! traces/<id>/meta.json     prompt ids, stored positions, answer spans
//! traces/<id>/hidden.f32    (L+1) × |positions| × d  (or hidden.f16)
//! ```

mod coverage;
mod pack;
pub mod tensor_io;
mod trace;

pub use coverage::{validate_corpus_coverage, validate_manifest_coverage, CoverageReport};
pub use pack::{
    read_model_pack, write_model_pack, ModelPack, NormKind, PackMeta, PACK_FORMAT_VERSION,
};
pub use tensor_io::Precision;
pub use trace::{
    read_corpus, read_trace, trace_dirs, write_trace, ActivationTrace, AnswerSpan, TraceMeta,
    TRACE_FORMAT_VERSION,
};
