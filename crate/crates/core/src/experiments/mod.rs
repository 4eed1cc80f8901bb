//! Probing experiments over a trace corpus: per-layer language curves with
//! confidence intervals, and the per-layer top-token / entropy probe.

mod curves;
mod probe;
pub mod stats;
mod task;

pub use curves::{group_by_example, language_curves, CurveBundle, ExampleScores, LanguageCurve};
pub use probe::{culture_probe, ProbeRow, ProbeToken};
pub use task::{
    run_task, write_curves_csv, write_examples_csv, write_probe_csv, write_task_outputs,
    TaskConfig, TaskOutput,
};
