//! Regenerates the committed test fixtures.
//!
//! `cargo run --example gen_fixtures [-- <dir>]`, default `tests/fixtures`.

use std::path::PathBuf;

fn main() -> Result<(), latentlens::Error> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    latentlens::fixtures::write_fixture_set(&dir)?;
    println!("{}", dir.display());
    Ok(())
}
