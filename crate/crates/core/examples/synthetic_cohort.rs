//! Write a synthetic 20-case, 4-algorithm cohort with a CSV manifest.
//!
//! ```text
//! cargo run -p lesionbench --example synthetic_cohort -- /tmp/cohort
//! lesionbench eval --manifest /tmp/cohort/manifest.csv --out /tmp/cohort/eval
//! ```

use std::path::PathBuf;

use lesionbench::synth::{write_cohort, CohortSpec};

fn main() -> lesionbench::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("lesionbench-cohort"));
    let manifest = write_cohort(&dir, &CohortSpec::default())?;
    println!("{}", manifest.display());
    Ok(())
}
