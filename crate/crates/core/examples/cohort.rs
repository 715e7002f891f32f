//! Evaluate a synthetic cohort, rank it and break results down by lesion size.
//!
//! ```text
//! cargo run -p lesionbench --example cohort
//! ```

use lesionbench::cohort::{GroupBy, Imputation};
use lesionbench::nifti::DEFAULT_BINARIZE_TOLERANCE;
use lesionbench::ranking::{leaderboard, LeaderboardOptions, Metric};
use lesionbench::synth::{write_cohort, CohortSpec};
use lesionbench::{evaluate_cohort, load_manifest, subgroup_analysis, CohortOptions, Connectivity, RankingScheme};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = CohortSpec { n_cases: 12, dims: [48, 48, 24], with_images: false, ..CohortSpec::default() };
    let manifest = load_manifest(write_cohort(dir.path(), &spec)?)?;
    let algorithms = manifest.algorithms();
    let opts = CohortOptions {
        connectivity: Connectivity::TwentySix,
        workers: 0,
        binarize_tolerance: DEFAULT_BINARIZE_TOLERANCE,
        atlas: None,
    };
    let result = evaluate_cohort(&manifest, &algorithms, &opts)?;
    for (algo, summary) in &result.summaries {
        let dsc = &summary[&Metric::Dsc];
        println!("{algo:<6} median DSC {:.3} (IQR {:.3})", dsc.median, dsc.iqr);
    }

    let matrix = result.metric_matrix(&algorithms, Imputation::Worst)?;
    let opts = LeaderboardOptions { scheme: RankingScheme::RankThenAggregate, bootstrap: None, alpha: None };
    let table = leaderboard(&matrix, opts)?;
    let mut order: Vec<usize> = (0..algorithms.len()).collect();
    order.sort_by_key(|&t| table.final_positions[t]);
    let podium: Vec<&str> = order.iter().map(|&t| algorithms[t].as_str()).collect();
    println!("leaderboard: {podium:?}");

    let rows = result.grouped_rows(&algorithms[0], GroupBy::SizeBin);
    let report = subgroup_analysis(&rows, 0.05)?;
    for g in &report.groups {
        println!("{} by size, {:<10} n={}", algorithms[0], g.group, g.n);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
