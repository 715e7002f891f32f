//! A complete blinded rating study run in-process: render a pool of cases,
//! hand out sessions, journal simulated scores and analyse them.
//!
//! ```text
//! cargo run -p lesionbench-turing --example rating_study
//! ```

use lesionbench::synth::{default_profiles, perturb, random_lesions, rasterize};
use lesionbench::Grid;
use lesionbench_turing::export::{export_case, write_pool};
use lesionbench_turing::report::ScoreDistribution;
use lesionbench_turing::session::DEFAULT_ITEMS_PER_RATER;
use lesionbench_turing::{create_sessions, turing_report, CasePool, Dimension, Source, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let renders = dir.path().join("renders");
    let grid = Grid::new([32, 32, 12], [1.0, 1.0, 3.0]);
    let profile = &default_profiles()[0];

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pool = CasePool::default();
    for k in 0..45 {
        let reference = random_lesions(&grid, &mut rng);
        let expert = rasterize(grid, &reference);
        let algorithm = rasterize(grid, &perturb(&grid, &reference, profile, &mut rng));
        pool.cases.push(export_case(&format!("case{k:03}"), None, &expert, &algorithm, &renders)?);
    }
    // Reloading resolves the relative PNG paths against the pool folder.
    let pool = CasePool::load(write_pool(&pool, &renders)?)?;
    println!("pool of {} cases, 6 renderings each", pool.len());

    let raters: Vec<String> = (1..=6).map(|r| format!("rater{r}")).collect();
    let sessions = create_sessions(&pool, &raters, DEFAULT_ITEMS_PER_RATER, 2024)?;
    let store = Store::open(dir.path().join("study"))?;
    store.add_sessions(sessions.clone())?;

    // Raters like the expert outlines a little more than the algorithm's.
    for s in &sessions {
        for item in &s.items {
            let bias = if item.source == Source::Algorithm { 1 } else { 0 };
            let draw = |rng: &mut ChaCha8Rng| (rng.random_range(3..=6) - bias).max(1);
            store.submit_score(&s.session_id, &item.item_id, draw(&mut rng), draw(&mut rng))?;
        }
        store.close_session(&s.session_id)?;
    }

    // Durability: a fresh store over the same folder replays the journal.
    let reopened = Store::open(dir.path().join("study"))?;
    let report = turing_report(&reopened.state().completed_sessions())?;
    println!("{} raters, {} scored items", report.rater_count, report.scored_items);
    for (source, dist) in &report.distributions {
        let mean = |d: &Option<ScoreDistribution>| d.as_ref().map_or(f64::NAN, |d| d.summary.mean);
        println!(
            "{source:?}: {} items, completeness {:.2}, correctness {:.2}",
            dist.n_items,
            mean(&dist.completeness),
            mean(&dist.correctness)
        );
    }
    for (label, tests) in [("paired by rater", &report.paired_by_rater), ("pooled items", &report.pooled_items)] {
        for d in Dimension::ALL {
            if let Some(t) = tests.get(d) {
                println!("{label:<16} {d:?}: n = {}, p = {:.4}", tests.n, t.p_value);
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
