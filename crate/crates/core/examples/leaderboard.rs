//! Rank four teams both ways, bootstrap the ranking and test team pairs.

use lesionbench::ranking::{leaderboard, Aggregator, LeaderboardOptions, Metric};
use lesionbench::{MetricMatrix, RankingScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let teams = ["north", "south", "east", "west"];
    let skill: [f64; 4] = [0.80, 0.74, 0.72, 0.60];
    let n_cases = 40;
    let mut values = Vec::new();
    for s in skill {
        for _ in 0..n_cases {
            let dsc: f64 = (s + rng.random_range(-0.15..0.15)).clamp(0.0, 1.0);
            let f1: f64 = (s - 0.1 + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0);
            let avd = (1.0 - dsc) * rng.random_range(5.0..25.0);
            let ald = rng.random_range(0..=((1.0 - f1) * 6.0) as u32);
            values.push(Some([dsc, avd, f1, f64::from(ald)]));
        }
    }
    let cases = (0..n_cases).map(|c| format!("case{c:02}")).collect();
    let m = MetricMatrix::new(teams.map(String::from).to_vec(), cases, values)?;

    let median = RankingScheme::AggregateThenRank { aggregator: Aggregator::Median };
    for scheme in [RankingScheme::RankThenAggregate, median] {
        let table = leaderboard(&m, LeaderboardOptions { scheme, bootstrap: Some((500, 7)), alpha: Some(0.05) })?;
        println!("{scheme:?}");
        let boot = table.bootstrap.as_ref().expect("requested");
        for t in 0..teams.len() {
            println!(
                "  #{} {:<6} score {:.3}  bootstrap mean position {:.2} (first in {}/500)",
                table.final_positions[t], teams[t], table.aggregate_rank_score[t], boot.mean_position[t], boot.histogram[t][0]
            );
        }
    }

    let table = leaderboard(&m, LeaderboardOptions { scheme: RankingScheme::RankThenAggregate, bootstrap: None, alpha: Some(0.05) })?;
    let dsc = table.significance.as_ref().expect("requested").iter().find(|s| s.metric == Metric::Dsc).expect("all metrics");
    println!("pairs with significantly different DSC:");
    for i in 0..teams.len() {
        for j in (i + 1)..teams.len() {
            if dsc.reject[i][j] {
                println!("  {} vs {} (adjusted p {:.2e})", teams[i], teams[j], dsc.adjusted[i][j]);
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
