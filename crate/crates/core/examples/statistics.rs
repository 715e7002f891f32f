//! Paired and unpaired Wilcoxon tests, FDR control and volume agreement.

use lesionbench::stats::{benjamini_hochberg, bland_altman, pearson_r, rank_sum_test, signed_rank_test, Summary};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let before = [0.61, 0.70, 0.55, 0.80, 0.66, 0.72, 0.59, 0.64, 0.75, 0.69];
    let after = [0.66, 0.74, 0.54, 0.85, 0.71, 0.73, 0.65, 0.70, 0.78, 0.70];
    let diffs: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    let t = signed_rank_test(&diffs)?;
    println!("signed-rank: W+ = {}, p = {:.4} ({:?})", t.statistic, t.p_value, t.method);

    let t = rank_sum_test(&before, &after)?;
    println!("rank-sum:    U = {}, p = {:.4} ({:?})", t.statistic, t.p_value, t.method);

    let p = [0.001, 0.008, 0.039, 0.041, 0.042, 0.06, 0.074, 0.205, 0.212, 0.216];
    let adj = benjamini_hochberg(&p, 0.05)?;
    println!("BH rejects {} of {} at 0.05", adj.reject.iter().filter(|&&r| r).count(), p.len());

    let reference = [3.2, 15.0, 42.1, 7.7, 0.9, 22.4, 60.3, 11.8];
    let predicted = [2.9, 16.8, 38.0, 8.1, 1.4, 20.0, 63.9, 10.1];
    println!("Pearson r = {:.4}", pearson_r(&reference, &predicted)?);
    let ba = bland_altman(&reference, &predicted)?;
    println!(
        "Bland-Altman: bias {:.2} ml, limits of agreement [{:.2}, {:.2}] ml",
        ba.mean_diff, ba.loa_low, ba.loa_high
    );
    if let Some(s) = Summary::of(&reference) {
        println!("reference volumes: median {:.1}, IQR {:.1}", s.median, s.iqr);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
