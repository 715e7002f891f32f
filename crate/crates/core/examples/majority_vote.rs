//! Fuse three candidate segmentations by majority vote.

use lesionbench::synth::{rasterize, Ellipsoid};
use lesionbench::{evaluate_case, majority_vote, vote_count_map, Connectivity, Grid, VoteStack};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::new([40, 40, 20], [1.0, 1.0, 2.0]);
    let sphere = |c: [f64; 3], r: f64| Ellipsoid { center: c, radii: [r, r, r / 2.0] };
    let gt = rasterize(grid, &[sphere([20.0, 20.0, 10.0], 7.0)]);
    // Each candidate errs differently; every error is outvoted.
    let candidates = vec![
        rasterize(grid, &[sphere([21.0, 20.0, 10.0], 7.0), sphere([5.0, 5.0, 5.0], 2.0)]),
        rasterize(grid, &[sphere([19.0, 21.0, 10.0], 6.5)]),
        rasterize(grid, &[sphere([20.0, 19.0, 10.0], 7.5), sphere([34.0, 34.0, 15.0], 2.0)]),
    ];
    for (k, c) in candidates.iter().enumerate() {
        let m = evaluate_case(&gt, c, Connectivity::TwentySix)?;
        println!("candidate {k}: DSC {:.3}  F1 {:.3}", m.dsc, m.lesion_f1);
    }

    let stack = VoteStack::new(candidates)?;
    let counts = vote_count_map(&stack);
    let mut histogram = [0usize; 4];
    for &n in &counts.counts {
        histogram[n as usize] += 1;
    }
    println!("voxels by vote count 0..=3: {histogram:?}, threshold {}", stack.threshold());

    let fused = majority_vote(&stack);
    let m = evaluate_case(&gt, &fused, Connectivity::TwentySix)?;
    println!("fused:       DSC {:.3}  F1 {:.3}", m.dsc, m.lesion_f1);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
