//! Score one predicted mask against a reference mask.
//!
//! ```text
//! cargo run -p lesionbench --example evaluate_case
//! cargo run -p lesionbench --example evaluate_case -- gt.nii.gz pred.nii.gz
//! ```

use lesionbench::nifti::DEFAULT_BINARIZE_TOLERANCE;
use lesionbench::synth::{rasterize, Ellipsoid};
use lesionbench::{evaluate_case, read_mask, Connectivity, Grid, VoxelMask};

fn blob(center: [f64; 3], r: f64) -> Ellipsoid {
    Ellipsoid { center, radii: [r, r, r * 0.6] }
}

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    // A large lesion and a small satellite; the prediction shifts the large
    // one, misses the satellite and adds a spurious spot.
    let grid = Grid::new([48, 48, 24], [1.0, 1.0, 2.0]);
    let gt = rasterize(grid, &[blob([20.0, 20.0, 12.0], 8.0), blob([38.0, 38.0, 12.0], 2.0)]);
    let pred = rasterize(grid, &[blob([22.0, 21.0, 12.0], 8.0), blob([6.0, 40.0, 4.0], 1.5)]);
    report(&gt, &pred)
}

fn report(gt: &VoxelMask, pred: &VoxelMask) -> Result<(), Box<dyn std::error::Error>> {
    for conn in [Connectivity::Six, Connectivity::TwentySix] {
        let m = evaluate_case(gt, pred, conn)?;
        println!(
            "{:>2}-connectivity: DSC {:.3}  AVD {:.2} ml  F1 {:.3}  ALD {}  ({} vs {} lesions)",
            conn.value(),
            m.dsc,
            m.avd_ml,
            m.lesion_f1,
            m.ald,
            m.gt_lesion_count,
            m.pred_lesion_count
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.as_slice() {
        [gt, pred] => report(&read_mask(gt, DEFAULT_BINARIZE_TOLERANCE)?, &read_mask(pred, DEFAULT_BINARIZE_TOLERANCE)?),
        _ => run(),
    }
}
