//! Label lesions and compare neighbourhood definitions.
//!
//! Two cubes touching only at a corner are one lesion under 26-connectivity
//! and two under 6- or 18-connectivity.

use lesionbench::{connected_components, Connectivity, Grid, VoxelMask};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::new([10, 10, 10], [1.0, 1.0, 1.0]);
    let cube = |lo: usize, x: usize, y: usize, z: usize| (lo..lo + 3).contains(&x) && (lo..lo + 3).contains(&y) && (lo..lo + 3).contains(&z);
    let mask = VoxelMask::from_fn(grid, |x, y, z| cube(1, x, y, z) || cube(4, x, y, z) || (x, y, z) == (9, 0, 9));

    for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
        let labels = connected_components(&mask, conn);
        println!(
            "{:>2}: {} lesions, voxels per lesion {:?}, total {:.3} ml",
            conn.value(),
            labels.lesion_count(),
            labels.lesion_voxels(),
            labels.total_volume_ml()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
