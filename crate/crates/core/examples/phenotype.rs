//! Stroke pattern and vascular territory of synthetic lesions.

use std::collections::BTreeMap;

use lesionbench::synth::{rasterize, Ellipsoid};
use lesionbench::{classify_pattern, connected_components, territory_assignment, Connectivity, Grid, Territory, TerritoryAtlas};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::new([60, 60, 30], [2.0, 2.0, 4.0]);
    let ball = |c: [f64; 3], r: f64| Ellipsoid { center: c, radii: [r, r, r / 2.0] };

    // A toy atlas: five slabs along x, one per territory.
    let labels: Vec<i64> = (0..grid.len()).map(|i| (grid.coords(i)[0] / 12) as i64 + 1).collect();
    let legend: BTreeMap<i64, Territory> = (1..=5).zip(Territory::ALL).collect();
    let atlas = TerritoryAtlas::new(grid, &labels, &legend)?;

    let scans = [
        ("one large infarct", vec![ball([18.0, 30.0, 15.0], 9.0)]),
        ("large plus satellites", vec![ball([18.0, 30.0, 15.0], 8.0), ball([40.0, 10.0, 8.0], 3.0), ball([50.0, 50.0, 20.0], 3.0)]),
        ("scattered", vec![ball([10.0, 10.0, 10.0], 2.0), ball([30.0, 30.0, 15.0], 2.0), ball([50.0, 50.0, 20.0], 2.0), ball([30.0, 50.0, 6.0], 1.5)]),
        ("none", vec![]),
    ];
    for (name, blobs) in scans {
        let labeling = connected_components(&rasterize(grid, &blobs), Connectivity::TwentySix);
        let p = classify_pattern(&labeling);
        let territory = territory_assignment(&labeling, &atlas)
            .map(|a| format!("{}{}", a.territory, if a.tie_flag { " (tie)" } else { "" }))
            .unwrap_or_else(|_| "-".into());
        println!(
            "{name:<22} {:<17} {} lesions, {:.2} ml, largest {:.0}%, territory {territory}",
            p.label.name(),
            p.lesion_count,
            p.total_volume_ml,
            100.0 * p.largest_fraction
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
