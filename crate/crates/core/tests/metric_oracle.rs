mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::{flood_fill, noisy_copy, random_grid, random_mask, rng};
use lesionbench::{connected_components, evaluate_case, Connectivity, Grid, VoxelMask};
use rand::Rng;

struct Naive {
    dsc: f64,
    avd: f64,
    f1: f64,
    ald: u64,
}

/// Metrics straight from their set definitions.
fn naive_metrics(gt: &VoxelMask, pred: &VoxelMask, conn: Connectivity) -> Naive {
    let g: BTreeSet<usize> = (0..gt.data().len()).filter(|&i| gt.data()[i] == 1).collect();
    let p: BTreeSet<usize> = (0..pred.data().len()).filter(|&i| pred.data()[i] == 1).collect();
    let inter = g.intersection(&p).count();
    let dsc = if g.is_empty() && p.is_empty() {
        1.0
    } else {
        2.0 * inter as f64 / (g.len() + p.len()) as f64
    };
    let ml = gt.grid().voxel_volume_mm3() / 1000.0;
    let avd = (p.len() as f64 * ml - g.len() as f64 * ml).abs();

    let (gl, gn) = flood_fill(gt, conn);
    let (pl, pn) = flood_fill(pred, conn);
    let mut tp = 0;
    for lesion in 1..=gn as u32 {
        if (0..gl.len()).any(|i| gl[i] == lesion && pl[i] != 0) {
            tp += 1;
        }
    }
    let mut fp = 0;
    for lesion in 1..=pn as u32 {
        if !(0..pl.len()).any(|i| pl[i] == lesion && gl[i] != 0) {
            fp += 1;
        }
    }
    let fn_ = gn - tp;
    let f1 = if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Naive {
        dsc,
        avd,
        f1,
        ald: gn.abs_diff(pn) as u64,
    }
}

#[test]
fn metrics_match_brute_force_on_200_pairs() {
    let start = Instant::now();
    let mut r = rng(0x15_1e5);
    for case in 0..200 {
        let grid = random_grid(&mut r, 16, 32);
        let gt = random_mask(&mut r, grid);
        let pred = match case % 4 {
            0 => random_mask(&mut r, grid),
            1 => noisy_copy(&mut r, &gt, 0.02),
            2 => gt.clone(),
            _ => VoxelMask::zeros(grid),
        };
        let conn = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix][case % 3];
        let m = evaluate_case(&gt, &pred, conn).unwrap();
        let n = naive_metrics(&gt, &pred, conn);
        assert!((m.dsc - n.dsc).abs() <= 1e-12, "case {case}: dsc {} vs {}", m.dsc, n.dsc);
        assert!((m.lesion_f1 - n.f1).abs() <= 1e-12, "case {case}: f1 {} vs {}", m.lesion_f1, n.f1);
        assert!((m.avd_ml - n.avd).abs() <= 1e-9 * n.avd.max(1.0), "case {case}: avd {} vs {}", m.avd_ml, n.avd);
        assert_eq!(m.ald, n.ald, "case {case}");
    }
    assert!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
}

#[test]
fn union_find_matches_flood_fill_on_200_masks() {
    let mut r = rng(7);
    for k in 0..200 {
        let grid = Grid::unit([16, 16, 16]);
        let mask = random_mask(&mut r, grid);
        for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
            let ours = connected_components(&mask, conn);
            let (theirs, n) = flood_fill(&mask, conn);
            assert_eq!(ours.lesion_count(), n, "mask {k} {conn:?}");
            // Both label in first-voxel raster order, so maps are identical.
            assert_eq!(ours.label_map(), theirs.as_slice(), "mask {k} {conn:?}");
        }
    }
}

#[test]
fn worked_examples() {
    let grid = Grid::unit([8, 1, 1]);
    let line = |on: &[usize]| VoxelMask::from_fn(grid, |x, _, _| on.contains(&x));
    // |GT| = 4, |Pred| = 4, overlap 2.
    let m = evaluate_case(&line(&[0, 1, 2, 3]), &line(&[2, 3, 4, 5]), Connectivity::TwentySix).unwrap();
    assert_eq!(m.dsc, 0.5);
    // Two GT lesions, one hit, one spurious prediction.
    let m = evaluate_case(&line(&[0, 4]), &line(&[0, 7]), Connectivity::TwentySix).unwrap();
    assert_eq!(m.lesion_f1, 0.5);
    assert_eq!(m.ald, 0);
    // 625 voxels of 2 mm isotropic are 5 ml.
    let g2 = Grid::new([25, 25, 1], [2.0, 2.0, 2.0]);
    let full = VoxelMask::from_fn(g2, |_, _, _| true);
    let m = evaluate_case(&full, &VoxelMask::zeros(g2), Connectivity::Six).unwrap();
    assert!((m.gt_volume_ml - 5.0).abs() < 1e-12);
    assert!((m.avd_ml - 5.0).abs() < 1e-12);
    assert_eq!((m.dsc, m.lesion_f1, m.ald), (0.0, 0.0, 1));
}

#[test]
fn random_spacing_does_not_change_ratio_metrics() {
    let mut r = rng(99);
    for _ in 0..20 {
        let dims = [r.random_range(8..16), r.random_range(8..16), r.random_range(8..16)];
        let gt = random_mask(&mut r, Grid::unit(dims));
        let pred = noisy_copy(&mut r, &gt, 0.05);
        let scaled = Grid::new(dims, [0.7, 1.3, 3.0]);
        let gt2 = VoxelMask::new(scaled, gt.data().to_vec()).unwrap();
        let pred2 = VoxelMask::new(scaled, pred.data().to_vec()).unwrap();
        let a = evaluate_case(&gt, &pred, Connectivity::TwentySix).unwrap();
        let b = evaluate_case(&gt2, &pred2, Connectivity::TwentySix).unwrap();
        assert_eq!((a.dsc, a.lesion_f1, a.ald), (b.dsc, b.lesion_f1, b.ald));
        assert!((b.avd_ml - a.avd_ml * 0.7 * 1.3 * 3.0).abs() < 1e-9);
    }
}
