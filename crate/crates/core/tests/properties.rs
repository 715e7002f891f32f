use lesionbench::phenotype::classify_lesion_voxels;
use lesionbench::ranking::{rank, rank_column};
use lesionbench::stats::{benjamini_hochberg, bland_altman, pearson_r};
use lesionbench::{
    connected_components, dice, Connectivity, Grid, Metric, MetricMatrix, RankingScheme, VoxelMask,
};
use proptest::prelude::*;

fn mask_pair() -> impl Strategy<Value = (Grid, Vec<u8>, Vec<u8>)> {
    (2usize..9, 2usize..9, 1usize..6).prop_flat_map(|(x, y, z)| {
        let n = x * y * z;
        (
            Just(Grid::unit([x, y, z])),
            prop::collection::vec(0u8..=1, n),
            prop::collection::vec(0u8..=1, n),
        )
    })
}

fn team_matrix() -> impl Strategy<Value = (usize, usize, Vec<[f64; 4]>)> {
    (2usize..6, 1usize..8).prop_flat_map(|(t, c)| {
        let cell = (0.0f64..1.0, 0.0f64..50.0, 0.0f64..1.0, 0u8..5).prop_map(|(a, b, c, d)| [a, b, c, f64::from(d)]);
        (Just(t), Just(c), prop::collection::vec(cell, t * c))
    })
}

fn build(t: usize, c: usize, values: &[[f64; 4]]) -> MetricMatrix {
    MetricMatrix::new(
        (0..t).map(|i| format!("t{i}")).collect(),
        (0..c).map(|i| format!("c{i}")).collect(),
        values.iter().map(|v| Some(*v)).collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn dice_is_symmetric_and_bounded((grid, a, b) in mask_pair()) {
        let a = VoxelMask::new(grid, a).unwrap();
        let b = VoxelMask::new(grid, b).unwrap();
        let ab = dice(&a, &b).unwrap();
        prop_assert_eq!(ab, dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn coarser_connectivity_never_adds_lesions((grid, a, _b) in mask_pair()) {
        let m = VoxelMask::new(grid, a).unwrap();
        let six = connected_components(&m, Connectivity::Six).lesion_count();
        let eighteen = connected_components(&m, Connectivity::Eighteen).lesion_count();
        let twenty_six = connected_components(&m, Connectivity::TwentySix).lesion_count();
        prop_assert!(six >= eighteen && eighteen >= twenty_six);
    }

    #[test]
    fn lesion_count_is_translation_invariant((grid, a, _b) in mask_pair(), shift in (0usize..3, 0usize..3, 0usize..3)) {
        let m = VoxelMask::new(grid, a).unwrap();
        let [nx, ny, nz] = grid.dims;
        let big = Grid::unit([nx + 3, ny + 3, nz + 3]);
        let moved = VoxelMask::from_fn(big, |x, y, z| {
            x >= shift.0 && y >= shift.1 && z >= shift.2
                && x - shift.0 < nx && y - shift.1 < ny && z - shift.2 < nz
                && m.get(x - shift.0, y - shift.1, z - shift.2)
        });
        for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
            let before = connected_components(&m, conn);
            let after = connected_components(&moved, conn);
            prop_assert_eq!(before.lesion_count(), after.lesion_count());
            let mut sa = before.lesion_voxels().to_vec();
            let mut sb = after.lesion_voxels().to_vec();
            sa.sort_unstable();
            sb.sort_unstable();
            prop_assert_eq!(sa, sb);
        }
    }

    #[test]
    fn pattern_ignores_common_scaling(lesions in prop::collection::vec(1usize..500, 0..7), k in 1usize..20) {
        // Scaling counts by k while shrinking voxels by k keeps every ratio and volume.
        let grid = Grid::new([1, 1, 1], [1.0, 1.0, 10.0]);
        let finer = Grid::new([1, 1, 1], [1.0, 1.0, 10.0 / k as f64]);
        let scaled: Vec<usize> = lesions.iter().map(|n| n * k).collect();
        let a = classify_lesion_voxels(&lesions, &grid);
        let b = classify_lesion_voxels(&scaled, &finer);
        // Volumes may differ in the last bit; stay clear of the 5 ml edge.
        prop_assume!((a.total_volume_ml - 5.0).abs() > 1e-9);
        prop_assert_eq!(a.label, b.label);
        prop_assert_eq!(a.lesion_count, b.lesion_count);
    }

    #[test]
    fn benjamini_hochberg_is_monotone_and_beats_bonferroni(p in prop::collection::vec(0.0f64..=1.0, 1..40), alpha in 0.001f64..0.2) {
        let adj = benjamini_hochberg(&p, alpha).unwrap();
        let m = p.len() as f64;
        for i in 0..p.len() {
            prop_assert!(adj.adjusted[i] >= p[i] - 1e-15);
            prop_assert!(adj.adjusted[i] <= 1.0);
            if p[i] * m <= alpha {
                prop_assert!(adj.reject[i]);
            }
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    prop_assert!(adj.adjusted[i] <= adj.adjusted[j]);
                }
            }
        }
    }

    #[test]
    fn pearson_is_affine_invariant(
        xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        a in 0.1f64..10.0, b in -50.0f64..50.0, c in 0.1f64..10.0, d in -50.0f64..50.0,
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        if let Ok(r) = pearson_r(&x, &y) {
            let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let y2: Vec<f64> = y.iter().map(|v| c * v + d).collect();
            prop_assert!((pearson_r(&x2, &y2).unwrap() - r).abs() < 1e-9);
            let neg: Vec<f64> = y.iter().map(|v| -c * v).collect();
            prop_assert!((pearson_r(&x, &neg).unwrap() + r).abs() < 1e-9);
        }
    }

    #[test]
    fn bland_altman_swap_negates(pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..40)) {
        let r: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let q: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let ab = bland_altman(&r, &q).unwrap();
        let ba = bland_altman(&q, &r).unwrap();
        prop_assert!((ab.mean_diff + ba.mean_diff).abs() < 1e-9);
        prop_assert!((ab.sd_diff - ba.sd_diff).abs() < 1e-9);
        prop_assert!((ab.loa_low + ba.loa_high).abs() < 1e-9);
        prop_assert!(ab.loa_low <= ab.mean_diff && ab.mean_diff <= ab.loa_high);
    }

    #[test]
    fn rank_columns_sum_to_triangular_number(values in prop::collection::vec(0u8..6, 1..30)) {
        let v: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
        let n = v.len() as f64;
        for metric in Metric::ALL {
            let r = rank_column(&v, metric);
            prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
            prop_assert!(r.iter().all(|&x| (1.0..=n).contains(&x)));
        }
    }

    #[test]
    fn team_order_does_not_matter((t, c, values) in team_matrix(), seed in any::<u64>()) {
        let m = build(t, c, &values);
        let mut order: Vec<usize> = (0..t).collect();
        // Deterministic shuffle from the seed.
        let mut s = seed;
        for i in (1..t).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let p = m.permute_teams(&order);
        for scheme in [RankingScheme::RankThenAggregate, "aggregate-then-rank".parse().unwrap()] {
            let a = rank(&m, scheme).unwrap();
            let b = rank(&p, scheme).unwrap();
            for (k, &old) in order.iter().enumerate() {
                prop_assert_eq!(b.final_positions[k], a.final_positions[old]);
                prop_assert_eq!(b.aggregate_rank_score[k], a.aggregate_rank_score[old]);
            }
        }
    }
}
