//! Evaluation engine for volumetric ischemic-lesion segmentation.
//!
//! The crate is organized bottom-up:
//!
//! - [`nifti`]: NIfTI-1 reading and writing, binary mask loading.
//! - [`mask`] and [`voxel`]: voxel grids, masks, connected-component labeling.
//! - [`metrics`]: Dice, absolute volume difference, lesion-wise F1 and
//!   absolute lesion count difference per case.
//! - [`ensemble`]: majority-vote fusion of candidate masks.
//! - [`ranking`]: leaderboards, bootstrap stability and significance maps.
//! - [`stats`]: Wilcoxon tests, Benjamini-Hochberg, Pearson, Bland-Altman.
//! - [`phenotype`]: stroke pattern, vascular territory, classification scores.
//! - [`cohort`]: manifests, batch evaluation and subgroup analysis.
//! - [`synth`]: synthetic cohorts for demos and benchmarks.
//!
//! ```
//! use lesionbench::{evaluate_case, Connectivity, Grid, VoxelMask};
//!
//! let grid = Grid::new([8, 8, 8], [1.0, 1.0, 2.0]);
//! let gt = VoxelMask::from_fn(grid, |x, y, z| x < 4 && y < 4 && z < 2);
//! let pred = VoxelMask::from_fn(grid, |x, y, z| x < 4 && y < 2 && z < 2);
//! let m = evaluate_case(&gt, &pred, Connectivity::TwentySix).unwrap();
//! assert!((m.dsc - 2.0 / 3.0).abs() < 1e-12);
//! assert_eq!(m.ald, 0);
//! ```

pub mod cohort;
pub mod ensemble;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod nifti;
pub mod phenotype;
pub mod ranking;
pub mod stats;
pub mod synth;
pub mod voxel;

pub use cohort::{evaluate_cohort, load_manifest, size_bin, subgroup_analysis, CohortOptions, Manifest, SizeBin};
pub use ensemble::{majority_vote, vote_count_map, VoteStack};
pub use error::{Error, Result};
pub use mask::{Grid, VoxelMask};
pub use metrics::{ald, avd, dice, evaluate_case, lesion_f1, CaseMetrics};
pub use nifti::{read_mask, read_volume, write_mask, write_volume, VolumeHeader};
pub use phenotype::{classification_report, classify_pattern, territory_assignment, PatternLabel, Territory, TerritoryAtlas};
pub use ranking::{aggregate_then_rank, bootstrap_ranks, rank_then_aggregate, significance_map, Metric, MetricMatrix, RankTable, RankingScheme};
pub use voxel::{connected_components, mask_volume_ml, Connectivity, LesionLabeling};
