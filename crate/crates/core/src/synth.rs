//! Synthetic lesion cohorts for demos, benchmarks and tests.
//!
//! Lesions are unions of axis-aligned ellipsoids in voxel coordinates.
//! Candidate segmentations are derived from the reference by jittering each
//! ellipsoid, occasionally missing a lesion and occasionally adding a false
//! positive, with the amount of damage set per algorithm.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohort::Phase;
use crate::error::{Error, Result};
use crate::mask::{Grid, VoxelMask};
use crate::nifti::{self, DataType, Samples, VolumeHeader};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Rasterize the union of `blobs`.
pub fn rasterize(grid: Grid, blobs: &[Ellipsoid]) -> VoxelMask {
    let mut mask = VoxelMask::zeros(grid);
    for b in blobs {
        let lo = |a: usize| ((b.center[a] - b.radii[a]).floor().max(0.0)) as usize;
        let hi = |a: usize| ((b.center[a] + b.radii[a]).ceil().max(0.0) as usize).min(grid.dims[a].saturating_sub(1));
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                for x in lo(0)..=hi(0) {
                    if b.contains([x as f64, y as f64, z as f64]) {
                        mask.set(x, y, z, true);
                    }
                }
            }
        }
    }
    mask
}

/// How far a synthetic algorithm strays from the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmProfile {
    pub name: String,
    /// Standard deviation-like jitter of centres and radii, in voxels.
    pub jitter: f64,
    /// Probability of missing each reference lesion.
    pub miss_rate: f64,
    /// Probability of adding one false-positive blob per case.
    pub false_positive_rate: f64,
}

impl AlgorithmProfile {
    pub fn new(name: &str, jitter: f64, miss_rate: f64, false_positive_rate: f64) -> Self {
        AlgorithmProfile {
            name: name.into(),
            jitter,
            miss_rate,
            false_positive_rate,
        }
    }
}

/// Four algorithms of decreasing quality.
pub fn default_profiles() -> Vec<AlgorithmProfile> {
    vec![
        AlgorithmProfile::new("alpha", 0.4, 0.02, 0.05),
        AlgorithmProfile::new("beta", 0.8, 0.05, 0.15),
        AlgorithmProfile::new("gamma", 1.2, 0.10, 0.25),
        AlgorithmProfile::new("delta", 1.8, 0.20, 0.40),
    ]
}

fn sym(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    rng.random_range(-1.0..=1.0) * scale
}

/// Reference lesions for one case: one dominant lesion plus up to four
/// satellites, sometimes none at all.
pub fn random_lesions(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<Ellipsoid> {
    if rng.random_bool(0.05) {
        return Vec::new();
    }
    let d = grid.dims.map(|n| n as f64);
    let margin = |rng: &mut ChaCha8Rng, a: usize, r: f64| rng_range(rng, r + 1.0, (d[a] - r - 2.0).max(r + 1.0));
    let main_r = rng.random_range(2.0..(d[0].min(d[1]) / 5.0).max(2.5));
    let main = Ellipsoid {
        center: [margin(rng, 0, main_r), margin(rng, 1, main_r), margin(rng, 2, main_r * 0.6)],
        radii: [main_r, main_r * rng.random_range(0.7..1.3), main_r * rng.random_range(0.4..0.8)],
    };
    let mut out = vec![main];
    let satellites = rng.random_range(0..=4);
    for _ in 0..satellites {
        let r = rng.random_range(1.0..2.2);
        out.push(Ellipsoid {
            center: [margin(rng, 0, r), margin(rng, 1, r), margin(rng, 2, r)],
            radii: [r, r, r],
        });
    }
    out
}

fn rng_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// A candidate segmentation derived from `reference`.
pub fn perturb(grid: &Grid, reference: &[Ellipsoid], profile: &AlgorithmProfile, rng: &mut ChaCha8Rng) -> Vec<Ellipsoid> {
    let mut out = Vec::new();
    for e in reference {
        if rng.random_bool(profile.miss_rate.clamp(0.0, 1.0)) {
            continue;
        }
        let j = profile.jitter;
        out.push(Ellipsoid {
            center: [
                e.center[0] + sym(rng, j),
                e.center[1] + sym(rng, j),
                e.center[2] + sym(rng, j * 0.5),
            ],
            radii: e.radii.map(|r| (r + sym(rng, j * 0.6)).max(0.6)),
        });
    }
    if rng.random_bool(profile.false_positive_rate.clamp(0.0, 1.0)) {
        let d = grid.dims.map(|n| n as f64);
        let r = rng.random_range(0.8..1.8);
        out.push(Ellipsoid {
            center: [rng_range(rng, 1.0, d[0] - 2.0), rng_range(rng, 1.0, d[1] - 2.0), rng_range(rng, 0.0, d[2] - 1.0)],
            radii: [r, r, r],
        });
    }
    out
}

/// A smooth head-like intensity volume with brighter lesions, for renderings.
pub fn synthetic_image(grid: &Grid, lesions: &VoxelMask) -> Vec<f32> {
    let [nx, ny, nz] = grid.dims;
    let c = [nx as f64 / 2.0, ny as f64 / 2.0, nz as f64 / 2.0];
    let mut out = Vec::with_capacity(grid.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let r2 = ((x as f64 - c[0]) / (0.45 * nx as f64)).powi(2)
                    + ((y as f64 - c[1]) / (0.45 * ny as f64)).powi(2)
                    + ((z as f64 - c[2]) / (0.48 * nz as f64)).powi(2);
                let mut v = if r2 <= 1.0 { 300.0 + 80.0 * (1.0 - r2) } else { 0.0 };
                if lesions.get(x, y, z) {
                    v += 350.0;
                }
                out.push(v as f32);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CohortSpec {
    pub n_cases: usize,
    pub dims: [usize; 3],
    pub spacing_mm: [f32; 3],
    pub algorithms: Vec<AlgorithmProfile>,
    pub seed: u64,
    /// Also write a background image per case.
    pub with_images: bool,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_cases: 20,
            dims: [64, 64, 40],
            spacing_mm: [2.0, 2.0, 2.0],
            algorithms: default_profiles(),
            seed: 2022,
            with_images: true,
        }
    }
}

/// Write a synthetic cohort under `dir` and return the path of its CSV
/// manifest. Paths in the manifest are relative to `dir`.
pub fn write_cohort(dir: &Path, spec: &CohortSpec) -> Result<PathBuf> {
    let grid = Grid::new(spec.dims, spec.spacing_mm.map(f64::from));
    let cases_dir = dir.join("cases");
    std::fs::create_dir_all(&cases_dir).map_err(|e| Error::io(&cases_dir, e))?;

    let manifest_path = dir.join("manifest.csv");
    let mut rows = Vec::with_capacity(spec.n_cases);
    for k in 0..spec.n_cases {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(k as u64);
        let case_id = format!("case{:03}", k + 1);
        let reference = random_lesions(&grid, &mut rng);
        let gt = rasterize(grid, &reference);
        let gt_rel = format!("cases/{case_id}_gt.nii.gz");
        nifti::write_mask(&gt, dir.join(&gt_rel))?;

        let image_rel = if spec.with_images {
            let rel = format!("cases/{case_id}_dwi.nii.gz");
            let header = VolumeHeader::new(spec.dims, spec.spacing_mm, DataType::F32);
            nifti::write_volume(&header, &Samples::F32(synthetic_image(&grid, &gt)), dir.join(&rel))?;
            rel
        } else {
            String::new()
        };

        let mut preds = Vec::new();
        for profile in &spec.algorithms {
            let blobs = perturb(&grid, &reference, profile, &mut rng);
            let rel = format!("cases/{case_id}_{}.nii.gz", profile.name);
            nifti::write_mask(&rasterize(grid, &blobs), dir.join(&rel))?;
            preds.push(rel);
        }
        let phase = if k % 2 == 0 { Phase::Acute } else { Phase::Subacute };
        rows.push((case_id, gt_rel, image_rel, format!("C{}", k % 3 + 1), phase, k % 3 != 2, rng.random_range(0..25u32), preds));
    }

    let mut f = std::fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["case_id", "gt_path", "image_path", "center_id", "phase", "seen_center", "nihss_admission"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(spec.algorithms.iter().map(|p| format!("pred_{}", p.name)));
    w.write_record(&header)?;
    for (case_id, gt, image, center, phase, seen, nihss, preds) in rows {
        let mut rec = vec![case_id, gt, image, center, phase.to_string(), seen.to_string(), nihss.to_string()];
        rec.extend(preds);
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    f.write_all(&bytes).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}
