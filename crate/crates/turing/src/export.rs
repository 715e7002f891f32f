//! Pre-rendered slice images for the rating study.
//!
//! For each case the slices are chosen from the expert mask (the two axial
//! slices and the sagittal slice with the largest lesion area) and the same
//! slices are rendered for both segmentations with the same overlay colour, so
//! neither the slice choice nor the styling depends on the source.

use std::path::{Path, PathBuf};

use image::{imageops, Rgb, RgbImage};
use lesionbench::nifti::Volume;
use lesionbench::stats::percentile;
use lesionbench::{Grid, VoxelMask};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TuringError};
use crate::session::{CasePool, PoolCase, Source};

pub const POOL_FILE: &str = "pool.json";
const OUTLINE: Rgb<u8> = Rgb([255, 40, 40]);
const FILL_ALPHA: f64 = 0.25;
const WINDOW_PERCENTILES: (f64, f64) = (1.0, 99.0);
const MIN_LONG_SIDE: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    /// Fixed z, showing x horizontally and y vertically.
    Axial,
    /// Fixed x, showing y horizontally and z vertically.
    Sagittal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceChoice {
    pub axial: [usize; 2],
    pub sagittal: usize,
}

impl SliceChoice {
    pub fn views(&self) -> [(Plane, usize); 3] {
        [
            (Plane::Axial, self.axial[0]),
            (Plane::Axial, self.axial[1]),
            (Plane::Sagittal, self.sagittal),
        ]
    }
}

fn top_two(area: &[usize]) -> [usize; 2] {
    let mut idx: Vec<usize> = (0..area.len()).collect();
    idx.sort_by(|&a, &b| area[b].cmp(&area[a]).then(a.cmp(&b)));
    let first = idx[0];
    let second = idx.get(1).copied().unwrap_or(first);
    [first.min(second), first.max(second)]
}

/// Slices with the largest lesion area; the central slices for an empty mask.
pub fn choose_slices(mask: &VoxelMask) -> SliceChoice {
    let [nx, ny, nz] = mask.grid().dims;
    if mask.is_empty() {
        let z = nz / 2;
        return SliceChoice {
            axial: [z, (z + 1).min(nz - 1)],
            sagittal: nx / 2,
        };
    }
    let mut axial = vec![0usize; nz];
    let mut sagittal = vec![0usize; nx];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.get(x, y, z) {
                    axial[z] += 1;
                    sagittal[x] += 1;
                }
            }
        }
    }
    let best_x = (0..nx).max_by(|&a, &b| sagittal[a].cmp(&sagittal[b]).then(b.cmp(&a))).unwrap_or(0);
    SliceChoice {
        axial: top_two(&axial),
        sagittal: best_x,
    }
}

/// Intensity window shared by every slice of one scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub low: f64,
    pub high: f64,
}

impl Window {
    pub fn from_values(values: &[f64]) -> Window {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return Window { low: 0.0, high: 1.0 };
        }
        let low = percentile(&finite, WINDOW_PERCENTILES.0);
        let high = percentile(&finite, WINDOW_PERCENTILES.1);
        Window { low, high }
    }

    fn gray(&self, v: f64) -> u8 {
        if self.high <= self.low {
            return if v > self.low { 255 } else { 0 };
        }
        ((v - self.low) / (self.high - self.low)).clamp(0.0, 1.0).mul_add(255.0, 0.5) as u8
    }
}

/// Render one slice with the mask overlaid. Rows run top to bottom with
/// anatomical "up" (+y axial, +z sagittal) at the top; the image is scaled by
/// nearest neighbour so pixels respect the voxel spacing.
pub fn render_slice(
    image: Option<(&[f64], Window)>,
    mask: &VoxelMask,
    plane: Plane,
    index: usize,
) -> RgbImage {
    let grid = *mask.grid();
    let [nx, ny, nz] = grid.dims;
    let (w, h) = match plane {
        Plane::Axial => (nx, ny),
        Plane::Sagittal => (ny, nz),
    };
    let voxel = |u: usize, v: usize| match plane {
        Plane::Axial => [u, v, index],
        Plane::Sagittal => [index, u, v],
    };
    let inside = |u: isize, v: isize| {
        if u < 0 || v < 0 || u as usize >= w || v as usize >= h {
            return false;
        }
        let [x, y, z] = voxel(u as usize, v as usize);
        mask.get(x, y, z)
    };

    let mut img = RgbImage::new(w as u32, h as u32);
    for v in 0..h {
        for u in 0..w {
            let [x, y, z] = voxel(u, v);
            let g = image.map_or(0, |(values, win)| win.gray(values[grid.index(x, y, z)]));
            let mut px = Rgb([g, g, g]);
            if mask.get(x, y, z) {
                let (ui, vi) = (u as isize, v as isize);
                let edge = !(inside(ui - 1, vi) && inside(ui + 1, vi) && inside(ui, vi - 1) && inside(ui, vi + 1));
                px = if edge {
                    OUTLINE
                } else {
                    let blend = |c: u8, o: u8| (f64::from(c) * (1.0 - FILL_ALPHA) + f64::from(o) * FILL_ALPHA).round() as u8;
                    Rgb([blend(g, OUTLINE[0]), blend(g, OUTLINE[1]), blend(g, OUTLINE[2])])
                };
            }
            img.put_pixel(u as u32, (h - 1 - v) as u32, px);
        }
    }

    let (su, sv) = match plane {
        Plane::Axial => (grid.spacing_mm[0], grid.spacing_mm[1]),
        Plane::Sagittal => (grid.spacing_mm[1], grid.spacing_mm[2]),
    };
    let unit = su.min(sv);
    let (mut tw, mut th) = ((w as f64 * su / unit).round() as u32, (h as f64 * sv / unit).round() as u32);
    let long = tw.max(th).max(1);
    if long < MIN_LONG_SIDE {
        let k = MIN_LONG_SIDE.div_ceil(long);
        tw *= k;
        th *= k;
    }
    if (tw, th) == (w as u32, h as u32) {
        img
    } else {
        imageops::resize(&img, tw.max(1), th.max(1), imageops::FilterType::Nearest)
    }
}

fn safe_name(case_id: &str) -> String {
    case_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Render both segmentations of one case into `out_dir`. The returned pool
/// entry holds paths relative to `out_dir`.
pub fn export_case(
    case_id: &str,
    image: Option<&Volume>,
    expert: &VoxelMask,
    algorithm: &VoxelMask,
    out_dir: &Path,
) -> Result<PoolCase> {
    expert.grid().ensure_matches(algorithm.grid())?;
    let values = match image {
        Some(vol) => {
            let g: Grid = vol.grid().map_err(lesionbench::Error::from)?;
            expert.grid().ensure_matches(&g)?;
            let values = vol.scaled_values();
            let window = Window::from_values(&values);
            Some((values, window))
        }
        None => None,
    };
    let choice = choose_slices(expert);
    std::fs::create_dir_all(out_dir).map_err(|e| TuringError::io(out_dir, e))?;
    let stem = safe_name(case_id);
    let render_source = |source: Source, mask: &VoxelMask| -> Result<Vec<PathBuf>> {
        let tag = match source {
            Source::Expert => "expert",
            Source::Algorithm => "algorithm",
        };
        let mut out = Vec::new();
        for (k, (plane, index)) in choice.views().into_iter().enumerate() {
            let img = render_slice(values.as_ref().map(|(v, w)| (v.as_slice(), *w)), mask, plane, index);
            let name = PathBuf::from(format!("{stem}_{tag}_{k}.png"));
            let path = out_dir.join(&name);
            img.save_with_format(&path, image::ImageFormat::Png)?;
            out.push(name);
        }
        Ok(out)
    };
    Ok(PoolCase {
        case_id: case_id.to_string(),
        expert: render_source(Source::Expert, expert)?,
        algorithm: render_source(Source::Algorithm, algorithm)?,
    })
}

pub fn write_pool(pool: &CasePool, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join(POOL_FILE);
    let text = serde_json::to_string_pretty(pool)?;
    std::fs::write(&path, text).map_err(|e| TuringError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_largest_slices() {
        let grid = Grid::unit([6, 6, 5]);
        let mask = VoxelMask::from_fn(grid, |x, y, z| match z {
            1 => x < 2 && y < 2,
            3 => x < 4 && y < 4,
            4 => x < 3 && y < 3,
            _ => false,
        });
        let c = choose_slices(&mask);
        assert_eq!(c.axial, [3, 4]);
        assert_eq!(c.sagittal, 0);
    }

    #[test]
    fn empty_mask_uses_centre() {
        let c = choose_slices(&VoxelMask::zeros(Grid::unit([8, 8, 8])));
        assert_eq!(c, SliceChoice { axial: [4, 5], sagittal: 4 });
    }

    #[test]
    fn rendering_respects_spacing_and_flips_rows() {
        let grid = Grid::new([4, 2, 3], [1.0, 2.0, 1.0]);
        let mask = VoxelMask::from_fn(grid, |x, y, _| x == 0 && y == 1);
        let img = render_slice(None, &mask, Plane::Axial, 0);
        let k = MIN_LONG_SIDE.div_ceil(4);
        assert_eq!(img.dimensions(), (4 * k, 4 * k));
        // y = 1 is the top row after the flip.
        assert_eq!(*img.get_pixel(0, 0), OUTLINE);
        assert_eq!(*img.get_pixel(0, 4 * k - 1), Rgb([0, 0, 0]));
    }

    #[test]
    fn export_writes_pool() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::unit([10, 10, 6]);
        let gt = VoxelMask::from_fn(grid, |x, y, z| (3..7).contains(&x) && (3..7).contains(&y) && (2..4).contains(&z));
        let pred = VoxelMask::from_fn(grid, |x, y, z| (4..7).contains(&x) && (3..7).contains(&y) && z == 2);
        let case = export_case("case/1", None, &gt, &pred, dir.path()).unwrap();
        assert_eq!(case.expert.len(), 3);
        assert!(case.expert[0].to_str().unwrap().starts_with("case_1_"));
        let pool = CasePool { cases: vec![case] };
        let path = write_pool(&pool, dir.path()).unwrap();
        let loaded = CasePool::load(&path).unwrap();
        assert!(loaded.cases[0].algorithm.iter().all(|p| p.exists()));
    }
}
