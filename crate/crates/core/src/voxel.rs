//! Connected-component labeling of lesion masks and volume computation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::mask::{Grid, VoxelMask};

/// Voxel neighborhood used to decide whether two foreground voxels touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors.
    #[serde(rename = "6")]
    Six,
    /// Face and edge neighbors.
    #[serde(rename = "18")]
    Eighteen,
    /// Face, edge and corner neighbors.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn value(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Whether offset `(dx, dy, dz)` (each in -1..=1, not all zero) is a
    /// neighbor under this connectivity.
    pub fn includes(self, dx: i32, dy: i32, dz: i32) -> bool {
        let manhattan = dx.abs() + dy.abs() + dz.abs();
        match self {
            Connectivity::Six => manhattan == 1,
            Connectivity::Eighteen => (1..=2).contains(&manhattan),
            Connectivity::TwentySix => (1..=3).contains(&manhattan),
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self, Error> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 6, 18 or 26, got {other}"
            ))),
        }
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        s.trim()
            .parse::<u8>()
            .map_err(|_| Error::InvalidArgument(format!("bad connectivity `{s}`")))
            .and_then(Connectivity::try_from)
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Decomposition of a mask into disconnected lesions.
///
/// Labels are `1..=lesion_count`, numbered in the order their first voxel
/// appears in x-fastest scan order; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionLabeling {
    grid: Grid,
    connectivity: Connectivity,
    label_map: Vec<u32>,
    lesion_voxels: Vec<usize>,
}

impl LesionLabeling {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn label_map(&self) -> &[u32] {
        &self.label_map
    }

    pub fn lesion_count(&self) -> usize {
        self.lesion_voxels.len()
    }

    /// Voxel count of lesion `k` is at index `k - 1`.
    pub fn lesion_voxels(&self) -> &[usize] {
        &self.lesion_voxels
    }

    pub fn lesion_volumes_ml(&self) -> Vec<f64> {
        self.lesion_voxels
            .iter()
            .map(|&n| self.grid.volume_ml(n))
            .collect()
    }

    pub fn foreground_voxels(&self) -> usize {
        self.lesion_voxels.iter().sum()
    }

    pub fn total_volume_ml(&self) -> f64 {
        self.grid.volume_ml(self.foreground_voxels())
    }

    pub fn largest_lesion_voxels(&self) -> usize {
        self.lesion_voxels.iter().copied().max().unwrap_or(0)
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn with_capacity(n: usize) -> Self {
        DisjointSet {
            parent: Vec::with_capacity(n),
        }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return ra;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Neighbors already visited in raster order.
fn backward_offsets(conn: Connectivity) -> Vec<[i32; 3]> {
    let mut out = Vec::with_capacity(13);
    for dz in -1..=0 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let before = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
                if before && conn.includes(dx, dy, dz) {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Label the connected components of `mask` with a two-pass union-find scan.
pub fn connected_components(mask: &VoxelMask, conn: Connectivity) -> LesionLabeling {
    let grid = *mask.grid();
    let [nx, ny, nz] = grid.dims;
    let data = mask.data();
    let offsets = backward_offsets(conn);
    let deltas: Vec<isize> = offsets
        .iter()
        .map(|&[dx, dy, dz]| dx as isize + nx as isize * (dy as isize + ny as isize * dz as isize))
        .collect();

    // Provisional ids are stored +1 so that 0 stays background.
    let mut provisional = vec![0u32; data.len()];
    let mut sets = DisjointSet::with_capacity(64);

    let mut i = 0usize;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if data[i] != 0 {
                    let mut current = 0u32;
                    for (o, &[dx, dy, dz]) in offsets.iter().enumerate() {
                        let inside = (dx >= 0 || x > 0)
                            && (dx <= 0 || x + 1 < nx)
                            && (dy >= 0 || y > 0)
                            && (dy <= 0 || y + 1 < ny)
                            && (dz >= 0 || z > 0);
                        if !inside {
                            continue;
                        }
                        let j = (i as isize + deltas[o]) as usize;
                        let neighbor = provisional[j];
                        if neighbor != 0 {
                            current = if current == 0 {
                                neighbor
                            } else {
                                sets.union(current - 1, neighbor - 1) + 1
                            };
                        }
                    }
                    provisional[i] = if current == 0 { sets.make() + 1 } else { current };
                }
                i += 1;
            }
        }
    }

    let mut final_label = vec![0u32; sets.parent.len()];
    let mut lesion_voxels: Vec<usize> = Vec::new();
    for p in provisional.iter_mut() {
        if *p == 0 {
            continue;
        }
        let root = sets.find(*p - 1) as usize;
        if final_label[root] == 0 {
            lesion_voxels.push(0);
            final_label[root] = lesion_voxels.len() as u32;
        }
        let label = final_label[root];
        lesion_voxels[label as usize - 1] += 1;
        *p = label;
    }

    LesionLabeling {
        grid,
        connectivity: conn,
        label_map: provisional,
        lesion_voxels,
    }
}

/// Foreground volume of a mask in ml.
pub fn mask_volume_ml(mask: &VoxelMask) -> f64 {
    mask.grid().volume_ml(mask.foreground_count())
}
