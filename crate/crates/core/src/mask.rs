//! Voxel grids and binary lesion masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti::{DataType, VolumeHeader};

/// Spacing values closer than this (in mm) are considered equal.
pub const SPACING_TOLERANCE_MM: f64 = 1e-5;

/// Voxel counts and physical spacing of a 3-D volume. Voxels are stored with
/// x varying fastest, as in NIfTI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3]) -> Self {
        Grid { dims, spacing_mm }
    }

    /// Isotropic 1 mm grid.
    pub fn unit(dims: [usize; 3]) -> Self {
        Grid::new(dims, [1.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing_mm.iter().product()
    }

    pub fn voxel_volume_ml(&self) -> f64 {
        self.voxel_volume_mm3() / 1000.0
    }

    /// Physical volume in ml of `count` voxels.
    pub fn volume_ml(&self, count: usize) -> f64 {
        count as f64 * self.voxel_volume_mm3() / 1000.0
    }

    pub fn matches(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self
                .spacing_mm
                .iter()
                .zip(other.spacing_mm.iter())
                .all(|(a, b)| (a - b).abs() <= SPACING_TOLERANCE_MM)
    }

    pub fn ensure_matches(&self, other: &Grid) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "dims {:?} spacing {:?} vs dims {:?} spacing {:?}",
                self.dims, self.spacing_mm, other.dims, other.spacing_mm
            )))
        }
    }
}

/// A binary lesion mask. Every stored value is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    header: VolumeHeader,
    grid: Grid,
    data: Vec<u8>,
}

impl VoxelMask {
    /// Build a mask on `grid`. Fails if the length is wrong or any value is
    /// not 0 or 1.
    pub fn new(grid: Grid, data: Vec<u8>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "mask data has {} voxels, grid {:?} needs {}",
                data.len(),
                grid.dims,
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidArgument(format!(
                "mask value {} at voxel {i} is not 0 or 1",
                data[i]
            )));
        }
        if !grid.spacing_mm.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-positive spacing {:?}",
                grid.spacing_mm
            )));
        }
        let spacing = grid.spacing_mm.map(|s| s as f32);
        let header = VolumeHeader::new(grid.dims, spacing, DataType::U8);
        Ok(VoxelMask { header, grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::new(grid, vec![0; grid.len()]).expect("valid empty mask")
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..grid.dims[2] {
            for y in 0..grid.dims[1] {
                for x in 0..grid.dims[0] {
                    data.push(u8::from(f(x, y, z)));
                }
            }
        }
        Self::new(grid, data).expect("from_fn yields binary data")
    }

    pub(crate) fn from_parts(header: VolumeHeader, grid: Grid, data: Vec<u8>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        VoxelMask { header, grid, data }
    }

    /// Same grid and header, new voxel values.
    pub fn with_data(&self, data: Vec<u8>) -> Result<Self> {
        let mut m = Self::new(self.grid, data)?;
        m.header = self.header.clone();
        Ok(m)
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.header
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.grid.index(x, y, z)] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.grid.index(x, y, z);
        self.data[i] = u8::from(value);
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn voxel_volume_ml(&self) -> f64 {
        self.grid.voxel_volume_ml()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}
