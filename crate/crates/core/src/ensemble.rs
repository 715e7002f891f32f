//! Voxel-wise majority-vote fusion.
//!
//! A voxel is foreground in the fused mask when strictly more than half of the
//! `K` inputs mark it, i.e. at least `K / 2 + 1` votes. For three inputs this
//! is "at least two agree"; even-`K` ties are background.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mask::{Grid, VoxelMask};

/// `K >= 1` masks on one grid.
#[derive(Debug, Clone)]
pub struct VoteStack {
    masks: Vec<VoxelMask>,
}

impl VoteStack {
    pub fn new(masks: Vec<VoxelMask>) -> Result<Self> {
        let first = masks.first().ok_or(Error::EmptyStack)?;
        for m in &masks[1..] {
            first.grid().ensure_matches(m.grid())?;
        }
        Ok(VoteStack { masks })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.masks[0].grid()
    }

    pub fn masks(&self) -> &[VoxelMask] {
        &self.masks
    }

    /// Minimum number of votes for a foreground voxel.
    pub fn threshold(&self) -> usize {
        self.masks.len() / 2 + 1
    }
}

/// Per-voxel number of masks voting foreground, in `0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteCountMap {
    pub grid: Grid,
    pub counts: Vec<u16>,
}

const CHUNK: usize = 1 << 16;

pub fn vote_count_map(stack: &VoteStack) -> VoteCountMap {
    let grid = *stack.grid();
    let mut counts = vec![0u16; grid.len()];
    counts
        .par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let start = c * CHUNK;
            for mask in &stack.masks {
                let src = &mask.data()[start..start + chunk.len()];
                for (n, &v) in chunk.iter_mut().zip(src) {
                    *n += u16::from(v);
                }
            }
        });
    VoteCountMap { grid, counts }
}

/// Fuse the stack into one mask. The output keeps the first mask's header.
pub fn majority_vote(stack: &VoteStack) -> VoxelMask {
    let threshold = stack.threshold() as u16;
    let counts = vote_count_map(stack);
    let data = counts
        .counts
        .par_iter()
        .map(|&n| u8::from(n >= threshold))
        .collect();
    stack.masks[0]
        .with_data(data)
        .expect("fused data is binary on the stack grid")
}
