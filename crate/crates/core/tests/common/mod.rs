//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::VecDeque;

use lesionbench::{Connectivity, Grid, VoxelMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Neighbour offsets spelled out by hand rather than derived from distance.
pub fn offsets(conn: Connectivity) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nonzero = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                let keep = match conn {
                    Connectivity::Six => nonzero == 1,
                    Connectivity::Eighteen => nonzero == 1 || nonzero == 2,
                    Connectivity::TwentySix => nonzero >= 1,
                };
                if keep {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Breadth-first flood fill. Returns a label per voxel (0 = background) and
/// the number of components; labels follow the raster order of each
/// component's first voxel.
pub fn flood_fill(mask: &VoxelMask, conn: Connectivity) -> (Vec<u32>, usize) {
    let [nx, ny, nz] = mask.grid().dims;
    let offs = offsets(conn);
    let mut labels = vec![0u32; nx * ny * nz];
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut next = 0u32;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) || labels[idx(x, y, z)] != 0 {
                    continue;
                }
                next += 1;
                labels[idx(x, y, z)] = next;
                let mut queue = VecDeque::from([(x, y, z)]);
                while let Some((cx, cy, cz)) = queue.pop_front() {
                    for o in &offs {
                        let (px, py, pz) = (cx as i64 + o[0], cy as i64 + o[1], cz as i64 + o[2]);
                        if px < 0 || py < 0 || pz < 0 || px >= nx as i64 || py >= ny as i64 || pz >= nz as i64 {
                            continue;
                        }
                        let (px, py, pz) = (px as usize, py as usize, pz as usize);
                        if mask.get(px, py, pz) && labels[idx(px, py, pz)] == 0 {
                            labels[idx(px, py, pz)] = next;
                            queue.push_back((px, py, pz));
                        }
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Sparse random noise plus a few boxes, so both speckle and large lesions occur.
pub fn random_mask(rng: &mut ChaCha8Rng, grid: Grid) -> VoxelMask {
    let density = rng.random_range(0.0..0.12);
    let [nx, ny, nz] = grid.dims;
    let mut mask = VoxelMask::from_fn(grid, |_, _, _| rng.random_bool(density));
    let boxes = rng.random_range(0..4);
    for _ in 0..boxes {
        let lo = [rng.random_range(0..nx), rng.random_range(0..ny), rng.random_range(0..nz)];
        let size = [rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6)];
        for z in lo[2]..(lo[2] + size[2]).min(nz) {
            for y in lo[1]..(lo[1] + size[1]).min(ny) {
                for x in lo[0]..(lo[0] + size[0]).min(nx) {
                    mask.set(x, y, z, true);
                }
            }
        }
    }
    mask
}

/// A prediction correlated with `gt`: each voxel flipped with probability `p`.
pub fn noisy_copy(rng: &mut ChaCha8Rng, gt: &VoxelMask, p: f64) -> VoxelMask {
    let data = gt
        .data()
        .iter()
        .map(|&v| if rng.random_bool(p) { 1 - v } else { v })
        .collect();
    gt.with_data(data).unwrap()
}

pub fn random_grid(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Grid {
    let d = [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
    let s = [rng.random_range(0.5..2.5), rng.random_range(0.5..2.5), rng.random_range(0.5..4.0)];
    Grid::new(d, s)
}
