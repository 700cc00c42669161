//! Sparse block-matching optical flow on a uniform grid.
//!
//! Each grid point is matched with a three-step search: nine candidates at
//! `±step` around the current best displacement, then the step halves until a
//! unit step has been evaluated. With the default initial step of 8 the
//! rounds are 8, 4, 2, 1, which gives a ±15 pixel search range per axis.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{DepthMap, GrayImage};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("invalid grid spec: {0}")]
    InvalidGrid(&'static str),
    #[error("image {width}x{height} too small for a search margin of {margin} px")]
    ImageTooSmall {
        width: usize,
        height: usize,
        margin: usize,
    },
    #[error("size mismatch: {0}")]
    SizeMismatch(&'static str),
    #[error("reference block at ({0}, {1}) is not inside the image")]
    BlockOutOfBounds(i64, i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Block side length, odd.
    pub block: usize,
    /// First search step, a power of two.
    pub initial_step: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 12,
            cols: 12,
            block: 15,
            initial_step: 8,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.block.is_multiple_of(2) {
            return Err(FlowError::InvalidGrid("block size must be odd"));
        }
        if !self.initial_step.is_power_of_two() {
            return Err(FlowError::InvalidGrid(
                "initial step must be a power of two >= 1",
            ));
        }
        if self.rows * self.cols < 3 {
            return Err(FlowError::InvalidGrid("grid needs at least 3 points"));
        }
        Ok(())
    }

    /// Largest displacement reachable per axis: `s + s/2 + ... + 1`.
    pub fn search_range(&self) -> usize {
        2 * self.initial_step - 1
    }

    /// Distance from the image border to the outermost grid point.
    pub fn margin(&self) -> usize {
        self.block / 2 + self.search_range()
    }
}

/// One grid point's displacement between two frames.
///
/// Block matching produces integer `du`/`dv`; synthetic generators produce
/// exact sub-pixel values, hence the float fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
    /// Depth of the source pixel in meters.
    pub z: f64,
    /// Matching cost; 0 for samples that did not come from block matching.
    pub sad: u32,
    pub valid: bool,
}

impl FlowSample {
    pub fn new(u: f64, v: f64, du: f64, dv: f64, z: f64) -> Self {
        Self {
            u,
            v,
            du,
            dv,
            z,
            sad: 0,
            valid: z.is_finite() && z > 0.0,
        }
    }
}

fn place(margin: usize, extent: usize, i: usize, n: usize) -> usize {
    let span = (extent - 1 - 2 * margin) as f64;
    if n == 1 {
        return (margin as f64 + span / 2.0).round() as usize;
    }
    (margin as f64 + i as f64 * span / (n - 1) as f64).round() as usize
}

/// Grid points in row-major order (all columns of the first row first).
pub fn grid_points(
    spec: &GridSpec,
    width: usize,
    height: usize,
) -> Result<Vec<(usize, usize)>, FlowError> {
    spec.validate()?;
    let margin = spec.margin();
    if width <= 2 * margin || height <= 2 * margin {
        return Err(FlowError::ImageTooSmall {
            width,
            height,
            margin,
        });
    }
    let mut points = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        let v = place(margin, height, r, spec.rows);
        for c in 0..spec.cols {
            points.push((place(margin, width, c, spec.cols), v));
        }
    }
    Ok(points)
}

/// Result of [`tss_match`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMatch {
    pub du: i32,
    pub dv: i32,
    pub sad: u32,
}

#[inline]
fn block_in_bounds(img: &GrayImage, cu: i64, cv: i64, half: i64) -> bool {
    cu - half >= 0
        && cv - half >= 0
        && cu + half < img.width() as i64
        && cv + half < img.height() as i64
}

/// Sum of absolute differences between the block centered at `(u, v)` in
/// `prev` and the block centered at `(u + du, v + dv)` in `next`. Both blocks
/// must be in bounds.
pub fn block_sad(
    prev: &GrayImage,
    next: &GrayImage,
    u: usize,
    v: usize,
    du: i32,
    dv: i32,
    block: usize,
) -> u32 {
    let half = block / 2;
    let u0 = u - half;
    let u1 = (u as i64 + du as i64) as usize - half;
    let mut sum = 0u32;
    for row in 0..block {
        let a = &prev.row(v - half + row)[u0..u0 + block];
        let vb = (v as i64 + dv as i64) as usize - half + row;
        let b = &next.row(vb)[u1..u1 + block];
        sum += a
            .iter()
            .zip(b)
            .map(|(&x, &y)| x.abs_diff(y) as u32)
            .sum::<u32>();
    }
    sum
}

/// Strict "better than" ordering for candidates: cost, then distance from
/// zero displacement, then lexicographic `(du, dv)`.
#[inline]
fn better(a: (u32, i32, i32), b: (u32, i32, i32)) -> bool {
    let key = |(sad, du, dv): (u32, i32, i32)| (sad, du * du + dv * dv, du, dv);
    key(a) < key(b)
}

/// Three-step search for the block centered at `(u, v)`.
///
/// Candidates whose block would leave `next` are skipped, so the search never
/// reads outside either image.
pub fn tss_match(
    prev: &GrayImage,
    next: &GrayImage,
    u: usize,
    v: usize,
    spec: &GridSpec,
) -> Result<BlockMatch, FlowError> {
    let half = (spec.block / 2) as i64;
    let (ui, vi) = (u as i64, v as i64);
    if !block_in_bounds(prev, ui, vi, half) || !block_in_bounds(next, ui, vi, half) {
        return Err(FlowError::BlockOutOfBounds(ui, vi));
    }
    let mut best = (block_sad(prev, next, u, v, 0, 0, spec.block), 0i32, 0i32);
    let mut step = spec.initial_step as i32;
    while step >= 1 {
        let (_, cu, cv) = best;
        let mut round_best = best;
        for j in -1..=1 {
            for i in -1..=1 {
                if i == 0 && j == 0 {
                    continue;
                }
                let (du, dv) = (cu + i * step, cv + j * step);
                if !block_in_bounds(next, ui + du as i64, vi + dv as i64, half) {
                    continue;
                }
                let cand = (block_sad(prev, next, u, v, du, dv, spec.block), du, dv);
                if better(cand, round_best) {
                    round_best = cand;
                }
            }
        }
        best = round_best;
        step /= 2;
    }
    Ok(BlockMatch {
        du: best.1,
        dv: best.2,
        sad: best.0,
    })
}

/// Block-matching flow from `prev` to `next` at every grid point, with source
/// depth read from `depth_prev`. Points without depth are kept but marked
/// invalid.
pub fn compute_flow(
    prev: &GrayImage,
    next: &GrayImage,
    depth_prev: &DepthMap,
    spec: &GridSpec,
) -> Result<Vec<FlowSample>, FlowError> {
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(FlowError::SizeMismatch("images differ in size"));
    }
    if depth_prev.width() != prev.width() || depth_prev.height() != prev.height() {
        return Err(FlowError::SizeMismatch(
            "depth map and image differ in size",
        ));
    }
    let points = grid_points(spec, prev.width(), prev.height())?;
    points
        .par_iter()
        .map(|&(u, v)| {
            let m = tss_match(prev, next, u, v, spec)?;
            let z = depth_prev.get(u, v);
            Ok(FlowSample {
                u: u as f64,
                v: v as f64,
                du: m.du as f64,
                dv: m.dv as f64,
                z,
                sad: m.sad,
                valid: z > 0.0,
            })
        })
        .collect()
}
