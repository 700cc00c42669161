//! Fills missing pixels of a measured depth map from an earlier measured
//! frame of the same scene.

use thiserror::Error;

use crate::flow::{compute_flow, FlowError, GridSpec};
use crate::geometry::{DepthMap, GrayImage, Intrinsics};
use crate::pipeline::depth_metrics;
use crate::ransac::{estimate, PoseOrSignal, RansacParams, TofSignal};
use crate::warp::{reproject, WarpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfillError {
    #[error("cannot infill: no reliable pose between the frames ({0:?})")]
    NoPose(TofSignal),
    #[error("inputs differ in size")]
    SizeMismatch,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Warp(#[from] WarpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfillResult {
    pub depth_filled: DepthMap,
    pub filled_pixel_count: usize,
    /// MRE in percent between the measured and the warped reference depth
    /// over pixels valid in both; `None` when they do not overlap.
    pub overlap_mre_percent: Option<f64>,
}

/// Warps `ref_depth` into the current view using motion estimated from the
/// image pair and copies it into pixels where `cur_depth` is invalid.
pub fn infill(
    ref_image: &GrayImage,
    ref_depth: &DepthMap,
    cur_image: &GrayImage,
    cur_depth: &DepthMap,
    k: &Intrinsics,
    grid: &GridSpec,
    ransac: &RansacParams,
) -> Result<InfillResult, InfillError> {
    let size = (k.width, k.height);
    if [
        (ref_image.width(), ref_image.height()),
        (ref_depth.width(), ref_depth.height()),
        (cur_image.width(), cur_image.height()),
        (cur_depth.width(), cur_depth.height()),
    ]
    .iter()
    .any(|&s| s != size)
    {
        return Err(InfillError::SizeMismatch);
    }
    let samples = compute_flow(ref_image, cur_image, ref_depth, grid)?;
    let pose = match estimate(&samples, k, ransac) {
        PoseOrSignal::Pose(p) => p.pose,
        PoseOrSignal::Signal(s) => return Err(InfillError::NoPose(s)),
    };
    let (warped, _) = reproject(ref_depth, &pose, k)?;
    let mut filled = cur_depth.clone();
    let mut count = 0;
    for v in 0..k.height {
        for u in 0..k.width {
            if !cur_depth.is_valid(u, v) && warped.is_valid(u, v) {
                filled.set(u, v, warped.get(u, v));
                count += 1;
            }
        }
    }
    Ok(InfillResult {
        depth_filled: filled,
        filled_pixel_count: count,
        overlap_mre_percent: depth_metrics(&warped, cur_depth).map(|m| m.mre_percent),
    })
}
