//! Forward depth warping with a z-buffer, pose chaining, and an optional
//! median infill for the small holes forward warping leaves behind.

use thiserror::Error;

use crate::geometry::{DepthMap, Intrinsics, Point3, Pose};

/// Transformed points closer than this to the camera plane are dropped.
pub const MIN_WARPED_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WarpError {
    #[error("median kernel must be odd and >= 3, got {0}")]
    InvalidKernel(usize),
    #[error("depth map {got_w}x{got_h} does not match intrinsics {want_w}x{want_h}")]
    SizeMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

/// Chains two motions: the result applies `previous` first, then `current`.
///
/// `R = R_c R_p`, `T = T_c + R_c T_p`.
pub fn compose(current: &Pose, previous: &Pose) -> Pose {
    let rc = current.rotation_matrix();
    let r = rc * previous.rotation_matrix();
    let t = current.translation() + rc * previous.translation();
    Pose::from_matrix(&r, t)
}

/// Counters from one [`reproject`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WarpStats {
    pub source_valid: usize,
    /// Source pixels that landed in bounds (before z-buffer collisions).
    pub written: usize,
    pub behind_camera: usize,
    pub out_of_bounds: usize,
}

/// Warps `depth_src` into the view reached by `pose`.
///
/// Every valid pixel is back-projected, moved, and splatted to the nearest
/// target pixel; collisions keep the smallest depth. Pixels nothing lands on
/// stay invalid.
pub fn reproject(
    depth_src: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<(DepthMap, WarpStats), WarpError> {
    let (w, h) = (depth_src.width(), depth_src.height());
    if w != k.width || h != k.height {
        return Err(WarpError::SizeMismatch {
            got_w: w,
            got_h: h,
            want_w: k.width,
            want_h: k.height,
        });
    }
    let r = pose.rotation_matrix();
    let t = pose.translation();
    let mut out = vec![f64::INFINITY; w * h];
    let mut stats = WarpStats::default();
    for v in 0..h {
        let ry = (v as f64 - k.cy) / k.fy;
        for u in 0..w {
            let z = depth_src.get(u, v);
            if z <= 0.0 {
                continue;
            }
            stats.source_valid += 1;
            let x = Point3::new((u as f64 - k.cx) / k.fx * z, ry * z, z);
            let y = r * x.coords + t;
            if y.z.is_nan() || y.z <= MIN_WARPED_DEPTH {
                stats.behind_camera += 1;
                continue;
            }
            let tu = (k.fx * y.x / y.z + k.cx).round();
            let tv = (k.fy * y.y / y.z + k.cy).round();
            if !(tu >= 0.0 && tv >= 0.0 && tu < w as f64 && tv < h as f64) {
                stats.out_of_bounds += 1;
                continue;
            }
            stats.written += 1;
            let idx = tv as usize * w + tu as usize;
            if y.z < out[idx] {
                out[idx] = y.z;
            }
        }
    }
    let warped = DepthMap::from_fn(w, h, |u, v| {
        let z = out[v * w + u];
        if z.is_finite() {
            z
        } else {
            0.0
        }
    });
    Ok((warped, stats))
}

/// Fraction of pixels inside the warped footprint that received no depth.
///
/// A pixel counts as a hole when it is invalid but has valid pixels on both
/// sides of it along its row or along its column. For a convex footprint
/// this is exactly the set of interior gaps; the area uncovered at the image
/// border is not counted. The denominator is valid pixels plus holes.
pub fn hole_fraction(depth: &DepthMap) -> f64 {
    let (w, h) = (depth.width(), depth.height());
    let mut enclosed = vec![false; w * h];
    for v in 0..h {
        let row: Vec<usize> = (0..w).filter(|&u| depth.is_valid(u, v)).collect();
        if let (Some(&first), Some(&last)) = (row.first(), row.last()) {
            for u in first..last {
                enclosed[v * w + u] = true;
            }
        }
    }
    for u in 0..w {
        let col: Vec<usize> = (0..h).filter(|&v| depth.is_valid(u, v)).collect();
        if let (Some(&first), Some(&last)) = (col.first(), col.last()) {
            for v in first..last {
                enclosed[v * w + u] = true;
            }
        }
    }
    let mut holes = 0usize;
    let mut valid = 0usize;
    for v in 0..h {
        for u in 0..w {
            if depth.is_valid(u, v) {
                valid += 1;
            } else if enclosed[v * w + u] {
                holes += 1;
            }
        }
    }
    if valid + holes == 0 {
        return 0.0;
    }
    holes as f64 / (valid + holes) as f64
}

/// Fills invalid pixels with the median of the valid pixels in their
/// `kernel × kernel` window. Valid pixels are never touched and filled values
/// are not used as neighbors. With an even number of neighbors the lower
/// middle value is taken, so every filled depth is one that was measured.
pub fn median_infill(depth: &DepthMap, kernel: usize) -> Result<DepthMap, WarpError> {
    if kernel < 3 || kernel.is_multiple_of(2) {
        return Err(WarpError::InvalidKernel(kernel));
    }
    let (w, h) = (depth.width(), depth.height());
    let r = kernel / 2;
    let mut out = depth.clone();
    let mut window = Vec::with_capacity(kernel * kernel);
    for v in 0..h {
        for u in 0..w {
            if depth.is_valid(u, v) {
                continue;
            }
            window.clear();
            for y in v.saturating_sub(r)..(v + r + 1).min(h) {
                for x in u.saturating_sub(r)..(u + r + 1).min(w) {
                    let z = depth.get(x, y);
                    if z > 0.0 {
                        window.push(z);
                    }
                }
            }
            if window.is_empty() {
                continue;
            }
            window.sort_by(f64::total_cmp);
            out.set(u, v, window[(window.len() - 1) / 2]);
        }
    }
    Ok(out)
}
