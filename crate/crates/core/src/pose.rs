//! Rigid relative pose from sparse flow and source depth.
//!
//! The motion model predicts the flow of a pixel with depth `z` under a pose
//! `(W = R − I, T)` as
//!
//! ```text
//! Δû = (fx / z) · (W X + T)_x − (u_j' / z) · (W X + T)_z
//! Δv̂ = (fy / z) · (W X + T)_y − (v_j' / z) · (W X + T)_z
//! ```
//!
//! where `u_j'`, `v_j'` are the observed target pixel relative to the
//! principal point. The solver is Gauss-Newton with the rotation linearized at
//! zero (`W X ≈ ω × X`) around the current cumulative estimate, so each step
//! is a 6×6 linear least-squares problem in `(ω, T)`.

use nalgebra::{Matrix6, SymmetricEigen, Vector3, Vector6};
use thiserror::Error;

use crate::flow::FlowSample;
use crate::geometry::{back_project, Intrinsics, Point3, Pose};
use crate::warp::compose;

/// Largest accepted condition number of the normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Minimum number of flow vectors that determine a pose.
pub const MIN_SAMPLES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("sample has no valid depth")]
    InvalidSample,
    #[error("need at least {required} valid samples, got {valid}")]
    TooFewSamples { valid: usize, required: usize },
    #[error("degenerate geometry (normal matrix condition number {condition:e})")]
    Degenerate { condition: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSolution {
    pub pose: Pose,
    /// Per-sample residual in px², in input order. Invalid input samples are
    /// not fitted and carry `NaN`.
    pub residuals: Vec<f64>,
    /// Mean over the valid samples.
    pub mean_residual: f64,
    pub iterations: usize,
}

fn source_point(s: &FlowSample, k: &Intrinsics) -> Option<Point3> {
    if !s.valid {
        return None;
    }
    back_project(s.u, s.v, s.z, k).ok()
}

/// Flow predicted by the motion model for `sample` under `pose`.
pub fn predicted_flow(sample: &FlowSample, pose: &Pose, k: &Intrinsics) -> (f64, f64) {
    let x = Point3::new(
        (sample.u - k.cx) * sample.z / k.fx,
        (sample.v - k.cy) * sample.z / k.fy,
        sample.z,
    );
    let a = pose.w_matrix() * x.coords + pose.translation();
    let uj = sample.u + sample.du - k.cx;
    let vj = sample.v + sample.dv - k.cy;
    (
        (k.fx * a.x - uj * a.z) / sample.z,
        (k.fy * a.y - vj * a.z) / sample.z,
    )
}

/// Squared flow error `r_i` of one sample under `pose`.
pub fn residual(sample: &FlowSample, pose: &Pose, k: &Intrinsics) -> Result<f64, PoseError> {
    if !sample.valid || !(sample.z.is_finite() && sample.z > 0.0) {
        return Err(PoseError::InvalidSample);
    }
    let (pu, pv) = predicted_flow(sample, pose, k);
    Ok((sample.du - pu).powi(2) + (sample.dv - pv).powi(2))
}

/// One linearized observation: two rows of the Jacobian of the predicted flow
/// with respect to `(ω, T)` and the remaining flow they must explain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRows {
    pub ju: Vector6<f64>,
    pub jv: Vector6<f64>,
    pub ru: f64,
    pub rv: f64,
}

/// Linearizes the model at the point `y` (the source point `x` already moved
/// by the current estimate), for a sample whose observed target is
/// `(u + du, v + dv)`.
fn linearize_at(sample: &FlowSample, x: &Point3, y: &Point3, k: &Intrinsics) -> Option<LinearRows> {
    if !(y.z.is_finite() && y.z > 1e-9) {
        return None;
    }
    let uj = sample.u + sample.du - k.cx;
    let vj = sample.v + sample.dv - k.cy;
    // d(ω × Y + t)/d(ω, t) for each component.
    let dx = Vector6::new(0.0, y.z, -y.y, 1.0, 0.0, 0.0);
    let dy = Vector6::new(-y.z, 0.0, y.x, 0.0, 1.0, 0.0);
    let dz = Vector6::new(y.y, -y.x, 0.0, 0.0, 0.0, 1.0);
    let ju = (dx * k.fx - dz * uj) / y.z;
    let jv = (dy * k.fy - dz * vj) / y.z;
    // Predicted pixel relative to the principal point, written as the source
    // pixel plus its displacement so that y == x predicts exactly zero flow.
    let pu = (sample.u - k.cx) + k.fx * (y.x / y.z - x.x / x.z);
    let pv = (sample.v - k.cy) + k.fy * (y.y / y.z - x.y / x.z);
    Some(LinearRows {
        ju,
        jv,
        ru: uj - pu,
        rv: vj - pv,
    })
}

/// Jacobian rows of [`predicted_flow`] with respect to `(ω, T)` at the
/// identity pose. `None` for invalid samples.
pub fn linearize(sample: &FlowSample, k: &Intrinsics) -> Option<LinearRows> {
    let x = source_point(sample, k)?;
    linearize_at(sample, &x, &x, k)
}

/// Accumulated normal equations `A x = b`.
#[derive(Debug, Clone, Copy)]
struct Normal {
    a: Matrix6<f64>,
    b: Vector6<f64>,
}

impl Normal {
    fn new() -> Self {
        Self {
            a: Matrix6::zeros(),
            b: Vector6::zeros(),
        }
    }

    fn add(&mut self, rows: &LinearRows) {
        self.a += rows.ju * rows.ju.transpose() + rows.jv * rows.jv.transpose();
        self.b += rows.ju * rows.ru + rows.jv * rows.rv;
    }

    fn solve(&self) -> Result<Vector6<f64>, PoseError> {
        let eig = SymmetricEigen::new(self.a);
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition.is_finite() && condition <= MAX_CONDITION) {
            return Err(PoseError::Degenerate { condition });
        }
        self.a
            .cholesky()
            .map(|c| c.solve(&self.b))
            .ok_or(PoseError::Degenerate { condition })
    }
}

/// Solves the 6×6 linear system of one Gauss-Newton step, returning
/// `(ω, T)` as a 6-vector.
pub fn solve_linear(rows: &[LinearRows]) -> Result<Vector6<f64>, PoseError> {
    let mut n = Normal::new();
    for r in rows {
        n.add(r);
    }
    n.solve()
}

/// Least-squares pose from flow samples with `gn_iterations` Gauss-Newton
/// steps starting at the identity.
///
/// Each step moves every source point by the current estimate, linearizes at
/// the moved point, solves for an increment and applies it after the current
/// estimate (`P ← inc ∘ P`).
pub fn solve_pose(
    samples: &[FlowSample],
    k: &Intrinsics,
    gn_iterations: usize,
) -> Result<PoseSolution, PoseError> {
    let points: Vec<Option<Point3>> = samples.iter().map(|s| source_point(s, k)).collect();
    let valid = points.iter().filter(|p| p.is_some()).count();
    if valid < MIN_SAMPLES {
        return Err(PoseError::TooFewSamples {
            valid,
            required: MIN_SAMPLES,
        });
    }

    let mut pose = Pose::identity();
    for _ in 0..gn_iterations {
        let r = pose.rotation_matrix();
        let t = pose.translation();
        let mut normal = Normal::new();
        for (s, x) in samples.iter().zip(&points) {
            let Some(x) = x else { continue };
            let y = Point3::from(r * x.coords + t);
            if let Some(rows) = linearize_at(s, x, &y, k) {
                normal.add(&rows);
            }
        }
        let step = normal.solve()?;
        let inc = Pose::from_rotation_vector(
            Vector3::new(step[0], step[1], step[2]),
            Vector3::new(step[3], step[4], step[5]),
        );
        pose = compose(&inc, &pose);
    }

    let residuals: Vec<f64> = samples
        .iter()
        .map(|s| residual(s, &pose, k).unwrap_or(f64::NAN))
        .collect();
    let mean_residual = residuals.iter().filter(|r| !r.is_nan()).sum::<f64>() / valid as f64;
    Ok(PoseSolution {
        pose,
        residuals,
        mean_residual,
        iterations: gn_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinect() -> Intrinsics {
        Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480, 5000.0).unwrap()
    }

    /// Forward simulation: move the back-projected pixel and re-project it.
    fn exact_sample(u: f64, v: f64, z: f64, pose: &Pose, k: &Intrinsics) -> FlowSample {
        let x = Point3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
        let y = pose.apply(&x);
        let (uj, vj) = (k.fx * y.x / y.z + k.cx, k.fy * y.y / y.z + k.cy);
        FlowSample::new(u, v, uj - u, vj - v, z)
    }

    fn grid_samples(pose: &Pose, k: &Intrinsics) -> Vec<FlowSample> {
        let mut out = Vec::new();
        for r in 0..12 {
            for c in 0..12 {
                let u = 22.0 + c as f64 * 54.0;
                let v = 22.0 + r as f64 * 39.0;
                let z = 0.8 + 0.25 * ((r * 7 + c * 3) % 13) as f64;
                out.push(exact_sample(u, v, z, pose, k));
            }
        }
        out
    }

    #[test]
    fn identity_zero_flow_has_zero_residual() {
        let k = kinect();
        let s = FlowSample::new(100.0, 200.0, 0.0, 0.0, 2.0);
        assert_eq!(residual(&s, &Pose::identity(), &k).unwrap(), 0.0);
    }

    #[test]
    fn axial_motion_of_center_pixel_is_flow_free() {
        let k = kinect();
        let s = FlowSample::new(k.cx, k.cy, 0.0, 0.0, 2.0);
        let p = Pose::from_translation(Vector3::new(0.0, 0.0, 0.3));
        assert_eq!(residual(&s, &p, &k).unwrap(), 0.0);
    }

    #[test]
    fn residual_rejects_invalid_sample() {
        let k = kinect();
        let s = FlowSample::new(1.0, 1.0, 0.0, 0.0, 0.0);
        assert!(residual(&s, &Pose::identity(), &k).is_err());
    }

    #[test]
    fn exact_flow_has_tiny_residual_under_true_pose() {
        let k = kinect();
        let p = Pose::new(
            Vector3::new(0.3, -1.0, 0.2),
            2f64.to_radians(),
            Vector3::new(0.02, -0.01, 0.03),
        )
        .unwrap();
        for s in grid_samples(&p, &k) {
            assert!(residual(&s, &p, &k).unwrap() < 0.05);
        }
    }

    #[test]
    fn zero_flow_gives_identity() {
        let k = kinect();
        let samples: Vec<FlowSample> = grid_samples(&Pose::identity(), &k)
            .into_iter()
            .map(|s| FlowSample::new(s.u, s.v, 0.0, 0.0, s.z))
            .collect();
        let sol = solve_pose(&samples, &k, 3).unwrap();
        assert_eq!(sol.pose, Pose::identity());
        assert_eq!(sol.mean_residual, 0.0);
        assert_eq!(sol.residuals.len(), samples.len());
    }

    #[test]
    fn recovers_one_degree_about_y() {
        let k = kinect();
        let truth = Pose::new(
            Vector3::y(),
            1f64.to_radians(),
            Vector3::new(0.01, 0.0, 0.02),
        )
        .unwrap();
        let sol = solve_pose(&grid_samples(&truth, &k), &k, 3).unwrap();
        assert!((sol.pose.angle() - truth.angle()).abs().to_degrees() < 0.02);
        assert!((sol.pose.translation() - truth.translation()).norm() < 5e-4);
        assert_eq!(sol.iterations, 3);
    }

    #[test]
    fn too_few_samples() {
        let k = kinect();
        let mut samples = grid_samples(&Pose::identity(), &k);
        samples.truncate(3);
        samples[2].valid = false;
        assert_eq!(
            solve_pose(&samples, &k, 1),
            Err(PoseError::TooFewSamples {
                valid: 2,
                required: 3
            })
        );
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let k = kinect();
        // Three points on one 3D line: a rotation about that line combined
        // with the matching translation produces no flow at all.
        let a = Point3::new(-0.4, 0.1, 1.0);
        let d = Vector3::new(0.3, 0.05, 0.6);
        let samples: Vec<FlowSample> = [0.0, 0.7, 1.5]
            .iter()
            .map(|&s| {
                let p = a + d * s;
                let u = k.fx * p.x / p.z + k.cx;
                let v = k.fy * p.y / p.z + k.cy;
                FlowSample::new(u, v, 1.0, -0.5, p.z)
            })
            .collect();
        assert!(matches!(
            solve_pose(&samples, &k, 1),
            Err(PoseError::Degenerate { .. })
        ));
    }

    #[test]
    fn invalid_samples_are_ignored_and_marked_nan() {
        let k = kinect();
        let truth = Pose::new(Vector3::x(), 0.01, Vector3::new(0.0, 0.01, 0.0)).unwrap();
        let mut samples = grid_samples(&truth, &k);
        samples[5].valid = false;
        samples[5].du = 40.0;
        let sol = solve_pose(&samples, &k, 3).unwrap();
        assert!(sol.residuals[5].is_nan());
        assert!(sol.mean_residual < 1e-6);
    }
}
