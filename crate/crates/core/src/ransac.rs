//! Adaptive robust pose estimation: returns a pose when enough flow vectors
//! agree on one, otherwise signals that a measured depth map is needed.
//!
//! Sampling uses ChaCha8 seeded from `(seed, hypothesis index)`, one stream
//! per hypothesis, so results are reproducible across platforms and do not
//! depend on evaluation order.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flow::FlowSample;
use crate::geometry::{Intrinsics, Pose};
use crate::pose::{residual, solve_pose, MIN_SAMPLES};

/// Gauss-Newton steps for a minimal-sample hypothesis.
pub const HYPOTHESIS_GN_ITERATIONS: usize = 1;
/// Gauss-Newton steps for the refit on the winning inlier set.
pub const REFIT_GN_ITERATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier gate on `r_i`, in px².
    pub threshold: f64,
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 30,
            threshold: 4.0,
            min_inlier_fraction: 0.10,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.iterations == 0 {
            return Err("iterations must be >= 1");
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err("threshold must be positive");
        }
        if !(self.min_inlier_fraction > 0.0 && self.min_inlier_fraction <= 1.0) {
            return Err("min_inlier_fraction must be in (0, 1]");
        }
        Ok(())
    }

    /// Smallest acceptable inlier set for `n_valid` usable samples.
    pub fn min_inliers(&self, n_valid: usize) -> usize {
        // The epsilon keeps e.g. 0.1 * 30 = 3.0000000000000004 from rounding up.
        let frac = (self.min_inlier_fraction * n_valid as f64 - 1e-9).ceil() as usize;
        frac.max(MIN_SAMPLES)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// Indices into the input slice.
    pub inliers: Vec<usize>,
    /// Mean `r_i` of the inliers under the refitted pose.
    pub mean_residual: f64,
    /// Valid samples the estimate was drawn from.
    pub valid_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalReason {
    TooFewValidSamples,
    NoConsensus,
    DegenerateRefit,
}

/// Request to acquire a measured depth map instead of estimating one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TofSignal {
    pub reason: SignalReason,
    pub valid_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoseOrSignal {
    Pose(PoseEstimate),
    Signal(TofSignal),
}

impl PoseOrSignal {
    pub fn pose(&self) -> Option<&PoseEstimate> {
        match self {
            PoseOrSignal::Pose(p) => Some(p),
            PoseOrSignal::Signal(_) => None,
        }
    }

    pub fn is_signal(&self) -> bool {
        matches!(self, PoseOrSignal::Signal(_))
    }
}

/// The three sample indices drawn for hypothesis `iteration`, as positions in
/// the list of valid samples.
pub fn minimal_sample(seed: u64, iteration: usize, n_valid: usize) -> [usize; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    let picked = index::sample(&mut rng, n_valid, MIN_SAMPLES);
    [picked.index(0), picked.index(1), picked.index(2)]
}

struct Hypothesis {
    inliers: Vec<usize>,
    mean: f64,
}

pub fn estimate(samples: &[FlowSample], k: &Intrinsics, params: &RansacParams) -> PoseOrSignal {
    let valid: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].valid).collect();
    let n_valid = valid.len();
    let signal = |reason| {
        PoseOrSignal::Signal(TofSignal {
            reason,
            valid_samples: n_valid,
        })
    };
    if n_valid < MIN_SAMPLES {
        return signal(SignalReason::TooFewValidSamples);
    }
    let min_size = params.min_inliers(n_valid);

    let mut best: Option<Hypothesis> = None;
    for iteration in 0..params.iterations {
        let pick = minimal_sample(params.seed, iteration, n_valid);
        let minimal = pick.map(|p| samples[valid[p]]);
        let Ok(hyp) = solve_pose(&minimal, k, HYPOTHESIS_GN_ITERATIONS) else {
            continue;
        };
        let mut inliers = Vec::new();
        let mut sum = 0.0;
        for &i in &valid {
            let r = residual(&samples[i], &hyp.pose, k).unwrap_or(f64::INFINITY);
            if r < params.threshold {
                inliers.push(i);
                sum += r;
            }
        }
        if inliers.len() < min_size {
            continue;
        }
        let mean = sum / inliers.len() as f64;
        // Strict comparison: ties go to the earlier hypothesis.
        if best.as_ref().is_none_or(|b| mean < b.mean) {
            best = Some(Hypothesis { inliers, mean });
        }
    }

    let Some(best) = best else {
        return signal(SignalReason::NoConsensus);
    };
    let subset: Vec<FlowSample> = best.inliers.iter().map(|&i| samples[i]).collect();
    match solve_pose(&subset, k, REFIT_GN_ITERATIONS) {
        Ok(sol) => PoseOrSignal::Pose(PoseEstimate {
            pose: sol.pose,
            inliers: best.inliers,
            mean_residual: sol.mean_residual,
            valid_samples: n_valid,
        }),
        Err(_) => signal(SignalReason::DegenerateRefit),
    }
}
