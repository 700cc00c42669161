//! Frame-by-frame controller: decides per frame whether to take the measured
//! depth map or to predict one by warping the last measurement with the
//! estimated camera motion, and scores the predictions.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::AssociatedFrame;
use crate::flow::{compute_flow, FlowError, GridSpec};
use crate::geometry::{DepthMap, Intrinsics, Pose};
use crate::ransac::{estimate, PoseOrSignal, RansacParams, SignalReason};
use crate::warp::{compose, hole_fraction, median_infill, reproject, WarpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("sequence is empty")]
    Empty,
    #[error("frame {index}: image {got_w}x{got_h} does not match intrinsics {want_w}x{want_h}")]
    SizeMismatch {
        index: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("invalid parameters: {0}")]
    Params(&'static str),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Warp(#[from] WarpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub grid: GridSpec,
    /// Frame `i` uses `ransac.seed + i` as its sampling seed.
    pub ransac: RansacParams,
    /// Kernel for [`median_infill`] of predicted maps, if any.
    pub median_fill: Option<usize>,
    pub limit: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            ransac: RansacParams::default(),
            median_fill: None,
            limit: 100,
        }
    }
}

/// Errors between a predicted and a reference depth map over pixels valid in
/// both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub mre_percent: f64,
    pub mae_cm: f64,
    pub rmse_cm: f64,
    pub pixels: usize,
}

/// `None` when no pixel is valid in both maps.
pub fn depth_metrics(estimate: &DepthMap, truth: &DepthMap) -> Option<DepthMetrics> {
    assert_eq!(
        (estimate.width(), estimate.height()),
        (truth.width(), truth.height()),
        "depth maps differ in size"
    );
    let (mut rel, mut abs, mut sq, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (&e, &t) in estimate.data().iter().zip(truth.data()) {
        if e > 0.0 && t > 0.0 {
            let d = (e - t).abs();
            rel += d / t;
            abs += d;
            sq += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    let n_f = n as f64;
    Some(DepthMetrics {
        mre_percent: 100.0 * rel / n_f,
        mae_cm: 100.0 * abs / n_f,
        rmse_cm: 100.0 * (sq / n_f).sqrt(),
        pixels: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub valid_samples: usize,
    pub inliers: usize,
    pub mean_residual: Option<f64>,
    /// Hole fraction of the warped map, before any infill.
    pub hole_fraction: Option<f64>,
    pub signal: Option<SignalReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDecision {
    pub frame_index: usize,
    pub timestamp: f64,
    pub used_tof: bool,
    pub depth_out: DepthMap,
    /// Motion from the last measured frame to this one.
    pub pose_cumulative: Pose,
    pub diagnostics: Diagnostics,
    /// Against the frame's measured depth; only for predicted frames.
    pub metrics: Option<DepthMetrics>,
}

/// A [`FrameDecision`] without its depth map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub timestamp: f64,
    pub used_tof: bool,
    pub pose_cumulative: Pose,
    pub diagnostics: Diagnostics,
    pub metrics: Option<DepthMetrics>,
}

impl From<&FrameDecision> for FrameRecord {
    fn from(d: &FrameDecision) -> Self {
        Self {
            frame_index: d.frame_index,
            timestamp: d.timestamp,
            used_tof: d.used_tof,
            pose_cumulative: d.pose_cumulative,
            diagnostics: d.diagnostics,
            metrics: d.metrics,
        }
    }
}

/// Stateful controller; feed frames in order with [`Pipeline::step`].
#[derive(Debug, Clone)]
pub struct Pipeline {
    k: Intrinsics,
    config: PipelineConfig,
    index: usize,
    state: Option<State>,
}

#[derive(Debug, Clone)]
struct State {
    image: crate::geometry::GrayImage,
    depth: DepthMap,
    measured: DepthMap,
    cumulative: Pose,
}

impl Pipeline {
    pub fn new(k: Intrinsics, config: PipelineConfig) -> Result<Self, PipelineError> {
        config.grid.validate()?;
        config.ransac.validate().map_err(PipelineError::Params)?;
        if let Some(kernel) = config.median_fill {
            if kernel < 3 || kernel.is_multiple_of(2) {
                return Err(WarpError::InvalidKernel(kernel).into());
            }
        }
        Ok(Self {
            k,
            config,
            index: 0,
            state: None,
        })
    }

    fn measured(&mut self, frame: &AssociatedFrame, diagnostics: Diagnostics) -> FrameDecision {
        self.state = Some(State {
            image: frame.image.clone(),
            depth: frame.depth.clone(),
            measured: frame.depth.clone(),
            cumulative: Pose::identity(),
        });
        FrameDecision {
            frame_index: self.index,
            timestamp: frame.rgb_timestamp,
            used_tof: true,
            depth_out: frame.depth.clone(),
            pose_cumulative: Pose::identity(),
            diagnostics,
            metrics: None,
        }
    }

    pub fn step(&mut self, frame: &AssociatedFrame) -> Result<FrameDecision, PipelineError> {
        let k = &self.k;
        for (w, h) in [
            (frame.image.width(), frame.image.height()),
            (frame.depth.width(), frame.depth.height()),
        ] {
            if w != k.width || h != k.height {
                return Err(PipelineError::SizeMismatch {
                    index: self.index,
                    got_w: w,
                    got_h: h,
                    want_w: k.width,
                    want_h: k.height,
                });
            }
        }
        let decision = match &self.state {
            None => self.measured(frame, Diagnostics::default()),
            Some(state) => {
                let samples =
                    compute_flow(&state.image, &frame.image, &state.depth, &self.config.grid)?;
                let params = RansacParams {
                    seed: self.config.ransac.seed.wrapping_add(self.index as u64),
                    ..self.config.ransac
                };
                match estimate(&samples, k, &params) {
                    PoseOrSignal::Signal(s) => self.measured(
                        frame,
                        Diagnostics {
                            valid_samples: s.valid_samples,
                            signal: Some(s.reason),
                            ..Diagnostics::default()
                        },
                    ),
                    PoseOrSignal::Pose(est) => {
                        let cumulative = compose(&est.pose, &state.cumulative);
                        let (warped, _) = reproject(&state.measured, &cumulative, k)?;
                        let holes = hole_fraction(&warped);
                        let depth_out = match self.config.median_fill {
                            Some(kernel) => median_infill(&warped, kernel)?,
                            None => warped,
                        };
                        let metrics = depth_metrics(&depth_out, &frame.depth);
                        let state = self.state.as_mut().expect("matched Some");
                        state.image = frame.image.clone();
                        state.depth = depth_out.clone();
                        state.cumulative = cumulative;
                        FrameDecision {
                            frame_index: self.index,
                            timestamp: frame.rgb_timestamp,
                            used_tof: false,
                            depth_out,
                            pose_cumulative: cumulative,
                            diagnostics: Diagnostics {
                                valid_samples: est.valid_samples,
                                inliers: est.inliers.len(),
                                mean_residual: Some(est.mean_residual),
                                hole_fraction: Some(holes),
                                signal: None,
                            },
                            metrics,
                        }
                    }
                }
            }
        };
        self.index += 1;
        Ok(decision)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub rows: Vec<FrameRecord>,
    pub tof_frames: usize,
    pub duty_cycle_percent: f64,
    /// Medians over predicted frames that had overlapping pixels.
    pub mre_percent: Option<f64>,
    pub mae_cm: Option<f64>,
    pub rmse_cm: Option<f64>,
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

impl SequenceReport {
    pub fn from_rows(rows: Vec<FrameRecord>) -> Self {
        let tof_frames = rows.iter().filter(|r| r.used_tof).count();
        let duty_cycle_percent = if rows.is_empty() {
            0.0
        } else {
            100.0 * tof_frames as f64 / rows.len() as f64
        };
        let metrics: Vec<DepthMetrics> = rows.iter().filter_map(|r| r.metrics).collect();
        let col = |f: fn(&DepthMetrics) -> f64| median(&metrics.iter().map(f).collect::<Vec<_>>());
        Self {
            tof_frames,
            duty_cycle_percent,
            mre_percent: col(|m| m.mre_percent),
            mae_cm: col(|m| m.mae_cm),
            rmse_cm: col(|m| m.rmse_cm),
            rows,
        }
    }
}

/// Runs the controller over the first `config.limit` frames, handing each
/// decision to `sink` before its depth map is dropped.
pub fn run_sequence_with<E>(
    frames: &[AssociatedFrame],
    k: &Intrinsics,
    config: &PipelineConfig,
    mut sink: impl FnMut(&FrameDecision) -> Result<(), E>,
) -> Result<Result<SequenceReport, E>, PipelineError> {
    if frames.is_empty() || config.limit == 0 {
        return Err(PipelineError::Empty);
    }
    let mut pipeline = Pipeline::new(*k, *config)?;
    let mut rows = Vec::new();
    for frame in frames.iter().take(config.limit) {
        let d = pipeline.step(frame)?;
        if let Err(e) = sink(&d) {
            return Ok(Err(e));
        }
        rows.push(FrameRecord::from(&d));
    }
    Ok(Ok(SequenceReport::from_rows(rows)))
}

pub fn run_sequence(
    frames: &[AssociatedFrame],
    k: &Intrinsics,
    config: &PipelineConfig,
) -> Result<SequenceReport, PipelineError> {
    run_sequence_with(
        frames,
        k,
        config,
        |_| Ok::<(), std::convert::Infallible>(()),
    )
    .map(|r| r.unwrap_or_else(|never| match never {}))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub duty_cycle_percent: f64,
    pub mre_percent: Option<f64>,
}

/// One full run per threshold; runs execute in parallel.
pub fn sweep_threshold(
    frames: &[AssociatedFrame],
    k: &Intrinsics,
    config: &PipelineConfig,
    thresholds: &[f64],
) -> Result<Vec<SweepRow>, PipelineError> {
    thresholds
        .par_iter()
        .map(|&threshold| {
            let config = PipelineConfig {
                ransac: RansacParams {
                    threshold,
                    ..config.ransac
                },
                ..*config
            };
            let r = run_sequence(frames, k, &config)?;
            Ok(SweepRow {
                threshold,
                duty_cycle_percent: r.duty_cycle_percent,
                mre_percent: r.mre_percent,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub const METRICS_HEADER: &str =
    "frame_index,used_tof,mre,mae_cm,rmse_cm,inliers,mean_residual,hole_fraction";

pub fn metrics_csv_row(r: &FrameRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.frame_index,
        u8::from(r.used_tof),
        opt(r.metrics.map(|m| m.mre_percent)),
        opt(r.metrics.map(|m| m.mae_cm)),
        opt(r.metrics.map(|m| m.rmse_cm)),
        r.diagnostics.inliers,
        opt(r.diagnostics.mean_residual),
        opt(r.diagnostics.hole_fraction),
    )
}

pub fn write_metrics_csv(report: &SequenceReport, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in &report.rows {
        writeln!(out, "{}", metrics_csv_row(r))?;
    }
    Ok(())
}

/// `timestamp tx ty tz qx qy qz qw`.
pub fn trajectory_line(timestamp: f64, pose: &Pose) -> String {
    let t = pose.translation();
    let [qx, qy, qz, qw] = pose.quaternion();
    format!(
        "{timestamp:.6} {:.9} {:.9} {:.9} {qx:.9} {qy:.9} {qz:.9} {qw:.9}",
        t.x, t.y, t.z
    )
}

pub fn write_sweep_csv(rows: &[SweepRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "threshold,dc,mre")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{}",
            r.threshold,
            r.duty_cycle_percent,
            opt(r.mre_percent)
        )?;
    }
    Ok(())
}
