//! Synthetic rigid scenes with known motion.
//!
//! Two kinds of fixtures live here: exact flow/depth correspondences for a
//! known pose (optionally corrupted and quantized the way block matching
//! would report them), and rendered image/depth pairs of textured planar
//! patches for exercising the image-level pipeline.

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::AssociatedFrame;
use crate::flow::FlowSample;
use crate::geometry::{back_project, project, DepthMap, GrayImage, Intrinsics, Point3, Pose};
use crate::pose::solve_pose;
use crate::ransac::{estimate, RansacParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("point {0} does not project inside the image in both frames")]
    OutOfView(usize),
    #[error("could not place {wanted} points in view after {tries} tries")]
    PlacementFailed { wanted: usize, tries: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

fn in_view(p: &Point3, k: &Intrinsics) -> bool {
    match project(p, k) {
        Ok((u, v)) => {
            u >= 0.0 && v >= 0.0 && u <= (k.width - 1) as f64 && v <= (k.height - 1) as f64
        }
        Err(_) => false,
    }
}

/// Points seen from two cameras related by `pose_true`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub points: Vec<Point3>,
    pub pose_true: Pose,
    pub k: Intrinsics,
    pub seed: u64,
}

impl SynthScene {
    pub fn new(points: Vec<Point3>, pose_true: Pose, k: Intrinsics) -> Result<Self, SynthError> {
        for (i, p) in points.iter().enumerate() {
            if !in_view(p, &k) || !in_view(&pose_true.apply(p), &k) {
                return Err(SynthError::OutOfView(i));
            }
        }
        Ok(Self {
            points,
            pose_true,
            k,
            seed: 0,
        })
    }

    /// `n` points on integer pixels of the first view with depths uniform in
    /// `depth_range`, rejection-sampled until they stay in view.
    pub fn random(
        k: Intrinsics,
        pose_true: Pose,
        n: usize,
        depth_range: (f64, f64),
        seed: u64,
    ) -> Result<Self, SynthError> {
        let (lo, hi) = depth_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(SynthError::InvalidParameter("depth range"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_tries = 1000 * n.max(1);
        let mut points = Vec::with_capacity(n);
        let mut tries = 0;
        while points.len() < n {
            if tries == max_tries {
                return Err(SynthError::PlacementFailed { wanted: n, tries });
            }
            tries += 1;
            let u = rng.random_range(0..k.width) as f64;
            let v = rng.random_range(0..k.height) as f64;
            let z = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            let x = back_project(u, v, z, &k).expect("positive depth");
            if in_view(&pose_true.apply(&x), &k) {
                points.push(x);
            }
        }
        Ok(Self {
            points,
            pose_true,
            k,
            seed,
        })
    }
}

/// Exact flow of every scene point under the true pose.
pub fn generate(scene: &SynthScene) -> Vec<FlowSample> {
    scene
        .points
        .iter()
        .map(|x| {
            let (u, v) = project(x, &scene.k).expect("scene points are in front of the camera");
            let y = scene.pose_true.apply(x);
            let (uj, vj) = project(&y, &scene.k).expect("scene points stay in view");
            FlowSample::new(u, v, uj - u, vj - v, x.z)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthNoise {
    /// `z ← z · (1 + e)`, `e ~ U(−m, m)`.
    Multiplicative(f64),
    /// `z ← z + e`, `e ~ U(−m, m)` meters (clamped to stay positive).
    Additive(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub depth_noise: Option<DepthNoise>,
    /// Uniform additive flow noise `U(−m, m)` px per component.
    pub flow_noise: Option<f64>,
    /// Fraction of samples hit by each enabled noise source. Depth and flow
    /// corruption pick their subsets independently.
    pub corrupt_fraction: f64,
    /// Round every flow vector to whole pixels, as block matching reports.
    pub quantize_flow: bool,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self::NONE
    }
}

impl CorruptionSpec {
    pub const NONE: Self = Self {
        depth_noise: None,
        flow_noise: None,
        corrupt_fraction: 0.0,
        quantize_flow: false,
    };

    pub const DEFAULT_DEPTH_NOISE: DepthNoise = DepthNoise::Multiplicative(0.30);
    pub const DEFAULT_FLOW_NOISE: f64 = 10.0;
    pub const DEFAULT_FRACTION: f64 = 0.3;

    pub fn depth_only() -> Self {
        Self {
            depth_noise: Some(Self::DEFAULT_DEPTH_NOISE),
            corrupt_fraction: Self::DEFAULT_FRACTION,
            quantize_flow: true,
            ..Self::NONE
        }
    }

    pub fn flow_only() -> Self {
        Self {
            flow_noise: Some(Self::DEFAULT_FLOW_NOISE),
            corrupt_fraction: Self::DEFAULT_FRACTION,
            quantize_flow: true,
            ..Self::NONE
        }
    }

    pub fn both() -> Self {
        Self {
            depth_noise: Some(Self::DEFAULT_DEPTH_NOISE),
            flow_noise: Some(Self::DEFAULT_FLOW_NOISE),
            corrupt_fraction: Self::DEFAULT_FRACTION,
            quantize_flow: true,
        }
    }

    pub fn quantized_only() -> Self {
        Self {
            quantize_flow: true,
            ..Self::NONE
        }
    }
}

/// Applies `spec` to a copy of `samples`. Samples outside the corrupted
/// subsets are untouched unless quantization is on.
pub fn corrupt(
    samples: &[FlowSample],
    spec: &CorruptionSpec,
    seed: u64,
) -> Result<Vec<FlowSample>, SynthError> {
    if !(0.0..=1.0).contains(&spec.corrupt_fraction) {
        return Err(SynthError::InvalidParameter(
            "corrupt_fraction outside [0, 1]",
        ));
    }
    let n = samples.len();
    let count = (spec.corrupt_fraction * n as f64).round() as usize;
    let mut out = samples.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if let Some(noise) = spec.depth_noise {
        rng.set_stream(1);
        for i in index::sample(&mut rng, n, count) {
            let s = &mut out[i];
            s.z = match noise {
                DepthNoise::Multiplicative(m) => s.z * (1.0 + rng.random_range(-m..=m)),
                DepthNoise::Additive(m) => s.z + rng.random_range(-m..=m),
            }
            .max(1e-3);
        }
    }
    if let Some(m) = spec.flow_noise {
        rng.set_stream(2);
        for i in index::sample(&mut rng, n, count) {
            out[i].du += rng.random_range(-m..=m);
            out[i].dv += rng.random_range(-m..=m);
        }
    }
    if spec.quantize_flow {
        for s in &mut out {
            s.du = s.du.round();
            s.dv = s.dv.round();
        }
    }
    Ok(out)
}

/// Pose with a uniformly random axis, angle uniform in `[0, max_angle]` and
/// translation uniform in direction with norm uniform in `[0, max_translation]`.
pub fn random_pose(rng: &mut impl Rng, max_angle: f64, max_translation: f64) -> Pose {
    let unit = |rng: &mut dyn FnMut() -> f64| loop {
        let v = Vector3::new(rng(), rng(), rng());
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    };
    let mut draw = || rng.random_range(-1.0..1.0);
    let axis = unit(&mut draw);
    let dir = unit(&mut draw);
    let angle = rng.random_range(0.0..=max_angle);
    let t = rng.random_range(0.0..=max_translation);
    Pose::new(axis, angle, dir * t).expect("unit axis")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table2Config {
    pub trials: usize,
    pub points: usize,
    pub depth_range: (f64, f64),
    pub max_angle: f64,
    pub max_translation: f64,
    pub ransac: RansacParams,
}

impl Default for Table2Config {
    fn default() -> Self {
        Self {
            trials: 100,
            points: 144,
            depth_range: (0.5, 5.0),
            max_angle: 2f64.to_radians(),
            max_translation: 0.05,
            ransac: RansacParams::default(),
        }
    }
}

/// Mean translation error with and without robust estimation for one
/// corruption regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeResult {
    pub error_without: f64,
    pub error_with: f64,
    /// Trials where the robust estimator asked for a measurement instead; the
    /// plain estimate is used for those.
    pub signals: usize,
}

impl RegimeResult {
    /// `100 · (1 − with / without)`.
    pub fn reduction_percent(&self) -> f64 {
        100.0 * (1.0 - self.error_with / self.error_without)
    }
}

/// Runs `trials` random scenes through both estimators under `spec`.
///
/// The plain estimator is three Gauss-Newton steps over all samples; the
/// robust one is [`estimate`]. Trial `i` derives every random draw from
/// `(seed, i)`.
pub fn run_regime(
    spec: &CorruptionSpec,
    config: &Table2Config,
    k: &Intrinsics,
    seed: u64,
) -> Result<RegimeResult, SynthError> {
    let trials: Vec<(f64, f64, bool)> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let truth = random_pose(&mut rng, config.max_angle, config.max_translation);
            let scene_seed: u64 = rng.random();
            let noise_seed: u64 = rng.random();
            let scene =
                SynthScene::random(*k, truth, config.points, config.depth_range, scene_seed)?;
            let samples = corrupt(&generate(&scene), spec, noise_seed)?;
            let plain = solve_pose(&samples, k, 3).map(|s| s.pose);
            let plain_err = plain
                .map(|p| (p.translation() - truth.translation()).norm())
                .unwrap_or(f64::INFINITY);
            let params = RansacParams {
                seed: rng.random(),
                ..config.ransac
            };
            let (robust_err, signalled) = match estimate(&samples, k, &params).pose() {
                Some(e) => ((e.pose.translation() - truth.translation()).norm(), false),
                None => (plain_err, true),
            };
            Ok((plain_err, robust_err, signalled))
        })
        .collect::<Result<_, SynthError>>()?;
    let n = trials.len().max(1) as f64;
    Ok(RegimeResult {
        error_without: trials.iter().map(|t| t.0).sum::<f64>() / n,
        error_with: trials.iter().map(|t| t.1).sum::<f64>() / n,
        signals: trials.iter().filter(|t| t.2).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table2Report {
    pub depth: RegimeResult,
    pub flow: RegimeResult,
    pub both: RegimeResult,
}

impl Table2Report {
    /// Reductions in percent: depth-only, flow-only, both.
    pub fn reductions(&self) -> [f64; 3] {
        [
            self.depth.reduction_percent(),
            self.flow.reduction_percent(),
            self.both.reduction_percent(),
        ]
    }
}

/// Camera used by the synthetic experiments (Kinect-like VGA).
pub fn default_intrinsics() -> Intrinsics {
    Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480, 5000.0).expect("valid constants")
}

pub const MIN_TABLE2_TRIALS: usize = 30;

pub fn table2_experiment_with(
    config: &Table2Config,
    seed: u64,
) -> Result<Table2Report, SynthError> {
    if config.trials < MIN_TABLE2_TRIALS {
        return Err(SynthError::InvalidParameter(
            "at least 30 trials are required",
        ));
    }
    let k = default_intrinsics();
    Ok(Table2Report {
        depth: run_regime(&CorruptionSpec::depth_only(), config, &k, seed)?,
        flow: run_regime(
            &CorruptionSpec::flow_only(),
            config,
            &k,
            seed.wrapping_add(1),
        )?,
        both: run_regime(&CorruptionSpec::both(), config, &k, seed.wrapping_add(2))?,
    })
}

/// Depth-only, flow-only and combined corruption with default settings.
pub fn table2_experiment(seed: u64, trials: usize) -> Result<Table2Report, SynthError> {
    table2_experiment_with(
        &Table2Config {
            trials,
            ..Table2Config::default()
        },
        seed,
    )
}

// ---------------------------------------------------------------------------
// Rendered scenes

fn hash2(i: i64, j: i64, seed: u64) -> f64 {
    let mut x = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 29;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 32;
    (x & 0xFFFF) as f64 / 65535.0
}

/// Smoothstep-interpolated lattice noise in `[0, 1]`.
pub fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (i, j) = (x.floor(), y.floor());
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (a, b) = (s(x - i), s(y - j));
    let (i, j) = (i as i64, j as i64);
    let top = hash2(i, j, seed) * (1.0 - a) + hash2(i + 1, j, seed) * a;
    let bot = hash2(i, j + 1, seed) * (1.0 - a) + hash2(i + 1, j + 1, seed) * a;
    top * (1.0 - b) + bot * b
}

/// A textured planar rectangle, described in the first camera's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexturedQuad {
    pub center: Point3,
    /// Unit in-plane directions, orthogonal.
    pub axis_u: Vector3<f64>,
    pub axis_v: Vector3<f64>,
    pub half_u: f64,
    pub half_v: f64,
    /// Texture cell size in meters.
    pub texel: f64,
    pub seed: u64,
}

impl TexturedQuad {
    /// Fronto-parallel rectangle at depth `z`, large enough to be treated as
    /// an infinite wall.
    pub fn wall(z: f64, texel: f64, seed: u64) -> Self {
        Self {
            center: Point3::new(0.0, 0.0, z),
            axis_u: Vector3::x(),
            axis_v: Vector3::y(),
            half_u: 1e3,
            half_v: 1e3,
            texel,
            seed,
        }
    }

    fn intensity(&self, a: f64, b: f64) -> u8 {
        let (x, y) = (a / self.texel, b / self.texel);
        let n = 0.65 * value_noise(x, y, self.seed)
            + 0.35 * value_noise(2.0 * x, 2.0 * y, self.seed ^ 0x5555);
        (20.0 + 215.0 * n).round().clamp(0.0, 255.0) as u8
    }
}

/// A set of quads; the nearest hit along each ray is visible.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadScene {
    pub quads: Vec<TexturedQuad>,
}

impl QuadScene {
    pub fn new(quads: Vec<TexturedQuad>) -> Self {
        Self { quads }
    }

    /// Renders the view of a camera whose coordinates relate to the first
    /// camera's by `pose` (`X_cam = R X_first + T`). Background pixels are
    /// black with invalid depth.
    pub fn render(&self, k: &Intrinsics, pose: &Pose) -> (GrayImage, DepthMap) {
        let r = pose.rotation_matrix();
        let t = pose.translation();
        // Quads expressed in the rendering camera's frame.
        let local: Vec<[Vector3<f64>; 4]> = self
            .quads
            .iter()
            .map(|q| {
                let c = r * q.center.coords + t;
                let au = r * q.axis_u;
                let av = r * q.axis_v;
                [c, au, av, au.cross(&av)]
            })
            .collect();
        let rows: Vec<Vec<(u8, f64)>> = (0..k.height)
            .into_par_iter()
            .map(|v| {
                (0..k.width)
                    .map(|u| {
                        let ray =
                            Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
                        let mut best: Option<(f64, u8)> = None;
                        for (q, [c, au, av, n]) in self.quads.iter().zip(&local) {
                            let denom = n.dot(&ray);
                            if denom.abs() < 1e-12 {
                                continue;
                            }
                            let s = n.dot(c) / denom;
                            if s.is_nan() || s <= 1e-6 || best.is_some_and(|(bs, _)| bs <= s) {
                                continue;
                            }
                            let d = ray * s - c;
                            let (a, b) = (d.dot(au), d.dot(av));
                            if a.abs() > q.half_u || b.abs() > q.half_v {
                                continue;
                            }
                            best = Some((s, q.intensity(a, b)));
                        }
                        match best {
                            Some((s, i)) => (i, s),
                            None => (0, 0.0),
                        }
                    })
                    .collect()
            })
            .collect();
        let mut img = Vec::with_capacity(k.width * k.height);
        let mut depth = Vec::with_capacity(k.width * k.height);
        for row in rows {
            for (i, z) in row {
                img.push(i);
                depth.push(z);
            }
        }
        (
            GrayImage::new(k.width, k.height, img).expect("sized buffer"),
            DepthMap::new(k.width, k.height, depth).expect("non-negative depths"),
        )
    }
}

/// Poses of a camera moving with constant per-frame motion `step`, starting
/// at the identity: `[I, step, step∘step, ...]`.
pub fn constant_motion(step: &Pose, frames: usize) -> Vec<Pose> {
    let mut out = Vec::with_capacity(frames);
    let mut p = Pose::identity();
    for _ in 0..frames {
        out.push(p);
        p = crate::warp::compose(step, &p);
    }
    out
}

/// Renders one frame per pose, timestamped at `fps`, with depth quantized to
/// `1 / k.depth_scale` as a sensor would report it.
pub fn render_sequence(
    scene: &QuadScene,
    k: &Intrinsics,
    poses: &[Pose],
    fps: f64,
) -> Vec<AssociatedFrame> {
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (image, depth) = scene.render(k, p);
            let depth = DepthMap::from_fn(k.width, k.height, |u, v| {
                (depth.get(u, v) * k.depth_scale).round() / k.depth_scale
            });
            let t = i as f64 / fps;
            AssociatedFrame {
                rgb_timestamp: t,
                depth_timestamp: t,
                image,
                depth,
            }
        })
        .collect()
}

/// A textured wall 3 m away with a box face 1.5 m away in front of it.
pub fn desk_scene(seed: u64) -> QuadScene {
    let wall = TexturedQuad::wall(3.0, 0.04, seed);
    let front = TexturedQuad {
        center: Point3::new(-0.2, 0.1, 1.5),
        half_u: 0.3,
        half_v: 0.25,
        texel: 0.02,
        seed: seed ^ 0xABCD,
        ..wall
    };
    QuadScene::new(vec![wall, front])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swapped_labels_flip_reduction_sign() {
        let r = RegimeResult {
            error_without: 4.0,
            error_with: 1.0,
            signals: 0,
        };
        let s = RegimeResult {
            error_without: 1.0,
            error_with: 4.0,
            signals: 0,
        };
        assert_eq!(r.reduction_percent(), 75.0);
        assert!(s.reduction_percent() < 0.0);
    }

    #[test]
    fn identity_pose_gives_zero_flow() {
        let k = default_intrinsics();
        let scene = SynthScene::random(k, Pose::identity(), 50, (0.5, 5.0), 1).unwrap();
        assert!(generate(&scene)
            .iter()
            .all(|s| s.du == 0.0 && s.dv == 0.0 && s.valid));
    }

    #[test]
    fn optical_axis_rotation_flow_is_tangent() {
        let k = default_intrinsics();
        let theta = 3f64.to_radians();
        let pose = Pose::new(Vector3::z(), theta, Vector3::zeros()).unwrap();
        let (r, z) = (0.4, 2.0);
        let scene = SynthScene::new(vec![Point3::new(r, 0.0, z)], pose, k).unwrap();
        let s = generate(&scene)[0];
        // The projection rotates on a circle of radius fx·r/z about (cx, cy).
        let rho = k.fx * r / z;
        assert!((s.u - k.cx - rho).abs() < 1e-9);
        assert!((s.du - rho * (theta.cos() - 1.0)).abs() < 1e-9);
        assert!((s.dv - rho * theta.sin()).abs() < 1e-9);
        let (x1, y1) = (s.u + s.du - k.cx, s.v + s.dv - k.cy);
        assert!(((x1 * x1 + y1 * y1).sqrt() - rho).abs() < 1e-9);
    }

    #[test]
    fn scene_rejects_out_of_view_points() {
        let k = default_intrinsics();
        let p = Pose::from_translation(Vector3::new(10.0, 0.0, 0.0));
        assert_eq!(
            SynthScene::new(vec![Point3::new(0.0, 0.0, 1.0)], p, k),
            Err(SynthError::OutOfView(0))
        );
    }

    #[test]
    fn corrupt_identity_and_quantize_bound() {
        let k = default_intrinsics();
        let pose = Pose::new(Vector3::y(), 0.01, Vector3::new(0.01, 0.0, 0.0)).unwrap();
        let exact = generate(&SynthScene::random(k, pose, 144, (0.5, 5.0), 3).unwrap());
        assert_eq!(corrupt(&exact, &CorruptionSpec::NONE, 5).unwrap(), exact);
        let q = corrupt(&exact, &CorruptionSpec::quantized_only(), 5).unwrap();
        for (a, b) in q.iter().zip(&exact) {
            assert!((a.du - b.du).abs() <= 0.5 && (a.dv - b.dv).abs() <= 0.5);
            assert_eq!(a.du.fract(), 0.0);
        }
    }

    #[test]
    fn corrupt_touches_only_the_chosen_fraction() {
        let k = default_intrinsics();
        let pose = Pose::new(Vector3::x(), 0.02, Vector3::new(0.0, 0.02, 0.0)).unwrap();
        let exact = generate(&SynthScene::random(k, pose, 100, (0.5, 5.0), 4).unwrap());
        let spec = CorruptionSpec {
            quantize_flow: false,
            ..CorruptionSpec::flow_only()
        };
        let noisy = corrupt(&exact, &spec, 9).unwrap();
        let changed = noisy.iter().zip(&exact).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 30);
        for (a, b) in noisy.iter().zip(&exact) {
            if a != b {
                assert_eq!(a.z.to_bits(), b.z.to_bits());
            } else {
                assert_eq!(a.du.to_bits(), b.du.to_bits());
            }
        }
        let bad = CorruptionSpec {
            corrupt_fraction: 1.5,
            ..spec
        };
        assert!(corrupt(&exact, &bad, 0).is_err());
    }

    #[test]
    fn render_fronto_parallel_wall() {
        let k = default_intrinsics();
        let scene = QuadScene::new(vec![TexturedQuad::wall(2.0, 0.03, 1)]);
        let (img, depth) = scene.render(&k, &Pose::identity());
        assert_eq!(depth.valid_count(), 640 * 480);
        assert!(depth.data().iter().all(|&z| (z - 2.0).abs() < 1e-12));
        let (lo, hi) = img
            .data()
            .iter()
            .fold((255, 0), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        assert!(hi - lo > 100, "texture has contrast");

        let (_, moved) = scene.render(&k, &Pose::from_translation(Vector3::new(0.0, 0.0, -0.5)));
        assert!(moved.data().iter().all(|&z| (z - 1.5).abs() < 1e-12));
    }

    #[test]
    fn render_occluder_in_front() {
        let k = default_intrinsics();
        let mut q = TexturedQuad::wall(3.0, 0.03, 1);
        let wall = q;
        q.center = Point3::new(0.0, 0.0, 1.0);
        q.half_u = 0.1;
        q.half_v = 0.1;
        let scene = QuadScene::new(vec![wall, q]);
        let (_, depth) = scene.render(&k, &Pose::identity());
        assert_eq!(depth.get(319, 239), 1.0);
        assert_eq!(depth.get(5, 5), 3.0);
    }

    #[test]
    fn constant_motion_chains_steps() {
        let step = Pose::new(Vector3::y(), 0.01, Vector3::new(0.01, 0.0, 0.0)).unwrap();
        let poses = constant_motion(&step, 3);
        assert_eq!(poses[0], Pose::identity());
        let x = Point3::new(0.1, 0.2, 1.0);
        let twice = step.apply(&step.apply(&x));
        assert!((poses[2].apply(&x) - twice).norm() < 1e-12);
    }
}
