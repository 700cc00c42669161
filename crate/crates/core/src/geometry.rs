//! Camera model, image containers and rigid-motion primitives shared by the
//! rest of the crate.
//!
//! Pixel coordinates are absolute (origin at the top-left pixel center); the
//! principal point is subtracted inside [`back_project`] and added back in
//! [`project`]. Depth is measured along the optical axis in meters.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// A camera-centric 3D point in meters.
pub type Point3 = nalgebra::Point3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth must be positive and finite, got {0}")]
    InvalidDepth(f64),
    #[error("non-finite pixel coordinate ({0}, {1})")]
    NonFinitePixel(f64, f64),
    #[error("point is on or behind the camera plane (z = {0})")]
    BehindCamera(f64),
    #[error("buffer length {len} does not match {width}x{height}")]
    BufferSize {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid depth value {value} at index {index}")]
    InvalidDepthValue { index: usize, value: f64 },
    #[error("rotation axis must be non-zero and finite")]
    InvalidAxis,
}

/// Pinhole intrinsics plus the depth encoding scale of the source sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Depth units per meter in encoded depth files (5000 for TUM).
    pub depth_scale: f64,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        depth_scale: f64,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            depth_scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_owned()));
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx.is_finite() && self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside [0, width)");
        }
        if !(self.cy.is_finite() && self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside [0, height)");
        }
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return bad("depth_scale must be positive");
        }
        Ok(())
    }

    /// Same camera with a different image size (principal point unchanged).
    pub fn with_size(&self, width: usize, height: usize) -> Result<Self, GeometryError> {
        Self::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            width,
            height,
            self.depth_scale,
        )
    }
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, GeometryError> {
        if data.len() != width * height {
            return Err(GeometryError::BufferSize {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub(crate) fn row(&self, v: usize) -> &[u8] {
        &self.data[v * self.width..(v + 1) * self.width]
    }
}

/// Dense depth in meters, row-major. A value of 0 marks a missing pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, GeometryError> {
        if data.len() != width * height {
            return Err(GeometryError::BufferSize {
                len: data.len(),
                width,
                height,
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, z)| !z.is_finite() || **z < 0.0)
        {
            return Err(GeometryError::InvalidDepthValue { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// All-invalid map.
    pub fn empty(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, z: f64) -> Self {
        assert!(z.is_finite() && z >= 0.0);
        Self {
            width,
            height,
            data: vec![z; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                let z = f(u, v);
                data.push(if z.is_finite() && z > 0.0 { z } else { 0.0 });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    /// Sets a pixel; negative or non-finite values are stored as invalid.
    #[inline]
    pub fn set(&mut self, u: usize, v: usize, z: f64) {
        self.data[v * self.width + u] = if z.is_finite() && z > 0.0 { z } else { 0.0 };
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&z| z > 0.0).count()
    }
}

/// Maps pixel `(u, v)` with depth `z` to its camera-centric 3D point.
pub fn back_project(u: f64, v: f64, z: f64, k: &Intrinsics) -> Result<Point3, GeometryError> {
    if !(z.is_finite() && z > 0.0) {
        return Err(GeometryError::InvalidDepth(z));
    }
    if !(u.is_finite() && v.is_finite()) {
        return Err(GeometryError::NonFinitePixel(u, v));
    }
    Ok(Point3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z))
}

/// Sub-pixel projection of a point in front of the camera.
pub fn project(p: &Point3, k: &Intrinsics) -> Result<(f64, f64), GeometryError> {
    if !(p.z.is_finite() && p.z > 0.0) {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Cross-product matrix `K` with `K x = a × x`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Rigid motion `x ↦ R x + T` with `R` stored as a unit axis and an angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    axis: Vector3<f64>,
    angle: f64,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

const CANONICAL_AXIS: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

impl Pose {
    pub fn identity() -> Self {
        Self {
            axis: CANONICAL_AXIS,
            angle: 0.0,
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from an axis (normalized here) and an angle in radians.
    ///
    /// The angle is wrapped into `[0, π]`, flipping the axis when needed, so
    /// equal rotations compare equal.
    pub fn new(
        axis: Vector3<f64>,
        angle: f64,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let n = axis.norm();
        if !(n.is_finite() && n > 0.0) || !angle.is_finite() {
            return Err(GeometryError::InvalidAxis);
        }
        Ok(Self::from_rotation_vector(axis * (angle / n), translation))
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            translation,
            ..Self::identity()
        }
    }

    /// Pose from the rotation vector `ω = θ k̂`.
    pub fn from_rotation_vector(omega: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let theta = omega.norm();
        if theta == 0.0 {
            return Self::from_translation(translation);
        }
        let axis = omega / theta;
        let wrapped = theta.rem_euclid(2.0 * std::f64::consts::PI);
        let (axis, angle) = if wrapped > std::f64::consts::PI {
            (-axis, 2.0 * std::f64::consts::PI - wrapped)
        } else {
            (axis, wrapped)
        };
        if angle == 0.0 {
            return Self::from_translation(translation);
        }
        Self {
            axis,
            angle,
            translation,
        }
    }

    /// Inverse of Rodrigues' formula. Goes through the quaternion of `r`
    /// (largest-component extraction) so that both the `θ → 0` and the
    /// `θ → π` ends stay well conditioned.
    pub fn from_matrix(r: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let trace = r.trace();
        let (w, x, y, z);
        if trace > r[(0, 0)] && trace > r[(1, 1)] && trace > r[(2, 2)] {
            let s = (1.0 + trace).sqrt() * 2.0;
            w = 0.25 * s;
            x = (r[(2, 1)] - r[(1, 2)]) / s;
            y = (r[(0, 2)] - r[(2, 0)]) / s;
            z = (r[(1, 0)] - r[(0, 1)]) / s;
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(2, 1)] - r[(1, 2)]) / s;
            x = 0.25 * s;
            y = (r[(0, 1)] + r[(1, 0)]) / s;
            z = (r[(0, 2)] + r[(2, 0)]) / s;
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(0, 2)] - r[(2, 0)]) / s;
            x = (r[(0, 1)] + r[(1, 0)]) / s;
            y = 0.25 * s;
            z = (r[(1, 2)] + r[(2, 1)]) / s;
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            w = (r[(1, 0)] - r[(0, 1)]) / s;
            x = (r[(0, 2)] + r[(2, 0)]) / s;
            y = (r[(1, 2)] + r[(2, 1)]) / s;
            z = 0.25 * s;
        }
        let mut q = Vector3::new(x, y, z);
        let mut w = w;
        if w < 0.0 {
            q = -q;
            w = -w;
        }
        let s = q.norm();
        if s == 0.0 || !s.is_finite() {
            return Self::from_translation(translation);
        }
        let angle = 2.0 * s.atan2(w);
        if angle == 0.0 {
            return Self::from_translation(translation);
        }
        Self {
            axis: q / s,
            angle,
            translation,
        }
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn rotation_vector(&self) -> Vector3<f64> {
        self.axis * self.angle
    }

    /// `R = I + sinθ K + (1 − cosθ) K²`.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::identity() + self.w_matrix()
    }

    /// `W = R − I = sinθ K + (1 − cosθ) K²`.
    pub fn w_matrix(&self) -> Matrix3<f64> {
        let k = skew(&self.axis);
        k * self.angle.sin() + (k * k) * (1.0 - self.angle.cos())
    }

    pub fn apply(&self, x: &Point3) -> Point3 {
        Point3::from(self.rotation_matrix() * x.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation_matrix().transpose();
        let axis = if self.angle == 0.0 {
            self.axis
        } else {
            -self.axis
        };
        Self {
            axis,
            angle: self.angle,
            translation: -(rt * self.translation),
        }
    }

    /// Unit quaternion `(x, y, z, w)` with `w ≥ 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let (s, c) = (self.angle / 2.0).sin_cos();
        [self.axis.x * s, self.axis.y * s, self.axis.z * s, c]
    }
}

/// Shorthand for [`Pose::apply`].
pub fn apply_pose(pose: &Pose, x: &Point3) -> Point3 {
    pose.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn kinect() -> Intrinsics {
        Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480, 5000.0).unwrap()
    }

    #[test]
    fn back_project_examples() {
        let k = kinect();
        let p = back_project(k.cx, k.cy, 2.0, &k).unwrap();
        assert_eq!((p.x, p.y, p.z), (0.0, 0.0, 2.0));
        let p = back_project(k.cx + k.fx, k.cy, 1.0, &k).unwrap();
        assert_eq!((p.x, p.y, p.z), (1.0, 0.0, 1.0));
        // (400 - 319.5) * 1.5 / 525 = 0.23, (300 - 239.5) * 1.5 / 525 = 0.172857142857...
        let p = back_project(400.0, 300.0, 1.5, &k).unwrap();
        assert!((p.x - 0.23).abs() < 1e-12);
        assert!((p.y - 0.172_857_142_857_142_85).abs() < 1e-12);
        assert_eq!(p.z, 1.5);
    }

    #[test]
    fn back_project_rejects_bad_depth() {
        let k = kinect();
        assert!(back_project(1.0, 1.0, 0.0, &k).is_err());
        assert!(back_project(1.0, 1.0, -1.0, &k).is_err());
        assert!(back_project(1.0, 1.0, f64::NAN, &k).is_err());
        assert!(back_project(f64::INFINITY, 1.0, 1.0, &k).is_err());
    }

    #[test]
    fn project_examples() {
        let k = kinect();
        assert_eq!(
            project(&Point3::new(0.0, 0.0, 3.0), &k).unwrap(),
            (k.cx, k.cy)
        );
        assert_eq!(
            project(&Point3::new(1.0, 0.0, 1.0), &k).unwrap(),
            (844.5, 239.5)
        );
        let p = back_project(100.25, 77.5, 0.8, &k).unwrap();
        let (u, v) = project(&p, &k).unwrap();
        assert!((u - 100.25).abs() < 1e-9 && (v - 77.5).abs() < 1e-9);
        assert!(project(&Point3::new(0.0, 0.0, 0.0), &k).is_err());
        assert!(project(&Point3::new(0.0, 0.0, -1.0), &k).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4, 1.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4, 1.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 1.0, 1.0, 4, 4, 0.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4, 1.0).is_ok());
    }

    #[test]
    fn rotation_matrix_examples() {
        assert_eq!(Pose::identity().rotation_matrix(), Matrix3::identity());
        let p = Pose::new(Vector3::z(), FRAC_PI_2, Vector3::zeros()).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((p.rotation_matrix() - expected).amax() < 1e-15);
    }

    #[test]
    fn apply_examples() {
        let x = Point3::new(0.3, -0.2, 1.7);
        assert_eq!(Pose::identity().apply(&x), x);
        let p = Pose::from_translation(Vector3::new(0.0, 0.0, 0.5));
        assert_eq!(
            p.apply(&Point3::new(0.0, 0.0, 1.0)),
            Point3::new(0.0, 0.0, 1.5)
        );
    }

    #[test]
    fn zero_angle_uses_canonical_axis() {
        let p = Pose::new(Vector3::new(1.0, 2.0, 3.0), 0.0, Vector3::zeros()).unwrap();
        assert_eq!(p, Pose::identity());
        let p = Pose::new(Vector3::x(), 2.0 * PI, Vector3::zeros()).unwrap();
        assert_eq!(p.axis(), Vector3::z());
        assert!(Pose::new(Vector3::zeros(), 1.0, Vector3::zeros()).is_err());
    }

    #[test]
    fn angle_wraps_into_zero_pi() {
        let p = Pose::new(Vector3::x(), 1.5 * PI, Vector3::zeros()).unwrap();
        assert!((p.angle() - 0.5 * PI).abs() < 1e-12);
        assert!((p.axis() + Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn matrix_round_trip_near_pi_and_zero() {
        for &angle in &[1e-12, 1e-6, 0.3, 3.0, PI - 1e-9, PI] {
            let axis = Vector3::new(0.2, -0.5, 0.7).normalize();
            let p = Pose::new(axis, angle, Vector3::zeros()).unwrap();
            let q = Pose::from_matrix(&p.rotation_matrix(), Vector3::zeros());
            assert!((p.rotation_matrix() - q.rotation_matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn inverse_undoes_pose() {
        let p = Pose::new(
            Vector3::new(1.0, 1.0, 0.0),
            0.4,
            Vector3::new(0.1, -0.2, 0.3),
        )
        .unwrap();
        let x = Point3::new(0.5, 0.1, 2.0);
        let y = p.inverse().apply(&p.apply(&x));
        assert!((y - x).norm() < 1e-12);
    }

    #[test]
    fn depth_map_rejects_negative_values() {
        assert!(DepthMap::new(2, 1, vec![1.0, -1.0]).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0, f64::NAN]).is_err());
        assert!(DepthMap::new(2, 2, vec![1.0]).is_err());
        let d = DepthMap::new(2, 1, vec![1.0, 0.0]).unwrap();
        assert_eq!(d.valid_count(), 1);
    }
}
