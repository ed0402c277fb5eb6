//! Explicit, identity-agnostic motion space.
//!
//! A frame of motion is an expression deformation over 21 implicit 3-D
//! keypoints, a head pose (Euler angles), a translation and a scale. The
//! diffusion model works on a flat 265-dimensional packing of that frame
//! (see [`layout`]). Identity lives separately in [`CanonicalKeypoints`];
//! [`compose_keypoints`] combines the two into posed implicit keypoints.

mod bins;
mod clip;
mod control;
mod flip;
mod io;
pub mod layout;
mod probe;
mod template;
mod vector;

pub use bins::{angle_to_bins, bin_center, bins_to_angle, project_pose_bins, BIN_WIDTH_DEG, GAUSSIAN_SIGMA_DEG, MAX_ABS_ANGLE_DEG};
pub use clip::{MotionClip, DEFAULT_FPS};
pub use control::{apply_control, apply_control_vector, ControlSpec, FaceRegion, MagnitudeClamp, PoseOverride};
pub use flip::{hflip_motion, hflip_vector, mirror_keypoints, SymmetryPairing};
pub use io::{read_motion_jsonl, write_motion_jsonl, MotionFileHeader, MotionRecord};
pub use probe::{probe_dim, Displacement, ProbeReport, ProbeSnapshot};
pub use template::{default_template, keypoint_name, KEYPOINT_NAMES};
pub use vector::{pack_motion, unpack_motion, MotionVector};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of implicit keypoints.
pub const NUM_KEYPOINTS: usize = 21;

pub type Keypoints = [[f64; 3]; NUM_KEYPOINTS];
pub type Mat3 = [[f64; 3]; 3];

fn check_finite(points: &Keypoints, what: &str) -> Result<()> {
    if points.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite values")))
    }
}

/// Per-identity neutral keypoint geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalKeypoints {
    pub points: Keypoints,
}

impl CanonicalKeypoints {
    pub fn new(points: Keypoints) -> Result<Self> {
        check_finite(&points, "canonical keypoints")?;
        Ok(Self { points })
    }

    /// Row-major flattening `(kp0.x, kp0.y, kp0.z, kp1.x, ...)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }
}

impl Default for CanonicalKeypoints {
    fn default() -> Self {
        default_template()
    }
}

/// Posed keypoints `c·R + δ + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitKeypoints {
    pub points: Keypoints,
}

impl ImplicitKeypoints {
    /// Orthographic projection onto the image plane (drops z).
    pub fn project_2d(&self) -> [[f64; 2]; NUM_KEYPOINTS] {
        let mut out = [[0.0; 2]; NUM_KEYPOINTS];
        for (o, p) in out.iter_mut().zip(self.points.iter()) {
            *o = [p[0], p[1]];
        }
        out
    }
}

/// Head pose in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Euler {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Euler {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }
}

/// One frame of identity-agnostic motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionFrame {
    pub delta: Keypoints,
    pub euler: Euler,
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Default for MotionFrame {
    fn default() -> Self {
        Self {
            delta: [[0.0; 3]; NUM_KEYPOINTS],
            euler: Euler::default(),
            translation: [0.0; 3],
            scale: 1.0,
        }
    }
}

impl MotionFrame {
    pub fn validate(&self) -> Result<()> {
        check_finite(&self.delta, "expression deformation")?;
        let pose = self.euler.as_array();
        if pose.iter().chain(self.translation.iter()).any(|v| !v.is_finite()) || !self.scale.is_finite() {
            return Err(Error::InvalidInput("motion frame contains non-finite values".into()));
        }
        if let Some(a) = pose.iter().find(|a| a.abs() >= MAX_ABS_ANGLE_DEG) {
            return Err(Error::Range(format!("euler angle {a} outside (-{MAX_ABS_ANGLE_DEG}, {MAX_ABS_ANGLE_DEG})")));
        }
        if self.scale <= 0.0 {
            return Err(Error::Range(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    /// Deformation flattened keypoint-major, matching the first 63 slots of
    /// the packed vector.
    pub fn delta_flat(&self) -> [f64; layout::DELTA_DIMS] {
        let mut out = [0.0; layout::DELTA_DIMS];
        for (i, v) in self.delta.iter().flatten().enumerate() {
            out[i] = *v;
        }
        out
    }

    pub fn set_delta_flat(&mut self, flat: &[f64; layout::DELTA_DIMS]) {
        for (i, v) in flat.iter().enumerate() {
            self.delta[i / 3][i % 3] = *v;
        }
    }
}

/// Whether the scale slot participates in keypoint composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScaleMode {
    #[default]
    Ignore,
    Apply,
}

fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Rotation `Rz(roll) · Ry(yaw) · Rx(pitch)`, angles in degrees.
///
/// Keypoints are row vectors and are right-multiplied by the result.
pub fn euler_to_rotation(yaw: f64, pitch: f64, roll: f64) -> Result<Mat3> {
    if ![yaw, pitch, roll].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("euler angles must be finite".into()));
    }
    Ok(mat_mul(&mat_mul(&rot_z(roll), &rot_y(yaw)), &rot_x(pitch)))
}

/// `x = c·R + δ + t`, or `scale·(c·R + δ) + t` under [`ScaleMode::Apply`].
pub fn compose_keypoints(c: &CanonicalKeypoints, m: &MotionFrame, mode: ScaleMode) -> Result<ImplicitKeypoints> {
    check_finite(&c.points, "canonical keypoints")?;
    check_finite(&m.delta, "expression deformation")?;
    if !m.translation.iter().all(|v| v.is_finite()) || !m.scale.is_finite() {
        return Err(Error::InvalidInput("translation/scale must be finite".into()));
    }
    let r = euler_to_rotation(m.euler.yaw, m.euler.pitch, m.euler.roll)?;
    let s = match mode {
        ScaleMode::Ignore => 1.0,
        ScaleMode::Apply => m.scale,
    };
    let mut points = [[0.0; 3]; NUM_KEYPOINTS];
    for (k, out) in points.iter_mut().enumerate() {
        let row = &c.points[k];
        for j in 0..3 {
            let rotated = row[0] * r[0][j] + row[1] * r[1][j] + row[2] * r[2][j];
            out[j] = s * (rotated + m.delta[k][j]) + m.translation[j];
        }
    }
    Ok(ImplicitKeypoints { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng) -> Keypoints {
        let mut p = [[0.0; 3]; NUM_KEYPOINTS];
        for v in p.iter_mut().flatten() {
            *v = rng.gen_range(-1.0..1.0);
        }
        p
    }

    #[test]
    fn identity_pose_returns_canonical() {
        let c = default_template();
        let x = compose_keypoints(&c, &MotionFrame::default(), ScaleMode::Ignore).unwrap();
        assert_eq!(x.points, c.points);
    }

    #[test]
    fn zero_canonical_gives_delta_plus_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = CanonicalKeypoints::new([[0.0; 3]; NUM_KEYPOINTS]).unwrap();
        let m = MotionFrame {
            delta: random_points(&mut rng),
            euler: Euler::new(33.0, -12.0, 70.0),
            translation: [0.1, -0.2, 0.3],
            scale: 1.0,
        };
        let x = compose_keypoints(&c, &m, ScaleMode::Ignore).unwrap();
        for k in 0..NUM_KEYPOINTS {
            for j in 0..3 {
                assert_eq!(x.points[k][j], m.delta[k][j] + m.translation[j]);
            }
        }
    }

    #[test]
    fn scale_mode_applies_scale_before_translation() {
        let c = default_template();
        let m = MotionFrame { scale: 2.0, translation: [1.0, 0.0, 0.0], ..Default::default() };
        let x = compose_keypoints(&c, &m, ScaleMode::Apply).unwrap();
        assert_eq!(x.points[3][0], 2.0 * c.points[3][0] + 1.0);
        let y = compose_keypoints(&c, &m, ScaleMode::Ignore).unwrap();
        assert_eq!(y.points[3][0], c.points[3][0] + 1.0);
    }

    #[test]
    fn rotation_identity_and_half_turn() {
        let r = euler_to_rotation(0.0, 0.0, 0.0).unwrap();
        assert_eq!(r, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let h = euler_to_rotation(180.0, 0.0, 0.0).unwrap();
        let hh = mat_mul(&h, &h);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((hh[i][j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_is_orthonormal_with_unit_determinant() {
        let r = euler_to_rotation(10.0, 20.0, 30.0).unwrap();
        let mut rtr = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rtr[i][j] = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((rtr[i][j] - e).abs() < 1e-12);
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let c = default_template();
        let mut m = MotionFrame::default();
        m.delta[4][1] = f64::NAN;
        assert!(matches!(compose_keypoints(&c, &m, ScaleMode::Ignore), Err(Error::InvalidInput(_))));
        assert!(euler_to_rotation(f64::INFINITY, 0.0, 0.0).is_err());
    }

    #[test]
    fn frame_validation_ranges() {
        let mut m = MotionFrame::default();
        assert!(m.validate().is_ok());
        m.euler.pitch = 99.0;
        assert!(matches!(m.validate(), Err(Error::Range(_))));
        m.euler.pitch = 0.0;
        m.scale = 0.0;
        assert!(matches!(m.validate(), Err(Error::Range(_))));
    }
}
