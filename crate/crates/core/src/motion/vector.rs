use super::bins::{angle_to_bins, bins_to_angle};
use super::layout::{self, MOTION_DIMS};
use super::{Euler, MotionFrame, NUM_KEYPOINTS};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Flat 265-D motion representation consumed by the diffusion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MotionVector(Vec<f64>);

impl MotionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != MOTION_DIMS {
            return Err(Error::shape(format!("{MOTION_DIMS} values"), values.len()));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for MotionVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MotionVector> for Vec<f64> {
    fn from(v: MotionVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for MotionVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn pack_motion(m: &MotionFrame) -> Result<MotionVector> {
    m.validate()?;
    let mut v = vec![0.0; MOTION_DIMS];
    v[layout::DELTA].copy_from_slice(&m.delta_flat());
    v[layout::YAW_BINS].copy_from_slice(&angle_to_bins(m.euler.yaw)?);
    v[layout::PITCH_BINS].copy_from_slice(&angle_to_bins(m.euler.pitch)?);
    v[layout::ROLL_BINS].copy_from_slice(&angle_to_bins(m.euler.roll)?);
    v[layout::TRANSLATION].copy_from_slice(&m.translation);
    v[layout::SCALE] = m.scale;
    Ok(MotionVector(v))
}

/// Inverse of [`pack_motion`]. Bin blocks are decoded by expectation, so any
/// free-valued vector (e.g. a diffusion sample) yields a frame.
pub fn unpack_motion(v: &[f64]) -> Result<MotionFrame> {
    if v.len() != MOTION_DIMS {
        return Err(Error::shape(format!("{MOTION_DIMS} values"), v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("motion vector contains non-finite values".into()));
    }
    let mut delta = [[0.0; 3]; NUM_KEYPOINTS];
    for (i, x) in v[layout::DELTA].iter().enumerate() {
        delta[i / 3][i % 3] = *x;
    }
    Ok(MotionFrame {
        delta,
        euler: Euler {
            yaw: bins_to_angle(&v[layout::YAW_BINS])?,
            pitch: bins_to_angle(&v[layout::PITCH_BINS])?,
            roll: bins_to_angle(&v[layout::ROLL_BINS])?,
        },
        translation: [v[261], v[262], v[263]],
        scale: v[layout::SCALE],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_motion_packing() {
        let v = pack_motion(&MotionFrame::default()).unwrap();
        assert!(v.as_slice()[layout::DELTA].iter().all(|&x| x == 0.0));
        for block in [layout::YAW_BINS, layout::PITCH_BINS, layout::ROLL_BINS] {
            let b = &v.as_slice()[block];
            for i in 0..b.len() {
                assert!((b[i] - b[b.len() - 1 - i]).abs() < 1e-15);
            }
        }
        assert_eq!(v[264], 1.0);
    }

    #[test]
    fn wrong_length_is_shape_error() {
        assert!(matches!(unpack_motion(&[0.0; 264]), Err(Error::Shape(_))));
        assert!(matches!(MotionVector::new(vec![0.0; 266]), Err(Error::Shape(_))));
    }

    #[test]
    fn random_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let mut m = MotionFrame::default();
            for x in m.delta.iter_mut().flatten() {
                *x = rng.gen_range(-0.2..0.2);
            }
            m.euler = Euler::new(rng.gen_range(-90.0..90.0), rng.gen_range(-90.0..90.0), rng.gen_range(-90.0..90.0));
            m.translation = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            m.scale = rng.gen_range(0.5..2.0);
            let back = unpack_motion(pack_motion(&m).unwrap().as_slice()).unwrap();
            assert_eq!(back.delta, m.delta);
            assert_eq!(back.translation, m.translation);
            assert_eq!(back.scale, m.scale);
            for (a, b) in back.euler.as_array().iter().zip(m.euler.as_array()) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 0.1, "worst angle error {worst}");
    }

    #[test]
    fn serde_rejects_wrong_length() {
        let ok: MotionVector = serde_json::from_str(&serde_json::to_string(&vec![0.5; 265]).unwrap()).unwrap();
        assert_eq!(ok.as_slice().len(), 265);
        assert!(serde_json::from_str::<MotionVector>("[1.0, 2.0]").is_err());
    }
}
