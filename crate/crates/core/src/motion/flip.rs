use super::layout::{self, MOTION_DIMS, NUM_BINS};
use super::{ImplicitKeypoints, Keypoints, MotionFrame, NUM_KEYPOINTS};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Left/right keypoint correspondence used for horizontal flips.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryPairing {
    pub pairs: Vec<(usize, usize)>,
    pub self_indices: Vec<usize>,
}

impl Default for SymmetryPairing {
    /// Pairing of the bundled keypoint template.
    fn default() -> Self {
        Self {
            pairs: vec![(4, 5), (6, 7), (8, 9), (10, 11), (12, 13), (14, 15), (17, 18)],
            self_indices: vec![0, 1, 2, 3, 16, 19, 20],
        }
    }
}

impl SymmetryPairing {
    /// Checks that pairs and midline indices partition `0..21`.
    pub fn validate(&self) -> Result<()> {
        self.permutation().map(|_| ())
    }

    /// `perm[i]` is the mirror partner of keypoint `i`.
    pub fn permutation(&self) -> Result<[usize; NUM_KEYPOINTS]> {
        let mut perm = [usize::MAX; NUM_KEYPOINTS];
        let mut assign = |i: usize, j: usize| -> Result<()> {
            if i >= NUM_KEYPOINTS || j >= NUM_KEYPOINTS {
                return Err(Error::Config(format!("keypoint index out of range in pairing ({i}, {j})")));
            }
            if perm[i] != usize::MAX {
                return Err(Error::Config(format!("keypoint {i} appears twice in pairing")));
            }
            perm[i] = j;
            Ok(())
        };
        for &(a, b) in &self.pairs {
            if a == b {
                return Err(Error::Config(format!("pair ({a}, {b}) maps a keypoint to itself")));
            }
            assign(a, b)?;
            assign(b, a)?;
        }
        for &s in &self.self_indices {
            assign(s, s)?;
        }
        if let Some(missing) = perm.iter().position(|&p| p == usize::MAX) {
            return Err(Error::Config(format!("keypoint {missing} missing from pairing")));
        }
        Ok(perm)
    }
}

fn mirror_points(points: &Keypoints, perm: &[usize; NUM_KEYPOINTS]) -> Keypoints {
    let mut out = [[0.0; 3]; NUM_KEYPOINTS];
    for (i, row) in out.iter_mut().enumerate() {
        let src = points[perm[i]];
        *row = [-src[0], src[1], src[2]];
    }
    out
}

/// Mirrors posed keypoints about the x = 0 plane, swapping paired rows.
pub fn mirror_keypoints(x: &ImplicitKeypoints, p: &SymmetryPairing) -> Result<ImplicitKeypoints> {
    Ok(ImplicitKeypoints { points: mirror_points(&x.points, &p.permutation()?) })
}

/// Horizontal flip of a motion frame: paired deformation rows swap, x
/// components, yaw, roll and x translation change sign.
pub fn hflip_motion(m: &MotionFrame, p: &SymmetryPairing) -> Result<MotionFrame> {
    let perm = p.permutation()?;
    let mut out = *m;
    out.delta = mirror_points(&m.delta, &perm);
    out.euler.yaw = -m.euler.yaw;
    out.euler.roll = -m.euler.roll;
    out.translation[0] = -m.translation[0];
    Ok(out)
}

/// Flip applied directly to a packed vector. Bin centers are symmetric about
/// zero, so negating an angle reverses its bin block.
pub fn hflip_vector(v: &[f64], p: &SymmetryPairing) -> Result<Vec<f64>> {
    if v.len() != MOTION_DIMS {
        return Err(Error::shape(format!("{MOTION_DIMS} values"), v.len()));
    }
    let perm = p.permutation()?;
    let mut out = v.to_vec();
    for (k, &src) in perm.iter().enumerate() {
        out[3 * k] = -v[3 * src];
        out[3 * k + 1] = v[3 * src + 1];
        out[3 * k + 2] = v[3 * src + 2];
    }
    for block in [layout::YAW_BINS, layout::ROLL_BINS] {
        for i in 0..NUM_BINS {
            out[block.start + i] = v[block.start + NUM_BINS - 1 - i];
        }
    }
    out[layout::TRANSLATION.start] = -v[layout::TRANSLATION.start];
    Ok(out)
}
