//! Soft discrete-bin encoding of Euler angles.

use super::layout::{MOTION_DIMS, NUM_BINS, PITCH_BINS, ROLL_BINS, YAW_BINS};
use crate::error::{Error, Result};

pub const BIN_WIDTH_DEG: f64 = 3.0;
pub const GAUSSIAN_SIGMA_DEG: f64 = 3.0;
/// Encodable angles are strictly inside `(-99, 99)`.
pub const MAX_ABS_ANGLE_DEG: f64 = 99.0;

const FIRST_CENTER_DEG: f64 = -97.5;

pub fn bin_center(i: usize) -> f64 {
    FIRST_CENTER_DEG + BIN_WIDTH_DEG * i as f64
}

/// Gaussian mass over bin centers, normalized to sum 1.
pub fn angle_to_bins(angle: f64) -> Result<[f64; NUM_BINS]> {
    if !angle.is_finite() || angle.abs() >= MAX_ABS_ANGLE_DEG {
        return Err(Error::Range(format!("angle {angle} outside (-{MAX_ABS_ANGLE_DEG}, {MAX_ABS_ANGLE_DEG})")));
    }
    let mut out = [0.0; NUM_BINS];
    let inv = 1.0 / (2.0 * GAUSSIAN_SIGMA_DEG * GAUSSIAN_SIGMA_DEG);
    for (i, o) in out.iter_mut().enumerate() {
        let d = angle - bin_center(i);
        *o = (-d * d * inv).exp();
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= total);
    Ok(out)
}

/// Expected angle under the bin distribution. Vectors that are not a
/// probability distribution are softmax-normalized first.
pub fn bins_to_angle(bins: &[f64]) -> Result<f64> {
    if bins.len() != NUM_BINS {
        return Err(Error::shape(format!("{NUM_BINS} bins"), bins.len()));
    }
    if bins.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("bin vector contains non-finite values".into()));
    }
    let sum: f64 = bins.iter().sum();
    let is_distribution = bins.iter().all(|&b| b >= 0.0) && (sum - 1.0).abs() <= 1e-9;
    let angle = if is_distribution {
        bins.iter().enumerate().map(|(i, p)| p * bin_center(i)).sum()
    } else {
        let max = bins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = bins.iter().map(|b| (b - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().enumerate().map(|(i, e)| e / z * bin_center(i)).sum()
    };
    Ok(angle)
}

/// Projects every pose-bin block of a packed vector onto the probability
/// simplex: negatives are clipped and each block renormalized. A block with
/// no positive mass is replaced by the encoding of its softmax-decoded angle.
pub fn project_pose_bins(v: &mut [f64]) -> Result<()> {
    if v.len() != MOTION_DIMS {
        return Err(Error::shape(format!("{MOTION_DIMS} values"), v.len()));
    }
    for block in [YAW_BINS, PITCH_BINS, ROLL_BINS] {
        let b = &mut v[block];
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("bin vector contains non-finite values".into()));
        }
        let total: f64 = b.iter().map(|x| x.max(0.0)).sum();
        if total > 0.0 {
            b.iter_mut().for_each(|x| *x = x.max(0.0) / total);
        } else {
            let angle = bins_to_angle(b)?.clamp(-MAX_ABS_ANGLE_DEG + 1e-6, MAX_ABS_ANGLE_DEG - 1e-6);
            b.copy_from_slice(&angle_to_bins(angle)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn bin_center_peak() {
        let b = angle_to_bins(1.5).unwrap();
        let argmax = (0..NUM_BINS).max_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap();
        assert_eq!(argmax, 33);
        assert!((bins_to_angle(&b).unwrap() - 1.5).abs() < 0.05);
    }

    #[test]
    fn zero_is_symmetric() {
        let b = angle_to_bins(0.0).unwrap();
        assert!((b[32] - b[33]).abs() < 1e-15);
        for i in 0..NUM_BINS {
            assert!((b[i] - b[NUM_BINS - 1 - i]).abs() < 1e-15);
        }
        assert!(bins_to_angle(&b).unwrap().abs() < 0.05);
    }

    #[test]
    fn decodes_off_center_angle() {
        let b = angle_to_bins(37.2).unwrap();
        assert!((bins_to_angle(&b).unwrap() - 37.2).abs() < 0.1);
    }

    #[test]
    fn one_hot_and_uniform() {
        for i in [0, 17, 33, 65] {
            let mut v = [0.0; NUM_BINS];
            v[i] = 1.0;
            assert_eq!(bins_to_angle(&v).unwrap(), bin_center(i));
        }
        let uniform = [1.0 / NUM_BINS as f64; NUM_BINS];
        assert!(bins_to_angle(&uniform).unwrap().abs() < 1e-9);
        // not a distribution: softmax of a constant is uniform
        assert!(bins_to_angle(&[3.0; NUM_BINS]).unwrap().abs() < 1e-9);
    }

    #[test]
    fn soft_vector_matches_expectation_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..NUM_BINS).map(|_| rng.gen_range(0.0..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|r| r / z).collect();
            let mut oracle = 0.0;
            for i in 0..NUM_BINS {
                oracle += p[i] * (-97.5 + 3.0 * i as f64);
            }
            assert!((bins_to_angle(&p).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(angle_to_bins(99.0), Err(Error::Range(_))));
        assert!(matches!(angle_to_bins(-120.0), Err(Error::Range(_))));
        assert!(matches!(bins_to_angle(&[0.0; 65]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_within_tenth_degree(angle in -90.0f64..90.0) {
            let b = angle_to_bins(angle).unwrap();
            prop_assert!(b.iter().all(|&p| p >= 0.0));
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((bins_to_angle(&b).unwrap() - angle).abs() <= 0.1);
        }
    }

    #[test]
    fn projection_onto_simplex() {
        let mut v = vec![0.0; MOTION_DIMS];
        v[YAW_BINS].copy_from_slice(&angle_to_bins(12.0).unwrap());
        v[70] = -0.3;
        v[PITCH_BINS.start] = 2.0;
        v[ROLL_BINS].iter_mut().for_each(|x| *x = -1.0);
        v[0] = -5.0;
        project_pose_bins(&mut v).unwrap();
        for block in [YAW_BINS, PITCH_BINS, ROLL_BINS] {
            let b = &v[block];
            assert!(b.iter().all(|&x| x >= 0.0));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(v[PITCH_BINS.start], 1.0);
        assert!(bins_to_angle(&v[ROLL_BINS]).unwrap().abs() < 1e-6);
        assert_eq!(v[0], -5.0);
        // valid encodings are fixed points
        let before = v.clone();
        project_pose_bins(&mut v).unwrap();
        for (a, b) in v.iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
