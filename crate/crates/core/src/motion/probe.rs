//! Per-dimension probing: offset one deformation dimension by ±ε on a fixed
//! identity and see which keypoint coordinates move.

use super::layout::DELTA_DIMS;
use super::{apply_control, compose_keypoints, keypoint_name, CanonicalKeypoints, ControlSpec, MotionFrame, ScaleMode};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Posed keypoints for one offset value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSnapshot {
    pub offset: f64,
    pub points: Vec<[f64; 3]>,
    pub projected: Vec<[f64; 2]>,
}

/// One coordinate that differs from the unperturbed snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub offset: f64,
    pub keypoint: usize,
    pub axis: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub dim: usize,
    pub keypoint: usize,
    pub keypoint_name: String,
    pub axis: usize,
    /// Snapshots at `-eps`, `0` and `+eps`.
    pub snapshots: Vec<ProbeSnapshot>,
    pub moved: Vec<Displacement>,
}

impl ProbeReport {
    /// True when only the probed keypoint coordinate moved, by the offset.
    pub fn isolated(&self, tol: f64) -> bool {
        let expected = self.snapshots.iter().filter(|s| s.offset != 0.0).count();
        self.moved.len() == expected
            && self
                .moved
                .iter()
                .all(|d| d.keypoint == self.keypoint && d.axis == self.axis && (d.delta - d.offset).abs() <= tol)
    }
}

pub fn probe_dim(c: &CanonicalKeypoints, base: &MotionFrame, dim: usize, eps: f64) -> Result<ProbeReport> {
    if dim >= DELTA_DIMS {
        return Err(Error::Range(format!("dim {dim} is not a deformation dimension (0..{DELTA_DIMS})")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Range(format!("eps must be positive and finite, got {eps}")));
    }
    let mut snapshots = Vec::with_capacity(3);
    for offset in [-eps, 0.0, eps] {
        let m = apply_control(base, &ControlSpec::default().with_offset(dim, offset))?;
        let x = compose_keypoints(c, &m, ScaleMode::Apply)?;
        snapshots.push(ProbeSnapshot { offset, points: x.points.to_vec(), projected: x.project_2d().to_vec() });
    }
    let origin = &snapshots[1].points;
    let mut moved = Vec::new();
    for s in snapshots.iter().filter(|s| s.offset != 0.0) {
        for (k, (p, o)) in s.points.iter().zip(origin).enumerate() {
            for axis in 0..3 {
                if p[axis] != o[axis] {
                    moved.push(Displacement { offset: s.offset, keypoint: k, axis, delta: p[axis] - o[axis] });
                }
            }
        }
    }
    let keypoint = dim / 3;
    Ok(ProbeReport {
        dim,
        keypoint,
        keypoint_name: keypoint_name(keypoint).unwrap_or("?").to_string(),
        axis: dim % 3,
        snapshots,
        moved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{default_template, Euler};
    use proptest::prelude::*;

    #[test]
    fn dim_45_moves_keypoint_15_along_x() {
        let r = probe_dim(&default_template(), &MotionFrame::default(), 45, 0.05).unwrap();
        assert_eq!((r.keypoint, r.axis), (15, 0));
        assert_eq!(r.moved.len(), 2);
        assert!(r.isolated(1e-12));
        assert!((r.snapshots[2].projected[15][0] - r.snapshots[1].projected[15][0] - 0.05).abs() < 1e-12);
        assert_eq!(r.snapshots[2].projected[14], r.snapshots[1].projected[14]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let c = default_template();
        assert!(probe_dim(&c, &MotionFrame::default(), 63, 0.05).is_err());
        assert!(probe_dim(&c, &MotionFrame::default(), 3, 0.0).is_err());
        assert!(probe_dim(&c, &MotionFrame::default(), 3, f64::NAN).is_err());
    }

    #[test]
    fn posed_head_still_moves_one_coordinate() {
        let base = MotionFrame { euler: Euler::new(20.0, -10.0, 5.0), scale: 1.0, ..Default::default() };
        let r = probe_dim(&default_template(), &base, 58, 0.02).unwrap();
        assert!(r.isolated(1e-12), "{:?}", r.moved);
    }

    proptest! {
        #[test]
        fn every_dim_is_isolated(dim in 0usize..63, eps in 1e-3f64..0.2) {
            let r = probe_dim(&default_template(), &MotionFrame::default(), dim, eps).unwrap();
            prop_assert!(r.isolated(1e-12));
        }
    }
}
