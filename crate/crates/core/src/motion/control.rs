//! Fine-grained motion control: regional masks, magnitude clamps,
//! per-dimension offsets and pose override.

use super::layout::{self, DELTA_DIMS, MOTION_DIMS};
use super::bins::angle_to_bins;
use super::{Euler, MotionFrame, MAX_ABS_ANGLE_DEG};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MagnitudeClamp {
    Uniform(f64),
    /// One optional bound per deformation dimension; `None` leaves it free.
    PerDim(Vec<Option<f64>>),
}

impl MagnitudeClamp {
    fn bound(&self, dim: usize) -> Option<f64> {
        match self {
            MagnitudeClamp::Uniform(b) => Some(*b),
            MagnitudeClamp::PerDim(v) => v.get(dim).copied().flatten(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseOverride {
    pub euler: Euler,
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSpec {
    pub enabled: bool,
    /// 63 entries in `{0, 1}`; 0 zeroes the deformation dimension. `None`
    /// means all-ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_mask: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnitude_clamp: Option<MagnitudeClamp>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", deserialize_with = "dim_keys")]
    pub dim_offsets: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose_override: Option<PoseOverride>,
}

/// Parses the numeric-string object keys. Buffered deserialization (as in
/// tagged enums) will not coerce them to integers on its own.
fn dim_keys<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<usize, f64>, D::Error> {
    BTreeMap::<String, f64>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| {
            k.parse()
                .map(|i| (i, v))
                .map_err(|_| serde::de::Error::custom(format!("dimension key {k:?} is not an index")))
        })
        .collect()
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self { enabled: true, region_mask: None, magnitude_clamp: None, dim_offsets: BTreeMap::new(), pose_override: None }
    }
}

impl ControlSpec {
    pub fn with_offset(mut self, dim: usize, value: f64) -> Self {
        self.dim_offsets.insert(dim, value);
        self
    }

    pub fn with_clamp(mut self, clamp: MagnitudeClamp) -> Self {
        self.magnitude_clamp = Some(clamp);
        self
    }

    /// Restricts deformation to the listed regions; everything else is masked.
    pub fn restricted_to(mut self, regions: &[FaceRegion]) -> Self {
        let mut mask = vec![0u8; DELTA_DIMS];
        for r in regions {
            for &k in r.keypoints() {
                mask[3 * k..3 * k + 3].fill(1);
            }
        }
        self.region_mask = Some(mask);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(mask) = &self.region_mask {
            if mask.len() != DELTA_DIMS {
                return Err(Error::shape(format!("{DELTA_DIMS} mask entries"), mask.len()));
            }
            if let Some(bad) = mask.iter().find(|&&m| m > 1) {
                return Err(Error::InvalidInput(format!("mask entries must be 0 or 1, got {bad}")));
            }
        }
        match &self.magnitude_clamp {
            Some(MagnitudeClamp::Uniform(b)) if !(*b >= 0.0) => {
                return Err(Error::InvalidInput(format!("clamp must be non-negative, got {b}")));
            }
            Some(MagnitudeClamp::PerDim(v)) => {
                if v.len() != DELTA_DIMS {
                    return Err(Error::shape(format!("{DELTA_DIMS} clamp entries"), v.len()));
                }
                if let Some(b) = v.iter().flatten().find(|b| !(**b >= 0.0)) {
                    return Err(Error::InvalidInput(format!("clamp must be non-negative, got {b}")));
                }
            }
            _ => {}
        }
        for (&dim, &off) in &self.dim_offsets {
            if dim >= DELTA_DIMS {
                return Err(Error::Range(format!("offset dimension {dim} >= {DELTA_DIMS}")));
            }
            if !off.is_finite() {
                return Err(Error::InvalidInput(format!("offset for dimension {dim} is not finite")));
            }
        }
        if let Some(p) = &self.pose_override {
            let angles = p.euler.as_array();
            if angles.iter().any(|a| !a.is_finite() || a.abs() >= MAX_ABS_ANGLE_DEG) || p.translation.iter().any(|t| !t.is_finite()) {
                return Err(Error::Range("pose override outside the encodable range".into()));
            }
        }
        Ok(())
    }
}

/// Applies a control spec in fixed order: mask, offsets, clamp, pose override.
pub fn apply_control(m: &MotionFrame, spec: &ControlSpec) -> Result<MotionFrame> {
    spec.validate()?;
    if !spec.enabled {
        return Ok(*m);
    }
    let mut out = *m;
    let mut flat = m.delta_flat();
    if let Some(mask) = &spec.region_mask {
        for (v, &keep) in flat.iter_mut().zip(mask) {
            if keep == 0 {
                *v = 0.0;
            }
        }
    }
    for (&dim, &off) in &spec.dim_offsets {
        flat[dim] += off;
    }
    if let Some(clamp) = &spec.magnitude_clamp {
        for (dim, v) in flat.iter_mut().enumerate() {
            if let Some(b) = clamp.bound(dim) {
                *v = v.clamp(-b, b);
            }
        }
    }
    out.set_delta_flat(&flat);
    if let Some(p) = spec.pose_override {
        out.euler = p.euler;
        out.translation = p.translation;
    }
    Ok(out)
}

/// Applies a control spec to a packed motion vector. Deformation edits touch
/// only dims `0..63`; everything else is left bit-for-bit unless a pose
/// override re-encodes the pose and translation.
pub fn apply_control_vector(v: &[f64], spec: &ControlSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if v.len() != MOTION_DIMS {
        return Err(Error::shape(format!("{MOTION_DIMS} values"), v.len()));
    }
    let mut out = v.to_vec();
    if !spec.enabled {
        return Ok(out);
    }
    if let Some(mask) = &spec.region_mask {
        for (x, &keep) in out.iter_mut().zip(mask) {
            if keep == 0 {
                *x = 0.0;
            }
        }
    }
    for (&dim, &off) in &spec.dim_offsets {
        out[dim] += off;
    }
    if let Some(clamp) = &spec.magnitude_clamp {
        for (dim, x) in out.iter_mut().take(DELTA_DIMS).enumerate() {
            if let Some(b) = clamp.bound(dim) {
                *x = x.clamp(-b, b);
            }
        }
    }
    if let Some(p) = spec.pose_override {
        out[layout::YAW_BINS].copy_from_slice(&angle_to_bins(p.euler.yaw)?);
        out[layout::PITCH_BINS].copy_from_slice(&angle_to_bins(p.euler.pitch)?);
        out[layout::ROLL_BINS].copy_from_slice(&angle_to_bins(p.euler.roll)?);
        out[layout::TRANSLATION].copy_from_slice(&p.translation);
    }
    Ok(out)
}

/// Keypoint groups of the bundled template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceRegion {
    Eyes,
    Brows,
    Mouth,
    Jaw,
    Nose,
    Cheeks,
    Forehead,
    Throat,
}

impl FaceRegion {
    pub const ALL: [FaceRegion; 8] = [
        FaceRegion::Eyes,
        FaceRegion::Brows,
        FaceRegion::Mouth,
        FaceRegion::Jaw,
        FaceRegion::Nose,
        FaceRegion::Cheeks,
        FaceRegion::Forehead,
        FaceRegion::Throat,
    ];

    pub fn keypoints(self) -> &'static [usize] {
        match self {
            FaceRegion::Eyes => &[10, 11, 12, 13],
            FaceRegion::Brows => &[6, 7, 8, 9],
            FaceRegion::Mouth => &[14, 15, 16, 19],
            FaceRegion::Jaw => &[3, 17, 18],
            FaceRegion::Nose => &[0, 1],
            FaceRegion::Cheeks => &[4, 5],
            FaceRegion::Forehead => &[2],
            FaceRegion::Throat => &[20],
        }
    }

    /// Regions near the neck, used when compositing onto a torso.
    pub fn lower_face() -> [FaceRegion; 3] {
        [FaceRegion::Mouth, FaceRegion::Jaw, FaceRegion::Throat]
    }
}
