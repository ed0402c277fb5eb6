//! Slot layout of the 265-dimensional motion vector.
//!
//! `[0, 63)` deformation keypoint-major, then yaw, pitch and roll as 66 soft
//! bins each, then translation (3) and scale (1).

use std::ops::Range;

pub const DELTA_DIMS: usize = 63;
pub const NUM_BINS: usize = 66;
pub const MOTION_DIMS: usize = 265;

pub const DELTA: Range<usize> = 0..63;
pub const YAW_BINS: Range<usize> = 63..129;
pub const PITCH_BINS: Range<usize> = 129..195;
pub const ROLL_BINS: Range<usize> = 195..261;
pub const TRANSLATION: Range<usize> = 261..264;
pub const SCALE: usize = 264;

/// Identifier written into motion files; readers reject anything else.
pub const LAYOUT_ID: &str = "delta63-yaw66-pitch66-roll66-t3-s1";

/// Loss groups used for per-group weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Deformation,
    PoseBins,
    Translation,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Deformation, Group::PoseBins, Group::Translation];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Dimension range of the group. Scale is grouped with translation.
    pub fn range(self) -> Range<usize> {
        match self {
            Group::Deformation => DELTA,
            Group::PoseBins => YAW_BINS.start..ROLL_BINS.end,
            Group::Translation => TRANSLATION.start..MOTION_DIMS,
        }
    }

    pub fn of_dim(dim: usize) -> Group {
        if dim < DELTA.end {
            Group::Deformation
        } else if dim < ROLL_BINS.end {
            Group::PoseBins
        } else {
            Group::Translation
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Deformation => "deformation",
            Group::PoseBins => "pose_bins",
            Group::Translation => "translation",
        }
    }
}

/// Flat deformation index of `(keypoint, axis)`.
pub const fn delta_dim(keypoint: usize, axis: usize) -> usize {
    keypoint * 3 + axis
}
