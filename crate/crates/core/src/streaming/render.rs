//! Non-photorealistic render stage: composes posed keypoints and projects
//! them orthographically to 2-D.

use crate::error::Result;
use crate::motion::{compose_keypoints, unpack_motion, CanonicalKeypoints, ScaleMode, NUM_KEYPOINTS};

pub type Projected = [[f64; 2]; NUM_KEYPOINTS];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderStub {
    pub c_ref: CanonicalKeypoints,
    pub scale_mode: ScaleMode,
}

impl RenderStub {
    pub fn new(c_ref: CanonicalKeypoints) -> Self {
        Self { c_ref, scale_mode: ScaleMode::Apply }
    }

    /// Projected keypoints of one packed motion frame.
    pub fn render(&self, frame: &[f64]) -> Result<Projected> {
        let m = unpack_motion(frame)?;
        Ok(compose_keypoints(&self.c_ref, &m, self.scale_mode)?.project_2d())
    }
}
