use super::layout::MOTION_DIMS;
use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1};

pub const DEFAULT_FPS: f64 = 25.0;

/// A sequence of packed motion vectors, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub frames: Array2<f64>,
    pub fps: f64,
}

impl MotionClip {
    pub fn new(frames: Array2<f64>) -> Result<Self> {
        if frames.ncols() != MOTION_DIMS {
            return Err(Error::shape(format!("{MOTION_DIMS} columns"), frames.ncols()));
        }
        if frames.nrows() == 0 {
            return Err(Error::InvalidInput("motion clip has no frames".into()));
        }
        Ok(Self { frames, fps: DEFAULT_FPS })
    }

    pub fn zeros(len: usize) -> Self {
        Self { frames: Array2::zeros((len, MOTION_DIMS)), fps: DEFAULT_FPS }
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn frame(&self, i: usize) -> ArrayView1<'_, f64> {
        self.frames.row(i)
    }
}
