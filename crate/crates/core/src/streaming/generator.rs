//! Motion generators the pipeline can drive.

use crate::conditioning::synth::MOUTH_OPEN_DIM;
use crate::conditioning::ConditionBundle;
use crate::diffusion::MotionModel;
use crate::error::Result;
use ndarray::Array2;
use std::sync::Arc;

/// Produces raw motion frames for one window of conditions.
pub trait MotionGenerator: Send {
    fn generate(&mut self, window: &ConditionBundle, steps: usize, seed: u64) -> Result<Array2<f64>>;
}

/// Samples a trained model. The model is shared read-only between sessions.
#[derive(Debug, Clone)]
pub struct ModelGenerator {
    pub model: Arc<MotionModel>,
}

impl ModelGenerator {
    pub fn new(model: Arc<MotionModel>) -> Self {
        Self { model }
    }
}

impl MotionGenerator for ModelGenerator {
    fn generate(&mut self, window: &ConditionBundle, steps: usize, seed: u64) -> Result<Array2<f64>> {
        Ok(self.model.sample(window, steps, seed)?.frames)
    }
}

/// Holds the reference motion and opens the mouth with audio energy. Cheap
/// enough to stand in for the model when timing is simulated.
#[derive(Debug, Clone, Copy)]
pub struct HoldGenerator {
    pub mouth_gain: f64,
}

impl Default for HoldGenerator {
    fn default() -> Self {
        Self { mouth_gain: 0.02 }
    }
}

impl MotionGenerator for HoldGenerator {
    fn generate(&mut self, window: &ConditionBundle, _steps: usize, _seed: u64) -> Result<Array2<f64>> {
        window.validate()?;
        let m_ref = window.m_ref.as_slice();
        let feats = &window.audio.features;
        let mut out = Array2::zeros((window.len(), m_ref.len()));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row.iter_mut().zip(m_ref).for_each(|(o, r)| *o = *r);
            let energy = feats.row(i).mean().unwrap_or(0.0);
            row[MOUTH_OPEN_DIM] += self.mouth_gain * energy.max(0.0).tanh();
        }
        Ok(out)
    }
}
