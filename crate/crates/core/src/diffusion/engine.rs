use super::model::Denoiser;
use super::normalize::Normalizer;
use super::sampler::{sample, PredictX0};
use super::schedule::NoiseSchedule;
use crate::conditioning::{assemble_bundle_ecs, ConditionBundle, ConditionFlags};
use crate::error::{Error, Result};
use crate::motion::MotionClip;
use ndarray::{Array1, Array2, ArrayView2};

/// A denoiser together with everything needed to run it on raw conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub denoiser: Denoiser,
    pub schedule: NoiseSchedule,
    pub motion_norm: Normalizer,
    pub ecs_norm: Normalizer,
    pub flags: ConditionFlags,
    pub group_weights: [f64; 3],
    pub seed: u64,
    pub epoch: usize,
}

/// Normalized conditions of one window, ready for repeated denoiser calls.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedConditions {
    pub m_ref: Array1<f64>,
    pub ecs: Array2<f64>,
}

struct Conditioned<'a> {
    model: &'a MotionModel,
    cond: &'a PreparedConditions,
}

impl PredictX0 for Conditioned<'_> {
    fn predict_x0(&self, x_t: ArrayView2<f64>, t: usize) -> Result<Array2<f64>> {
        self.model.denoiser.forward(x_t, self.cond.m_ref.view(), self.cond.ecs.view(), t)
    }
}

impl MotionModel {
    pub fn prepare(&self, bundle: &ConditionBundle) -> Result<PreparedConditions> {
        bundle.validate()?;
        let ecs = assemble_bundle_ecs(bundle, self.flags)?;
        if ecs.ncols() != self.ecs_norm.width() {
            return Err(Error::shape(format!("{} condition columns", self.ecs_norm.width()), ecs.ncols()));
        }
        Ok(PreparedConditions {
            m_ref: self.motion_norm.normalize_row(ndarray::ArrayView1::from(bundle.m_ref.as_slice()))?,
            ecs: self.ecs_norm.normalize(ecs.view())?,
        })
    }

    /// Sampling in normalized motion space.
    pub fn sample_normalized(&self, cond: &PreparedConditions, steps: usize, seed: u64) -> Result<Array2<f64>> {
        let len = cond.ecs.nrows();
        sample(&self.schedule, &Conditioned { model: self, cond }, len, self.motion_norm.width(), steps, seed)
    }

    /// Generates a raw motion clip for the bundle's window.
    pub fn sample(&self, bundle: &ConditionBundle, steps: usize, seed: u64) -> Result<MotionClip> {
        let cond = self.prepare(bundle)?;
        let z = self.sample_normalized(&cond, steps, seed)?;
        MotionClip::new(self.motion_norm.denormalize(z.view())?)
    }
}
