//! Post-training measurements on generated clips.

use super::engine::MotionModel;
use crate::conditioning::synth::{emotion_prototypes, split_seed};
use crate::conditioning::{ConditionBundle, EmotionLabel, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::motion::layout::DELTA_DIMS;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

/// Mean per-frame RMSE between two clips of equal shape.
pub fn mean_frame_rmse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() || a.nrows() == 0 {
        return Err(Error::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    let total: f64 = a
        .rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| (x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64).sqrt())
        .sum();
    Ok(total / a.nrows() as f64)
}

/// Mean per-frame RMSE (normalized space) between samples drawn with two
/// step counts from the same seed, averaged over the bundles.
pub fn step_disparity(model: &MotionModel, bundles: &[&ConditionBundle], steps_a: usize, steps_b: usize, seed: u64) -> Result<f64> {
    if bundles.is_empty() {
        return Err(Error::InvalidInput("no bundles to compare".into()));
    }
    let mut acc = 0.0;
    for (i, b) in bundles.iter().enumerate() {
        let cond = model.prepare(b)?;
        let s = split_seed(seed, i as u64);
        let x = model.sample_normalized(&cond, steps_a, s)?;
        let y = model.sample_normalized(&cond, steps_b, s)?;
        acc += mean_frame_rmse(&x, &y)?;
    }
    Ok(acc / bundles.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    /// Per bundle: `(original class, switched class, agreeing dims)`.
    pub cases: Vec<(usize, usize, usize)>,
    pub dims_checked: usize,
}

impl SwitchReport {
    pub fn agreement_rate(&self) -> f64 {
        let total = (self.cases.len() * self.dims_checked) as f64;
        self.cases.iter().map(|c| c.2).sum::<usize>() as f64 / total
    }

    pub fn all_agree(&self) -> bool {
        self.cases.iter().all(|c| c.2 == self.dims_checked)
    }
}

fn mean_delta(clip: &Array2<f64>) -> Vec<f64> {
    let m = clip.mean_axis(Axis(0)).expect("clip has frames");
    m.iter().take(DELTA_DIMS).copied().collect()
}

/// Regenerates each bundle under its own label and under another one with
/// everything else fixed, then checks that the change in mean δ has the sign
/// of the prototype difference on its `top` largest dims.
pub fn emotion_switch(model: &MotionModel, bundles: &[&ConditionBundle], steps: usize, seed: u64, top: usize) -> Result<SwitchReport> {
    let protos = emotion_prototypes();
    let mut cases = Vec::new();
    for (i, b) in bundles.iter().enumerate() {
        let a = b.emotion.index();
        let other = (a + 1 + i % (NUM_EMOTIONS - 1)) % NUM_EMOTIONS;
        let mut switched = (*b).clone();
        switched.emotion = EmotionLabel::new(other)?;
        let s = split_seed(seed, i as u64);
        let da = mean_delta(&model.sample(b, steps, s)?.frames);
        let db = mean_delta(&model.sample(&switched, steps, s)?.frames);
        let diff: Vec<f64> = (0..DELTA_DIMS).map(|d| protos[a][d] - protos[other][d]).collect();
        let mut order: Vec<usize> = (0..DELTA_DIMS).collect();
        order.sort_by(|&x, &y| diff[y].abs().total_cmp(&diff[x].abs()));
        let agree = order.iter().take(top).filter(|&&d| (da[d] - db[d]) * diff[d] > 0.0).count();
        cases.push((a, other, agree));
    }
    Ok(SwitchReport { cases, dims_checked: top })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rmse_of_known_offsets() {
        let a = array![[0.0, 0.0], [1.0, 1.0]];
        let b = array![[3.0, 4.0], [1.0, 1.0]];
        // frame 0: sqrt((9 + 16) / 2), frame 1: 0
        assert!((mean_frame_rmse(&a, &b).unwrap() - (12.5f64).sqrt() / 2.0).abs() < 1e-12);
        assert!(mean_frame_rmse(&a, &array![[1.0]]).is_err());
    }
}
