//! Center-weighted blending of overlapping generated windows.

use super::segment::{SegmentPlan, SegmentWindow};
use crate::error::{Error, Result};
use ndarray::{s, Array2, ArrayView2, Axis};

/// Triangular profile `min(i + 1, L − i)` scaled to peak 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub w: Vec<f64>,
}

pub fn triangular(len: usize) -> FusionWeights {
    let raw: Vec<f64> = (0..len).map(|i| (i + 1).min(len - i) as f64).collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    FusionWeights { w: raw.into_iter().map(|v| v / peak).collect() }
}

pub fn fusion_weights(len: usize, overlap: usize) -> Result<FusionWeights> {
    if len == 0 || overlap >= len {
        return Err(Error::Config(format!("overlap {overlap} must be smaller than window {len}")));
    }
    Ok(triangular(len))
}

/// Frames generated but not yet emitted, with their accumulated weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionCarry {
    pub frames: Array2<f64>,
    pub weights: Vec<f64>,
}

impl FusionCarry {
    pub fn empty(cols: usize) -> Self {
        Self { frames: Array2::zeros((0, cols)), weights: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Blend coefficient of the incoming frame: `w_new / (w_carry + w_new)`.
pub fn blend_coefficient(carry_weight: f64, new_weight: f64) -> f64 {
    new_weight / (carry_weight + new_weight)
}

/// Blends `carry` over the head of `segment`, emits the first `emit` rows and
/// carries the remainder.
pub fn fuse_rows(
    carry: &FusionCarry,
    segment: ArrayView2<f64>,
    weights: &[f64],
    emit: usize,
) -> Result<(Array2<f64>, FusionCarry)> {
    if weights.len() != segment.nrows() {
        return Err(Error::shape(format!("{} weights", segment.nrows()), weights.len()));
    }
    if carry.len() > segment.nrows() || emit > segment.nrows() {
        return Err(Error::State(format!(
            "carry of {} and emit of {} do not fit a segment of {}",
            carry.len(),
            emit,
            segment.nrows()
        )));
    }
    if !carry.is_empty() && carry.frames.ncols() != segment.ncols() {
        return Err(Error::shape(segment.ncols(), carry.frames.ncols()));
    }
    let mut fused = segment.to_owned();
    let mut acc = weights.to_vec();
    for i in 0..carry.len() {
        let a = blend_coefficient(carry.weights[i], weights[i]);
        let c = carry.frames.row(i);
        for (v, cv) in fused.row_mut(i).iter_mut().zip(c) {
            // written so identical inputs reproduce the carry exactly
            *v = cv + a * (*v - cv);
        }
        acc[i] += carry.weights[i];
    }
    let emitted = fused.slice(s![..emit, ..]).to_owned();
    let rest = FusionCarry { frames: fused.slice(s![emit.., ..]).to_owned(), weights: acc[emit..].to_vec() };
    Ok((emitted, rest))
}

/// Steady-state fusion step: `carry` holds exactly the `O` overlap frames and
/// `segment` a full window; emits `V` frames.
pub fn fuse_segments(carry: &FusionCarry, segment: ArrayView2<f64>, plan: &SegmentPlan) -> Result<(Array2<f64>, FusionCarry)> {
    plan.validate()?;
    if carry.len() != plan.overlap() {
        return Err(Error::State(format!("carry holds {} frames, overlap is {}", carry.len(), plan.overlap())));
    }
    if segment.nrows() != plan.window {
        return Err(Error::shape(format!("{}-frame segment", plan.window), segment.nrows()));
    }
    let w = fusion_weights(plan.window, plan.overlap())?;
    fuse_rows(carry, segment, &w.w, plan.hop)
}

/// Incremental fuser following a [`SegmentPlan`].
#[derive(Debug, Clone)]
pub struct Fuser {
    next_emit: usize,
    carry: FusionCarry,
    cols: usize,
}

impl Fuser {
    pub fn new(cols: usize) -> Self {
        Self { next_emit: 0, carry: FusionCarry::empty(cols), cols }
    }

    /// Index of the next frame to be emitted.
    pub fn next_frame(&self) -> usize {
        self.next_emit
    }

    /// Fuses one window's output; frames before `next_frame` are dropped.
    pub fn push(&mut self, window: &SegmentWindow, segment: ArrayView2<f64>) -> Result<Array2<f64>> {
        if segment.nrows() != window.len() || segment.ncols() != self.cols {
            return Err(Error::shape(format!("{} x {}", window.len(), self.cols), format!("{:?}", segment.dim())));
        }
        if window.emit_start != self.next_emit || window.start > self.next_emit {
            return Err(Error::State(format!(
                "window {} starts emitting at {}, fuser is at frame {}",
                window.index, window.emit_start, self.next_emit
            )));
        }
        let skip = self.next_emit - window.start;
        let weights = triangular(window.len()).w;
        let (out, carry) = fuse_rows(
            &self.carry,
            segment.slice(s![skip.., ..]),
            &weights[skip..],
            window.emit_end - window.emit_start,
        )?;
        self.carry = carry;
        self.next_emit = window.emit_end;
        Ok(out)
    }

    /// Emits whatever is still carried.
    pub fn flush(&mut self) -> Array2<f64> {
        let out = std::mem::replace(&mut self.carry, FusionCarry::empty(self.cols)).frames;
        self.next_emit += out.len_of(Axis(0));
        out
    }
}
