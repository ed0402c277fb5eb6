use crate::error::{Error, Result};
use crate::motion::layout::{PITCH_BINS, ROLL_BINS, YAW_BINS};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Columns whose spread falls below this are only centered.
pub const MIN_STD: f64 = 1e-8;

/// Per-column affine standardization. Columns inside a shared block use one
/// common scale so the relative geometry inside the block is preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width] }
    }

    pub fn fit(data: &[ArrayView2<f64>], shared: &[Range<usize>]) -> Result<Self> {
        let width = data.first().map(|d| d.ncols()).ok_or_else(|| Error::InvalidInput("nothing to fit".into()))?;
        let mut count = 0usize;
        let mut sum = vec![0.0; width];
        for d in data {
            if d.ncols() != width {
                return Err(Error::shape(width, d.ncols()));
            }
            for row in d.rows() {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
                count += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; width];
        for d in data {
            for row in d.rows() {
                for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (x - m).powi(2);
                }
            }
        }
        var.iter_mut().for_each(|v| *v /= count as f64);
        for r in shared {
            if r.end > width {
                return Err(Error::Range(format!("shared block {r:?} exceeds width {width}")));
            }
            let avg = var[r.clone()].iter().sum::<f64>() / r.len() as f64;
            var[r.clone()].iter_mut().for_each(|v| *v = avg);
        }
        let std = var.iter().map(|v| if v.sqrt() < MIN_STD { 1.0 } else { v.sqrt() }).collect();
        Ok(Self { mean, std })
    }

    /// Motion standardization: per-dim, with each pose-bin block sharing a scale.
    pub fn fit_motion(data: &[ArrayView2<f64>]) -> Result<Self> {
        Self::fit(data, &[YAW_BINS, PITCH_BINS, ROLL_BINS])
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.width() {
            return Err(Error::shape(self.width(), n));
        }
        Ok(())
    }

    pub fn normalize(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    pub fn normalize_row(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(x.len())?;
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn denormalize_row(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(x.len())?;
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect())
    }
}
