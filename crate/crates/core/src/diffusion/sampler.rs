use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Anything that predicts the clean clip from a noisy one at step `t`.
pub trait PredictX0 {
    fn predict_x0(&self, x_t: ArrayView2<f64>, t: usize) -> Result<Array2<f64>>;
}

impl<F> PredictX0 for F
where
    F: Fn(ArrayView2<f64>, usize) -> Result<Array2<f64>>,
{
    fn predict_x0(&self, x_t: ArrayView2<f64>, t: usize) -> Result<Array2<f64>> {
        self(x_t, t)
    }
}

/// Standard-normal starting latent, fully determined by `seed`.
pub fn initial_noise(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

/// Deterministic reduced-step sampling on the ladder `T, T − s, …, s`.
///
/// At each rung the model predicts `m̂0`; the implied noise is recovered from
/// the current latent and the next latent is rebuilt from `m̂0` at the next
/// rung's `ᾱ`. The last rung returns `m̂0` directly.
pub fn sample<D: PredictX0 + ?Sized>(
    schedule: &NoiseSchedule,
    model: &D,
    rows: usize,
    cols: usize,
    steps: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let ladder = schedule.ladder(steps)?;
    let mut x = initial_noise(rows, cols, seed);
    for (k, &t) in ladder.iter().enumerate() {
        let x0 = model.predict_x0(x.view(), t)?;
        if x0.dim() != x.dim() {
            return Err(Error::shape(format!("{:?}", x.dim()), format!("{:?}", x0.dim())));
        }
        let Some(&next) = ladder.get(k + 1) else {
            return Ok(x0);
        };
        let ab = schedule.alpha_bar(t)?;
        let ab_next = schedule.alpha_bar(next)?;
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        let (na, nb) = (ab_next.sqrt(), (1.0 - ab_next).sqrt());
        x = Zip::from(&x).and(&x0).map_collect(|&xt, &p| {
            let eps = (xt - sa * p) / sb;
            na * p + nb * eps
        });
    }
    unreachable!("ladder is never empty")
}
