use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2, Zip};

pub const DEFAULT_STEPS: usize = 1000;
pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;

/// Linear DDPM noise schedule. Index `t` runs over `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_STEPS, BETA_START, BETA_END).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config("schedule needs at least 2 steps".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!("betas must satisfy 0 < {beta_start} <= {beta_end} < 1")));
        }
        let betas: Vec<f64> =
            (0..steps).map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64).collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alphas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::Range(format!("timestep {t} outside [1, {}]", self.steps())));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.betas[self.check(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alphas[self.check(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bars[self.check(t)?])
    }

    /// `sqrt(ᾱ_t)·m0 + sqrt(1 − ᾱ_t)·eps`.
    pub fn q_sample(&self, m0: ArrayView2<f64>, t: usize, eps: ArrayView2<f64>) -> Result<Array2<f64>> {
        if m0.dim() != eps.dim() {
            return Err(Error::shape(format!("{:?}", m0.dim()), format!("{:?}", eps.dim())));
        }
        let ab = self.alpha_bar(t)?;
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(Zip::from(&m0).and(&eps).map_collect(|&x, &e| a * x + b * e))
    }

    /// Evenly strided descending ladder `T, T − s, …, s` with `s = T / steps`.
    pub fn ladder(&self, steps: usize) -> Result<Vec<usize>> {
        let total = self.steps();
        if steps == 0 || steps > total {
            return Err(Error::Range(format!("sampling steps {steps} outside [1, {total}]")));
        }
        if !total.is_multiple_of(steps) {
            return Err(Error::Range(format!("sampling steps {steps} do not divide {total}")));
        }
        let stride = total / steps;
        Ok((0..steps).map(|k| total - k * stride).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn schedule_invariants() {
        let s = NoiseSchedule::default();
        assert!(s.alpha_bar(1).unwrap() > 0.999);
        for t in 2..=s.steps() {
            assert!(s.beta(t).unwrap() >= s.beta(t - 1).unwrap());
            assert!(s.alpha_bar(t).unwrap() < s.alpha_bar(t - 1).unwrap());
        }
        assert!(matches!(s.alpha_bar(0), Err(Error::Range(_))));
        assert!(matches!(s.alpha_bar(1001), Err(Error::Range(_))));
    }

    #[test]
    fn zero_noise_scales_signal() {
        let s = NoiseSchedule::default();
        let m0 = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 * 0.1 - 0.7);
        let out = s.q_sample(m0.view(), 500, Array2::zeros((3, 5)).view()).unwrap();
        let a = s.alpha_bar(500).unwrap().sqrt();
        assert_eq!(out, m0.mapv(|x| a * x));
    }

    #[test]
    fn first_step_is_almost_clean() {
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m0: Array2<f64> = Array2::from_shape_fn((4, 265), |_| StandardNormal.sample(&mut rng));
        let eps = Array2::from_shape_fn((4, 265), |_| StandardNormal.sample(&mut rng));
        let norm = m0.mapv(|x| x * x).sum().sqrt();
        let dist = |out: Array2<f64>| (&out - &m0).mapv(|x| x * x).sum().sqrt();
        // signal path alone stays within 1e-3; unit noise adds sqrt(beta_1) = 0.01
        let clean = s.q_sample(m0.view(), 1, Array2::zeros((4, 265)).view()).unwrap();
        assert!(dist(clean) < 1e-3 * norm);
        assert!(dist(s.q_sample(m0.view(), 1, eps.view()).unwrap()) < 1.1e-2 * norm);
        let bad = s.q_sample(m0.view(), 0, eps.view());
        assert!(matches!(bad, Err(Error::Range(_))));
    }

    #[test]
    fn monte_carlo_variance_matches_one_minus_alpha_bar() {
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m0 = Array2::from_elem((1, 1), 0.8);
        for t in [10, 300, 900] {
            let n = 100_000;
            let draws: Vec<f64> = (0..n)
                .map(|_| {
                    let e = Array2::from_elem((1, 1), StandardNormal.sample(&mut rng));
                    s.q_sample(m0.view(), t, e.view()).unwrap()[[0, 0]]
                })
                .collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let expect = 1.0 - s.alpha_bar(t).unwrap();
            assert!((var - expect).abs() < 0.02 * expect, "t={t} var={var} expect={expect}");
        }
    }

    #[test]
    fn energy_property() {
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (l, d, reps) = (8, 265, 200);
        let t = 400;
        let ab = s.alpha_bar(t).unwrap();
        let mut acc = 0.0;
        let mut acc0 = 0.0;
        for _ in 0..reps {
            let m0 = Array2::from_shape_fn((l, d), |_| StandardNormal.sample(&mut rng));
            let e = Array2::from_shape_fn((l, d), |_| StandardNormal.sample(&mut rng));
            acc += s.q_sample(m0.view(), t, e.view()).unwrap().mapv(|x| x * x).sum();
            acc0 += m0.mapv(|x| x * x).sum();
        }
        let expect = ab * acc0 / reps as f64 + (1.0 - ab) * (l * d) as f64;
        assert!((acc / reps as f64 - expect).abs() < 0.02 * expect);
    }

    #[test]
    fn ladder_shapes() {
        let s = NoiseSchedule::default();
        assert_eq!(s.ladder(1).unwrap(), vec![1000]);
        assert_eq!(s.ladder(5).unwrap(), vec![1000, 800, 600, 400, 200]);
        assert_eq!(s.ladder(1000).unwrap().last(), Some(&1));
        assert!(matches!(s.ladder(0), Err(Error::Range(_))));
        assert!(matches!(s.ladder(3), Err(Error::Range(_))));
        assert!(matches!(s.ladder(1001), Err(Error::Range(_))));
    }
}
