//! Training losses over packed motion clips and the adaptive group weights.
//!
//! The denoising loss is the weighted mean of the per-group MSEs, so a group's
//! share does not depend on how many dimensions it spans.

use crate::error::{Error, Result};
use crate::motion::layout::{Group, MOTION_DIMS};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub const NUM_GROUPS: usize = 3;
pub const MIN_WEIGHT: f64 = 0.1;
pub const MAX_WEIGHT: f64 = 10.0;

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    if a.ncols() != MOTION_DIMS {
        return Err(Error::shape(format!("{MOTION_DIMS} columns"), a.ncols()));
    }
    Ok(())
}

/// Mean squared error inside each group, averaged over frames.
pub fn group_mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<[f64; NUM_GROUPS]> {
    same_shape(&pred, &target)?;
    let mut out = [0.0; NUM_GROUPS];
    for g in Group::ALL {
        let r = g.range();
        let n = (pred.nrows() * r.len()) as f64;
        let mut acc = 0.0;
        for (p, t) in pred.rows().into_iter().zip(target.rows()) {
            for d in r.clone() {
                acc += (p[d] - t[d]).powi(2);
            }
        }
        out[g.index()] = acc / n;
    }
    Ok(out)
}

pub fn loss_denoise(pred: ArrayView2<f64>, target: ArrayView2<f64>, weights: &[f64; NUM_GROUPS]) -> Result<f64> {
    loss_denoise_grad(pred, target, weights, None)
}

/// `(1/3)·Σ_g w_g·MSE_g`; when `grad` is given, `∂loss/∂pred` is added into it.
pub fn loss_denoise_grad(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    weights: &[f64; NUM_GROUPS],
    grad: Option<&mut Array2<f64>>,
) -> Result<f64> {
    same_shape(&pred, &target)?;
    let mse = group_mse(pred, target)?;
    let loss = (0..NUM_GROUPS).map(|g| weights[g] * mse[g]).sum::<f64>() / NUM_GROUPS as f64;
    if let Some(grad) = grad {
        let mut scale = [0.0; MOTION_DIMS];
        for g in Group::ALL {
            let n = (pred.nrows() * g.range().len()) as f64;
            for d in g.range() {
                scale[d] = 2.0 * weights[g.index()] / (NUM_GROUPS as f64 * n);
            }
        }
        for ((mut gr, p), t) in grad.rows_mut().into_iter().zip(pred.rows()).zip(target.rows()) {
            for d in 0..MOTION_DIMS {
                gr[d] += scale[d] * (p[d] - t[d]);
            }
        }
    }
    Ok(loss)
}

pub fn loss_temporal(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    loss_temporal_grad(pred, target, None)
}

/// Mean squared velocity error plus mean squared acceleration error.
pub fn loss_temporal_grad(pred: ArrayView2<f64>, target: ArrayView2<f64>, grad: Option<&mut Array2<f64>>) -> Result<f64> {
    same_shape(&pred, &target)?;
    let l = pred.nrows();
    if l < 3 {
        return Err(Error::Shape(format!("temporal loss needs at least 3 frames, got {l}")));
    }
    let e = &pred - &target;
    let (n1, n2) = (((l - 1) * MOTION_DIMS) as f64, ((l - 2) * MOTION_DIMS) as f64);
    let vel = &e.slice(ndarray::s![1.., ..]) - &e.slice(ndarray::s![..-1, ..]);
    let acc = &vel.slice(ndarray::s![1.., ..]) - &vel.slice(ndarray::s![..-1, ..]);
    let loss = vel.mapv(|x| x * x).sum() / n1 + acc.mapv(|x| x * x).sum() / n2;
    if let Some(g) = grad {
        for f in 0..l - 1 {
            for d in 0..MOTION_DIMS {
                let v = 2.0 * vel[[f, d]] / n1;
                g[[f + 1, d]] += v;
                g[[f, d]] -= v;
            }
        }
        for f in 0..l - 2 {
            for d in 0..MOTION_DIMS {
                let a = 2.0 * acc[[f, d]] / n2;
                g[[f + 2, d]] += a;
                g[[f + 1, d]] -= 2.0 * a;
                g[[f, d]] += a;
            }
        }
    }
    Ok(loss)
}

pub fn loss_initial(first: ArrayView1<f64>, m_ref: ArrayView1<f64>) -> Result<f64> {
    if first.len() != MOTION_DIMS || m_ref.len() != MOTION_DIMS {
        return Err(Error::shape(MOTION_DIMS, format!("{} and {}", first.len(), m_ref.len())));
    }
    Ok(first.iter().zip(m_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / MOTION_DIMS as f64)
}

/// The three loss terms of one clip.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub denoise: f64,
    pub temporal: f64,
    pub initial: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        total_loss(self.denoise, self.temporal, self.initial)
    }
}

pub fn total_loss(denoise: f64, temporal: f64, initial: f64) -> f64 {
    denoise + temporal + initial
}

/// All three terms for a predicted clip plus `∂total/∂pred`.
pub fn clip_loss_with_grad(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    m_ref: ArrayView1<f64>,
    weights: &[f64; NUM_GROUPS],
) -> Result<(LossParts, Array2<f64>)> {
    let mut grad = Array2::zeros(pred.dim());
    let denoise = loss_denoise_grad(pred, target, weights, Some(&mut grad))?;
    let temporal = loss_temporal_grad(pred, target, Some(&mut grad))?;
    let first = pred.index_axis(Axis(0), 0);
    let initial = loss_initial(first, m_ref)?;
    for d in 0..MOTION_DIMS {
        grad[[0, d]] += 2.0 * (first[d] - m_ref[d]) / MOTION_DIMS as f64;
    }
    Ok((LossParts { denoise, temporal, initial }, grad))
}

/// EMA-proportional group weights, normalized to sum to 3 and clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeightsState {
    pub weights: [f64; NUM_GROUPS],
    pub ema_losses: [f64; NUM_GROUPS],
    pub update_rate: f64,
}

impl LossWeightsState {
    pub fn new(update_rate: f64) -> Result<Self> {
        if !(update_rate > 0.0 && update_rate <= 1.0) {
            return Err(Error::Config(format!("update rate {update_rate} outside (0, 1]")));
        }
        Ok(Self { weights: [1.0; NUM_GROUPS], ema_losses: [0.0; NUM_GROUPS], update_rate })
    }
}

impl Default for LossWeightsState {
    fn default() -> Self {
        Self::new(0.5).expect("default rate is valid")
    }
}

/// One update step: `ema ← (1 − r)·ema + r·losses`, weights from the new EMA.
pub fn update_adaptive_weights(group_losses: &[f64; NUM_GROUPS], state: &LossWeightsState) -> Result<LossWeightsState> {
    if group_losses.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidInput(format!("group losses must be finite and non-negative: {group_losses:?}")));
    }
    let r = state.update_rate;
    let mut ema = [0.0; NUM_GROUPS];
    for g in 0..NUM_GROUPS {
        ema[g] = (1.0 - r) * state.ema_losses[g] + r * group_losses[g];
    }
    let mean = ema.iter().sum::<f64>() / NUM_GROUPS as f64;
    let weights = if mean > 0.0 { normalize_weights(ema.map(|e| e / mean)) } else { [1.0; NUM_GROUPS] };
    Ok(LossWeightsState { weights, ema_losses: ema, update_rate: r })
}

/// Rescales to sum 3 with every entry in `[MIN_WEIGHT, MAX_WEIGHT]`.
///
/// Entries pinned at a bound stay there while the rest share the remainder,
/// repeated until no entry leaves the interval.
fn normalize_weights(raw: [f64; NUM_GROUPS]) -> [f64; NUM_GROUPS] {
    let target = NUM_GROUPS as f64;
    let mut w = raw;
    let mut pinned = [false; NUM_GROUPS];
    for _ in 0..NUM_GROUPS + 1 {
        let fixed: f64 = (0..NUM_GROUPS).filter(|&g| pinned[g]).map(|g| w[g]).sum();
        let free: f64 = (0..NUM_GROUPS).filter(|&g| !pinned[g]).map(|g| raw[g]).sum();
        let free_count = pinned.iter().filter(|p| !**p).count();
        for g in (0..NUM_GROUPS).filter(|&g| !pinned[g]) {
            w[g] = if free > 0.0 { raw[g] * (target - fixed) / free } else { (target - fixed) / free_count as f64 };
        }
        let mut changed = false;
        for g in 0..NUM_GROUPS {
            if !pinned[g] && (w[g] < MIN_WEIGHT || w[g] > MAX_WEIGHT) {
                w[g] = w[g].clamp(MIN_WEIGHT, MAX_WEIGHT);
                pinned[g] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    w
}

/// Mean over the batch rows of [`group_mse`].
pub fn mean_group_mse(values: &[[f64; NUM_GROUPS]]) -> [f64; NUM_GROUPS] {
    let mut out = [0.0; NUM_GROUPS];
    if values.is_empty() {
        return out;
    }
    for v in values {
        for g in 0..NUM_GROUPS {
            out[g] += v[g] / values.len() as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_clip(rng: &mut ChaCha8Rng, l: usize) -> Array2<f64> {
        Array2::from_shape_fn((l, MOTION_DIMS), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn denoise_zero_and_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_clip(&mut rng, 6);
        assert_eq!(loss_denoise(a.view(), a.view(), &[1.0; 3]).unwrap(), 0.0);
        let b = &a + 1.0;
        assert!((loss_denoise(a.view(), b.view(), &[1.0; 3]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn denoise_matches_group_mean_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (random_clip(&mut rng, 9), random_clip(&mut rng, 9));
        let w = [0.5, 2.0, 0.5];
        let bounds = [(0, 63), (63, 261), (261, 265)];
        let mut expect = 0.0;
        for (g, (lo, hi)) in bounds.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..9 {
                for d in *lo..*hi {
                    acc += (a[[i, d]] - b[[i, d]]).powi(2);
                }
            }
            expect += w[g] * acc / (9 * (hi - lo)) as f64 / 3.0;
        }
        assert!((loss_denoise(a.view(), b.view(), &w).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_equal_flat_mse_when_groups_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_clip(&mut rng, 5);
        // same per-group error energy everywhere
        let b = Array2::from_shape_fn(a.dim(), |(i, d)| a[[i, d]] + if (i + d) % 2 == 0 { 0.3 } else { -0.3 });
        let flat = (&a - &b).mapv(|x| x * x).mean().unwrap();
        assert!((loss_denoise(a.view(), b.view(), &[1.0; 3]).unwrap() - flat).abs() < 1e-12);
    }

    #[test]
    fn temporal_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_clip(&mut rng, 7);
        assert_eq!(loss_temporal(a.view(), a.view()).unwrap(), 0.0);
        let mut shifted = a.clone();
        for d in 0..MOTION_DIMS {
            let c: f64 = rng.gen_range(-2.0..2.0);
            shifted.column_mut(d).mapv_inplace(|x| x + c);
        }
        assert!(loss_temporal(shifted.view(), a.view()).unwrap() < 1e-24);
        let short = random_clip(&mut rng, 2);
        assert!(matches!(loss_temporal(short.view(), short.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn temporal_matches_explicit_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (p, m) = (random_clip(&mut rng, 8), random_clip(&mut rng, 8));
        let (mut v, mut a) = (0.0, 0.0);
        for d in 0..MOTION_DIMS {
            for f in 0..7 {
                v += ((p[[f + 1, d]] - p[[f, d]]) - (m[[f + 1, d]] - m[[f, d]])).powi(2);
            }
            for f in 0..6 {
                let pa = p[[f + 2, d]] - 2.0 * p[[f + 1, d]] + p[[f, d]];
                let ma = m[[f + 2, d]] - 2.0 * m[[f + 1, d]] + m[[f, d]];
                a += (pa - ma).powi(2);
            }
        }
        let expect = v / (7 * MOTION_DIMS) as f64 + a / (6 * MOTION_DIMS) as f64;
        assert!((loss_temporal(p.view(), m.view()).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn initial_cases() {
        let x = Array1::from_elem(MOTION_DIMS, 0.3);
        assert_eq!(loss_initial(x.view(), x.view()).unwrap(), 0.0);
        let mut y = x.clone();
        y[17] += 1.0;
        assert!((loss_initial(x.view(), y.view()).unwrap() - 1.0 / 265.0).abs() < 1e-15);
    }

    #[test]
    fn total_is_sum_and_grad_matches_finite_differences() {
        assert_eq!(total_loss(0.0, 0.0, 0.0), 0.0);
        assert_eq!(total_loss(0.25, 0.5, 2.0), 2.75);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, m) = (random_clip(&mut rng, 5), random_clip(&mut rng, 5));
        let r = Array1::from_shape_fn(MOTION_DIMS, |_| rng.gen_range(-1.0..1.0));
        let w = [0.7, 1.6, 0.7];
        let (parts, grad) = clip_loss_with_grad(p.view(), m.view(), r.view(), &w).unwrap();
        let separate = loss_denoise(p.view(), m.view(), &w).unwrap()
            + loss_temporal(p.view(), m.view()).unwrap()
            + loss_initial(p.row(0), r.view()).unwrap();
        assert!((parts.total() - separate).abs() < 1e-12);
        let h = 1e-5;
        for &(f, d) in &[(0, 0), (2, 70), (4, 264), (1, 262), (3, 10)] {
            let mut up = p.clone();
            up[[f, d]] += h;
            let mut dn = p.clone();
            dn[[f, d]] -= h;
            let lu = clip_loss_with_grad(up.view(), m.view(), r.view(), &w).unwrap().0.total();
            let ld = clip_loss_with_grad(dn.view(), m.view(), r.view(), &w).unwrap().0.total();
            let num = (lu - ld) / (2.0 * h);
            assert!((num - grad[[f, d]]).abs() < 1e-8 * (1.0 + num.abs()));
        }
    }

    #[test]
    fn equal_losses_give_unit_weights() {
        let s = update_adaptive_weights(&[0.4; 3], &LossWeightsState::default()).unwrap();
        for w in s.weights {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_group_hits_floor() {
        let mut s = LossWeightsState::default();
        s = update_adaptive_weights(&[1.0, 1.0, 1.0], &s).unwrap();
        for _ in 0..60 {
            s = update_adaptive_weights(&[1.0, 0.0, 1.0], &s).unwrap();
        }
        assert!((s.weights[1] - MIN_WEIGHT).abs() < 1e-12);
        assert!((s.weights.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn weight_trajectory_matches_scalar_recurrence() {
        let seq = [[0.9, 0.3, 0.6], [0.5, 0.4, 0.2], [0.2, 0.2, 0.1], [0.4, 0.05, 0.3]];
        let r = 0.3;
        let mut s = LossWeightsState::new(r).unwrap();
        let mut ema = [0.0; 3];
        for l in &seq {
            s = update_adaptive_weights(l, &s).unwrap();
            for g in 0..3 {
                ema[g] = (1.0 - r) * ema[g] + r * l[g];
            }
            // no entry reaches a bound for this fixture
            let sum: f64 = ema.iter().sum();
            for g in 0..3 {
                assert!((s.weights[g] - 3.0 * ema[g] / sum).abs() < 1e-12);
                assert!((s.ema_losses[g] - ema[g]).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn weights_bounded_and_normalized(seq in proptest::collection::vec(proptest::array::uniform3(0.0f64..5.0), 1..20)) {
            let mut s = LossWeightsState::new(0.4).unwrap();
            for l in &seq {
                s = update_adaptive_weights(l, &s).unwrap();
                prop_assert!((s.weights.iter().sum::<f64>() - 3.0).abs() < 1e-9);
                for w in s.weights {
                    prop_assert!((MIN_WEIGHT - 1e-12..=MAX_WEIGHT + 1e-12).contains(&w));
                }
            }
        }

        #[test]
        fn losses_non_negative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_clip(&mut rng, 4), random_clip(&mut rng, 4));
            prop_assert!(loss_denoise(a.view(), b.view(), &[0.3, 1.2, 1.5]).unwrap() > 0.0);
            prop_assert!(loss_temporal(a.view(), b.view()).unwrap() > 0.0);
            prop_assert!(loss_initial(a.row(0), b.row(0)).unwrap() > 0.0);
        }
    }
}
