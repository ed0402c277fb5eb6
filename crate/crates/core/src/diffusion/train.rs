//! Single-threaded, seed-deterministic training on the synthetic corpus.

use super::engine::MotionModel;
use super::loss::{clip_loss_with_grad, group_mse, update_adaptive_weights, LossParts, LossWeightsState, NUM_GROUPS};
use super::model::{Denoiser, DenoiserConfig};
use super::normalize::Normalizer;
use super::schedule::NoiseSchedule;
use crate::conditioning::synth::split_seed;
use crate::conditioning::{assemble_bundle_ecs, split_train_val, ConditionFlags, SyntheticClip};
use crate::error::{Error, Result};
use crate::motion::{hflip_vector, MotionVector, SymmetryPairing};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub n_clips: usize,
    pub clip_len: usize,
    pub val_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Final learning rate as a fraction of the initial one (cosine decay).
    pub min_lr_ratio: f64,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    pub flip_probability: f64,
    pub adaptive_weights: bool,
    pub weight_update_rate: f64,
    pub use_emotion: bool,
    pub use_ckp: bool,
    pub hidden: usize,
    pub blocks: usize,
    pub mlp_hidden: usize,
    /// Fixed (timestep, noise) draws per validation clip.
    pub val_draws: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_clips: 200,
            clip_len: 80,
            val_fraction: 0.2,
            epochs: 30,
            batch_size: 8,
            learning_rate: 2e-3,
            min_lr_ratio: 0.05,
            optimizer: OptimizerKind::Adam,
            grad_clip: 1.0,
            flip_probability: 0.5,
            adaptive_weights: true,
            weight_update_rate: 0.5,
            use_emotion: true,
            use_ckp: true,
            hidden: 64,
            blocks: 2,
            mlp_hidden: 128,
            val_draws: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_clips < 2 {
            return bad(format!("n_clips must be at least 2, got {}", self.n_clips));
        }
        if self.clip_len < 3 {
            return bad(format!("clip_len must be at least 3, got {}", self.clip_len));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        if self.batch_size == 0 || self.val_draws == 0 {
            return bad("batch_size and val_draws must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return bad("learning_rate must be positive and min_lr_ratio in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad(format!("flip_probability {} outside [0, 1]", self.flip_probability));
        }
        if self.grad_clip < 0.0 {
            return bad("grad_clip must be non-negative".into());
        }
        self.denoiser_config(1).validate()?;
        LossWeightsState::new(self.weight_update_rate).map(|_| ())
    }

    pub fn flags(&self) -> ConditionFlags {
        ConditionFlags { use_ckp: self.use_ckp, use_emotion: self.use_emotion }
    }

    pub fn denoiser_config(&self, ecs_width: usize) -> DenoiserConfig {
        DenoiserConfig { ecs_width, hidden: self.hidden, blocks: self.blocks, mlp_hidden: self.mlp_hidden, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_parts: LossParts,
    pub train_group_mse: [f64; NUM_GROUPS],
    pub val_group_mse: [f64; NUM_GROUPS],
    /// Mean of the three validation group MSEs.
    pub val_grouped_mse: f64,
    pub group_weights: [f64; NUM_GROUPS],
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MotionModel,
    /// Entry 0 is the untrained baseline; entry `k` follows epoch `k`.
    pub log: Vec<EpochMetrics>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl TrainOutcome {
    pub fn baseline(&self) -> &EpochMetrics {
        &self.log[0]
    }

    pub fn last(&self) -> &EpochMetrics {
        self.log.last().expect("log always holds the baseline")
    }
}

/// Normalized tensors of one clip.
#[derive(Debug, Clone)]
pub struct PreparedClip {
    pub x0: Array2<f64>,
    pub m_ref: Array1<f64>,
    pub ecs: Array2<f64>,
}

struct RawClip {
    target: Array2<f64>,
    m_ref: Array1<f64>,
    ecs: Array2<f64>,
}

fn raw_views(clip: &SyntheticClip, flags: ConditionFlags, flipped: bool) -> Result<RawClip> {
    let pairing = SymmetryPairing::default();
    if !flipped {
        return Ok(RawClip {
            target: clip.target.frames.clone(),
            m_ref: Array1::from(clip.bundle.m_ref.as_slice().to_vec()),
            ecs: assemble_bundle_ecs(&clip.bundle, flags)?,
        });
    }
    let mut target = clip.target.frames.clone();
    for mut row in target.rows_mut() {
        let f = hflip_vector(row.as_slice().expect("rows are contiguous"), &pairing)?;
        row.assign(&ArrayView1::from(&f));
    }
    let m_ref = hflip_vector(clip.bundle.m_ref.as_slice(), &pairing)?;
    let bundle = clip.bundle.mirrored(MotionVector::new(m_ref.clone())?)?;
    Ok(RawClip { target, m_ref: Array1::from(m_ref), ecs: assemble_bundle_ecs(&bundle, flags)? })
}

/// Fits the motion and condition normalizers on the training clips (and
/// their mirror images when flips are in use).
pub fn fit_normalizers(clips: &[&SyntheticClip], flags: ConditionFlags, with_flips: bool) -> Result<(Normalizer, Normalizer)> {
    let mut raws = Vec::new();
    for c in clips {
        raws.push(raw_views(c, flags, false)?);
        if with_flips {
            raws.push(raw_views(c, flags, true)?);
        }
    }
    let targets: Vec<_> = raws.iter().map(|r| r.target.view()).collect();
    let ecs: Vec<_> = raws.iter().map(|r| r.ecs.view()).collect();
    Ok((Normalizer::fit_motion(&targets)?, Normalizer::fit(&ecs, &[])?))
}

pub fn prepare_clip(
    clip: &SyntheticClip,
    flags: ConditionFlags,
    flipped: bool,
    motion_norm: &Normalizer,
    ecs_norm: &Normalizer,
) -> Result<PreparedClip> {
    let raw = raw_views(clip, flags, flipped)?;
    Ok(PreparedClip {
        x0: motion_norm.normalize(raw.target.view())?,
        m_ref: motion_norm.normalize_row(raw.m_ref.view())?,
        ecs: ecs_norm.normalize(raw.ecs.view())?,
    })
}

/// Deterministic `(t, eps)` for validation draw `k` of clip `j`.
fn validation_draw(seed: u64, j: usize, k: usize, rows: usize, cols: usize, steps: usize) -> (usize, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed ^ 0x005E_ED0F_7A11, (j * 1024 + k) as u64));
    let t = rng.gen_range(1..=steps);
    let eps = Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng));
    (t, eps)
}

/// Held-out group MSE (normalized space) of x0 predictions at fixed draws.
pub fn evaluate(model: &MotionModel, clips: &[PreparedClip], draws: usize, seed: u64) -> Result<[f64; NUM_GROUPS]> {
    let mut acc = [0.0; NUM_GROUPS];
    let mut n = 0.0;
    for (j, c) in clips.iter().enumerate() {
        for k in 0..draws {
            let (t, eps) = validation_draw(seed, j, k, c.x0.nrows(), c.x0.ncols(), model.schedule.steps());
            let x_t = model.schedule.q_sample(c.x0.view(), t, eps.view())?;
            let pred = model.denoiser.forward(x_t.view(), c.m_ref.view(), c.ecs.view(), t)?;
            let g = group_mse(pred.view(), c.x0.view())?;
            for i in 0..NUM_GROUPS {
                acc[i] += g[i];
            }
            n += 1.0;
        }
    }
    Ok(acc.map(|a| a / n))
}

enum Optimizer {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, step: i32 },
}

impl Optimizer {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam { m: vec![0.0; n], v: vec![0.0; n], step: 0 },
        }
    }

    fn apply(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        match self {
            Optimizer::Sgd => params.iter_mut().zip(grads).for_each(|(p, g)| *p -= lr * g),
            Optimizer::Adam { m, v, step } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                *step += 1;
                let c1 = 1.0 - B1.powi(*step);
                let c2 = 1.0 - B2.powi(*step);
                for i in 0..params.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * grads[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * grads[i] * grads[i];
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

fn learning_rate(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    let progress = if total <= 1 { 0.0 } else { step as f64 / (total - 1) as f64 };
    let floor = cfg.min_lr_ratio;
    cfg.learning_rate * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Parameters are kept at single precision so the stored checkpoint and the
/// in-memory model agree exactly.
fn round_to_f32(params: &mut [f64]) {
    params.iter_mut().for_each(|p| *p = *p as f32 as f64);
}

/// Trains on `clips` with a seed-deterministic train/validation split.
/// `on_epoch` sees every log entry as it is produced.
pub fn train(clips: &[SyntheticClip], cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if clips.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 clips".into()));
    }
    let flags = cfg.flags();
    let (train_idx, val_idx) = split_train_val(clips.len(), cfg.val_fraction, cfg.seed);
    let train_clips: Vec<&SyntheticClip> = train_idx.iter().map(|&i| &clips[i]).collect();
    let (motion_norm, ecs_norm) = fit_normalizers(&train_clips, flags, cfg.flip_probability > 0.0)?;

    let mut prepared = Vec::with_capacity(train_clips.len());
    for c in &train_clips {
        let plain = prepare_clip(c, flags, false, &motion_norm, &ecs_norm)?;
        let flipped =
            if cfg.flip_probability > 0.0 { Some(prepare_clip(c, flags, true, &motion_norm, &ecs_norm)?) } else { None };
        prepared.push((plain, flipped));
    }
    let val: Vec<PreparedClip> =
        val_idx.iter().map(|&i| prepare_clip(&clips[i], flags, false, &motion_norm, &ecs_norm)).collect::<Result<_>>()?;

    let dcfg = cfg.denoiser_config(ecs_norm.width());
    let mut denoiser = Denoiser::new(dcfg, split_seed(cfg.seed, 1))?;
    round_to_f32(denoiser.params_mut());
    let mut model = MotionModel {
        denoiser,
        schedule: NoiseSchedule::default(),
        motion_norm,
        ecs_norm,
        flags,
        group_weights: [1.0; NUM_GROUPS],
        seed: cfg.seed,
        epoch: 0,
    };
    let mut weights = LossWeightsState::new(cfg.weight_update_rate)?;
    let eval_set: &[PreparedClip] = if val.is_empty() { &[] } else { &val };
    let eval = |m: &MotionModel| -> Result<[f64; NUM_GROUPS]> {
        if eval_set.is_empty() {
            Ok([f64::NAN; NUM_GROUPS])
        } else {
            evaluate(m, eval_set, cfg.val_draws, cfg.seed)
        }
    };

    let start = Instant::now();
    let base = eval(&model)?;
    let mut log = vec![EpochMetrics {
        epoch: 0,
        train_loss: f64::NAN,
        train_parts: LossParts::default(),
        train_group_mse: [f64::NAN; NUM_GROUPS],
        val_group_mse: base,
        val_grouped_mse: base.iter().sum::<f64>() / NUM_GROUPS as f64,
        group_weights: weights.weights,
        seconds: start.elapsed().as_secs_f64(),
    }];
    on_epoch(&log[0]);

    let n = prepared.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let mut optimizer = Optimizer::new(cfg.optimizer, model.denoiser.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 2));
    let mut grads = vec![0.0; model.denoiser.num_params()];
    let steps_t = model.schedule.steps();
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut parts_acc = LossParts::default();
        let mut group_acc = [0.0; NUM_GROUPS];
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let flip = rng.gen_bool(cfg.flip_probability);
                let clip = match (&prepared[i], flip) {
                    ((_, Some(f)), true) => f,
                    ((p, _), _) => p,
                };
                let t = rng.gen_range(1..=steps_t);
                let eps = Array2::from_shape_simple_fn(clip.x0.dim(), || StandardNormal.sample(&mut rng));
                let x_t = model.schedule.q_sample(clip.x0.view(), t, eps.view())?;
                let (pred, cache) = model.denoiser.forward_cached(x_t.view(), clip.m_ref.view(), clip.ecs.view(), t)?;
                let (parts, mut dy) = clip_loss_with_grad(pred.view(), clip.x0.view(), clip.m_ref.view(), &weights.weights)?;
                if !parts.total().is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss at epoch {epoch}, step {step}, clip {}, t {t}: {parts:?}",
                        train_idx[i]
                    )));
                }
                let g = group_mse(pred.view(), clip.x0.view())?;
                for k in 0..NUM_GROUPS {
                    group_acc[k] += g[k] / n as f64;
                }
                parts_acc.denoise += parts.denoise / n as f64;
                parts_acc.temporal += parts.temporal / n as f64;
                parts_acc.initial += parts.initial / n as f64;
                dy.mapv_inplace(|v| v / batch.len() as f64);
                model.denoiser.backward(&cache, dy.view(), &mut grads)?;
            }
            if cfg.grad_clip > 0.0 {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.grad_clip {
                    let s = cfg.grad_clip / norm;
                    grads.iter_mut().for_each(|g| *g *= s);
                }
            }
            optimizer.apply(model.denoiser.params_mut(), &grads, learning_rate(cfg, step, total_steps));
            step += 1;
        }
        if cfg.adaptive_weights {
            weights = update_adaptive_weights(&group_acc, &weights)?;
        }
        let mut snapshot = model.clone();
        round_to_f32(snapshot.denoiser.params_mut());
        let val_mse = eval(&snapshot)?;
        let entry = EpochMetrics {
            epoch,
            train_loss: parts_acc.total(),
            train_parts: parts_acc,
            train_group_mse: group_acc,
            val_group_mse: val_mse,
            val_grouped_mse: val_mse.iter().sum::<f64>() / NUM_GROUPS as f64,
            group_weights: weights.weights,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    round_to_f32(model.denoiser.params_mut());
    model.group_weights = weights.weights;
    model.epoch = cfg.epochs;
    Ok(TrainOutcome { model, log, train_indices: train_idx, val_indices: val_idx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::synth_dataset;

    fn small_cfg() -> TrainConfig {
        TrainConfig { n_clips: 6, clip_len: 8, epochs: 2, batch_size: 2, hidden: 16, mlp_hidden: 16, val_draws: 1, ..Default::default() }
    }

    #[test]
    fn zero_epochs_is_the_baseline() {
        let cfg = TrainConfig { epochs: 0, ..small_cfg() };
        let clips = synth_dataset(cfg.seed, cfg.n_clips, cfg.clip_len).unwrap();
        let out = train(&clips, &cfg, |_| {}).unwrap();
        assert_eq!(out.log.len(), 1);
        let mut init = Denoiser::new(out.model.denoiser.config().to_owned(), split_seed(cfg.seed, 1)).unwrap();
        round_to_f32(init.params_mut());
        assert_eq!(out.model.denoiser, init);
        // zero head: prediction is the mean clip, so each group MSE is its normalized variance
        assert!(out.baseline().val_grouped_mse > 0.1);
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = small_cfg();
        let clips = synth_dataset(cfg.seed, cfg.n_clips, cfg.clip_len).unwrap();
        let a = train(&clips, &cfg, |_| {}).unwrap();
        let b = train(&clips, &cfg, |_| {}).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log.len(), 3);
        assert_ne!(a.model.denoiser, train(&clips, &TrainConfig { epochs: 0, ..cfg }, |_| {}).unwrap().model.denoiser);
    }

    #[test]
    fn flipped_view_matches_vector_flip() {
        let clips = synth_dataset(3, 1, 5).unwrap();
        let flags = ConditionFlags::default();
        let raw = raw_views(&clips[0], flags, true).unwrap();
        let back = hflip_vector(raw.target.row(2).as_slice().unwrap(), &SymmetryPairing::default()).unwrap();
        assert_eq!(back, clips[0].target.frames.row(2).to_vec());
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(matches!(TrainConfig { batch_size: 0, ..Default::default() }.validate(), Err(Error::Config(_))));
        assert!(matches!(TrainConfig { hidden: 7, ..Default::default() }.validate(), Err(Error::Config(_))));
    }
}
