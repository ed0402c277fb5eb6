//! Deterministic synthetic audio-to-motion corpus for desk-scale training.
//!
//! Every clip is regenerated bit-exactly from its seed. The generative
//! process is simple enough that each target dimension has a known driver:
//!
//! * lip, jaw and chin deformation follow a fixed linear map of the audio
//!   envelope (scaled by the identity's mouth width),
//! * eyelid deformation follows eye aspect, eyelid x follows gaze,
//! * the emotion label adds a mirror-symmetric per-class prototype to δ,
//! * head pose is a per-clip base plus a slow drift and an audio-driven nod.
//!
//! The first generated frame precedes the target window and becomes `m_ref`.

use super::bundle::{AudioFeatureChunk, ConditionBundle, EmotionLabel, NUM_EMOTIONS};
use super::eye::EyeState;
use crate::error::{Error, Result};
use crate::motion::layout::{delta_dim, DELTA_DIMS, MOTION_DIMS};
use crate::motion::{default_template, pack_motion, CanonicalKeypoints, Euler, MotionClip, MotionFrame, SymmetryPairing};
use crate::streaming::features::{ExtractorConfig, FeatureExtractor, HOP, SAMPLE_RATE};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Mouth-open dimension (lower lip, y axis).
pub const MOUTH_OPEN_DIM: usize = delta_dim(19, 1);
/// Right upper eyelid, x and y.
pub const RIGHT_EYE_DIMS: [usize; 2] = [delta_dim(11, 0), delta_dim(11, 1)];
pub const LEFT_EYE_DIMS: [usize; 2] = [delta_dim(10, 0), delta_dim(10, 1)];

/// Envelope-driven deformation: `(dim, gain per unit envelope)`.
const LIP_MAP: [(usize, f64); 8] = [
    (delta_dim(19, 1), 0.08),
    (delta_dim(19, 2), -0.01),
    (delta_dim(16, 1), -0.015),
    (delta_dim(3, 1), 0.05),
    (delta_dim(17, 1), 0.025),
    (delta_dim(18, 1), 0.025),
    (delta_dim(14, 0), 0.012),
    (delta_dim(15, 0), -0.012),
];

const OPEN_ASPECT: f64 = 0.3;
const EMOTION_ONSET_FRAMES: f64 = 12.0;
const LID_GAIN: f64 = 0.12;
const GAZE_GAIN: f64 = 0.015;

/// SplitMix64 stream splitting: an independent seed per clip index.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Probability that a clip contains no speech at all.
    pub silent_probability: f64,
    pub identity_jitter: f64,
    pub pose_drift_deg: f64,
    pub nod_deg: f64,
    pub blink_rate_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { silent_probability: 0.05, identity_jitter: 0.02, pose_drift_deg: 0.8, nod_deg: 3.0, blink_rate_hz: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub bundle: ConditionBundle,
    pub target: MotionClip,
    /// Frame-level audio envelope of the target window.
    pub envelope: Vec<f64>,
    /// 16 kHz audio of the target window.
    pub pcm: Vec<f32>,
    pub seed: u64,
}

/// Mirror-symmetric δ offset of each emotion class.
pub fn emotion_prototypes() -> &'static [[f64; DELTA_DIMS]; NUM_EMOTIONS] {
    static PROTOS: OnceLock<[[f64; DELTA_DIMS]; NUM_EMOTIONS]> = OnceLock::new();
    PROTOS.get_or_init(|| {
        let pairing = SymmetryPairing::default();
        // (keypoint, axis) candidates on the left half or midline
        let candidates: [(usize, usize); 14] =
            [(6, 1), (8, 1), (8, 0), (4, 1), (4, 2), (14, 2), (14, 1), (4, 0), (16, 2), (2, 1), (0, 2), (6, 0), (3, 2), (1, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(0xE307_1011);
        let mut out = [[0.0; DELTA_DIMS]; NUM_EMOTIONS];
        for (class, proto) in out.iter_mut().enumerate() {
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            for (rank, &ci) in order.iter().take(4).enumerate() {
                let (kp, axis) = candidates[ci];
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let mag = 0.045 - 0.008 * rank as f64 + 0.002 * (class % 3) as f64;
                let v = sign * mag;
                proto[delta_dim(kp, axis)] = v;
                let partner = pairing.pairs.iter().find_map(|&(a, b)| (a == kp).then_some(b));
                if let Some(p) = partner {
                    proto[delta_dim(p, axis)] = if axis == 0 { -v } else { v };
                } else if axis == 0 {
                    // midline x must stay zero to remain mirror-symmetric
                    proto[delta_dim(kp, axis)] = 0.0;
                }
            }
        }
        out
    })
}

/// Raised-cosine syllable envelope sampled at `rate` Hz.
fn syllable_envelope(rng: &mut ChaCha8Rng, samples: usize, silent: bool) -> Vec<f64> {
    let mut env = vec![0.0; samples];
    if silent {
        return env;
    }
    let sr = SAMPLE_RATE as f64;
    let mut t = rng.gen_range(0.0..0.2);
    let total = samples as f64 / sr;
    while t < total {
        let dur = rng.gen_range(0.12..0.3);
        let amp = rng.gen_range(0.4..1.0);
        let start = (t * sr) as usize;
        let len = (dur * sr) as usize;
        for i in 0..len {
            if let Some(e) = env.get_mut(start + i) {
                let phase = i as f64 / len as f64;
                *e += amp * 0.5 * (1.0 - (2.0 * PI * phase).cos());
            }
        }
        t += dur + if rng.gen_bool(0.15) { rng.gen_range(0.3..0.8) } else { rng.gen_range(0.02..0.12) };
    }
    env.iter_mut().for_each(|e| *e = e.min(1.0));
    env
}

fn carrier(rng: &mut ChaCha8Rng, samples: usize) -> Vec<f32> {
    let f0 = rng.gen_range(100.0..220.0);
    let sr = SAMPLE_RATE as f64;
    let mut lp = 0.0;
    (0..samples)
        .map(|i| {
            let t = i as f64 / sr;
            lp += 0.3 * (rng.gen_range(-1.0..1.0) - lp);
            let voiced: f64 = (1..=4).map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64).sum();
            (0.6 * lp + 0.25 * voiced) as f32
        })
        .collect()
}

fn blink_track(rng: &mut ChaCha8Rng, frames: usize, rate_hz: f64, open: f64) -> Vec<f64> {
    const PROFILE: [f64; 5] = [0.6, 0.15, 0.05, 0.25, 0.7];
    let mut aspect = vec![open; frames];
    let p = rate_hz / 25.0;
    let mut f = 0;
    while f < frames {
        if rng.gen_bool(p.min(1.0)) {
            for (i, k) in PROFILE.iter().enumerate() {
                if let Some(a) = aspect.get_mut(f + i) {
                    *a = open * k;
                }
            }
            f += PROFILE.len() + 5;
        } else {
            f += 1;
        }
    }
    aspect
}

/// Syllable-modulated voiced noise with the same statistics as the audio of
/// [`synth_clip`], never silent.
pub fn synth_speech(seed: u64, samples: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = syllable_envelope(&mut rng, samples, false);
    carrier(&mut rng, samples).iter().zip(&env).map(|(c, e)| 0.3 * *e as f32 * c).collect()
}

/// Generates one clip of `len` target frames (plus the preceding `m_ref` frame).
pub fn synth_clip(seed: u64, len: usize, cfg: &SynthConfig) -> Result<SyntheticClip> {
    if len == 0 {
        return Err(Error::InvalidInput("clip length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = len + 1;
    let samples = frames * HOP;

    // identity
    let template = default_template();
    let mut c_ref = template;
    for v in c_ref.points.iter_mut().flatten() {
        *v += rng.gen_range(-cfg.identity_jitter..cfg.identity_jitter);
    }
    let mouth_scale = (c_ref.points[15][0] - c_ref.points[14][0]) / (template.points[15][0] - template.points[14][0]);
    let emotion = EmotionLabel::new(rng.gen_range(0..NUM_EMOTIONS))?;
    let intensity = rng.gen_range(0.7..1.3);
    // expression builds up from a per-clip onset level
    let onset = rng.gen_range(0.0..1.0);

    // audio
    let silent = rng.gen_bool(cfg.silent_probability);
    let env_samples = syllable_envelope(&mut rng, samples, silent);
    let carrier = carrier(&mut rng, samples);
    let pcm: Vec<f32> = carrier.iter().zip(&env_samples).map(|(c, e)| 0.3 * *e as f32 * c).collect();
    let extractor = feature_extractor();
    let features = extractor.extract_full(&pcm, SAMPLE_RATE)?;
    // frame envelope = mean envelope over each analysis window
    let lookback = extractor.config().window - HOP;
    let envelope: Vec<f64> = (0..frames)
        .map(|n| {
            let lo = (n * HOP).saturating_sub(lookback);
            let hi = (n + 1) * HOP;
            env_samples[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut smooth = Vec::with_capacity(frames);
    let mut acc = envelope[0];
    for &e in &envelope {
        acc += 0.3 * (e - acc);
        smooth.push(acc);
    }

    // eyes
    let open = rng.gen_range(0.25..0.35);
    let aspect = blink_track(&mut rng, frames, cfg.blink_rate_hz, open);
    let mut gaze: f64 = rng.gen_range(-0.3..0.3);
    let gaze_y = rng.gen_range(-0.1..0.1);
    let eyes: Vec<EyeState> = aspect
        .iter()
        .map(|&a| {
            gaze = (gaze + rng.gen_range(-0.03..0.03)).clamp(-0.6, 0.6);
            EyeState { aspect_left: a, aspect_right: a, pupil_left: [gaze, gaze_y], pupil_right: [gaze, gaze_y] }
        })
        .collect();

    // pose
    let base = [rng.gen_range(-25.0..25.0), rng.gen_range(-12.0..12.0), rng.gen_range(-8.0..8.0)];
    let drift: Vec<(f64, f64)> = (0..3).map(|_| (rng.gen_range(0.1..0.3), rng.gen_range(0.0..2.0 * PI))).collect();
    let base_t = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.02..0.02)];
    let t_phase = rng.gen_range(0.0..2.0 * PI);
    let scale = rng.gen_range(0.95..1.05);

    let proto = &emotion_prototypes()[emotion.index()];
    let mut packed = Array2::zeros((frames, MOTION_DIMS));
    for f in 0..frames {
        let time = f as f64 / 25.0;
        let mut delta = [0.0; DELTA_DIMS];
        let level = 1.0 - (1.0 - onset) * (-(f as f64) / EMOTION_ONSET_FRAMES).exp();
        for (d, p) in delta.iter_mut().zip(proto) {
            *d = intensity * level * p;
        }
        for &(dim, gain) in &LIP_MAP {
            delta[dim] += gain * mouth_scale * envelope[f];
        }
        let e = &eyes[f];
        delta[LEFT_EYE_DIMS[1]] += LID_GAIN * (OPEN_ASPECT - e.aspect_left);
        delta[RIGHT_EYE_DIMS[1]] += LID_GAIN * (OPEN_ASPECT - e.aspect_right);
        delta[delta_dim(12, 1)] -= 0.25 * LID_GAIN * (OPEN_ASPECT - e.aspect_left);
        delta[delta_dim(13, 1)] -= 0.25 * LID_GAIN * (OPEN_ASPECT - e.aspect_right);
        delta[LEFT_EYE_DIMS[0]] += GAZE_GAIN * e.pupil_left[0];
        delta[RIGHT_EYE_DIMS[0]] += GAZE_GAIN * e.pupil_right[0];

        let wobble = |axis: usize| cfg.pose_drift_deg * (2.0 * PI * drift[axis].0 * time + drift[axis].1).sin();
        let euler = Euler::new(base[0] + wobble(0), base[1] + wobble(1) + cfg.nod_deg * smooth[f], base[2] + wobble(2));
        let bob = 0.003 * (2.0 * PI * 0.2 * time + t_phase).sin();
        let translation = [base_t[0] + bob, base_t[1] + 0.004 * smooth[f], base_t[2]];
        let mut frame = MotionFrame { euler, translation, scale, ..Default::default() };
        frame.set_delta_flat(&delta);
        let v = pack_motion(&frame)?;
        packed.row_mut(f).assign(&ndarray::ArrayView1::from(v.as_slice()));
    }

    let m_ref = crate::motion::MotionVector::from_slice(packed.row(0).as_slice().expect("row is contiguous"))?;
    let bundle = ConditionBundle {
        audio: AudioFeatureChunk::new(features.slice(s![1..frames, ..]).to_owned(), 1)?,
        eyes: eyes[1..].to_vec(),
        c_ref: CanonicalKeypoints::new(c_ref.points)?,
        emotion,
        m_ref,
    };
    Ok(SyntheticClip {
        bundle,
        target: MotionClip::new(packed.slice(s![1..frames, ..]).to_owned())?,
        envelope: envelope[1..].to_vec(),
        pcm: pcm[HOP..].to_vec(),
        seed,
    })
}

fn feature_extractor() -> &'static FeatureExtractor {
    static FX: OnceLock<FeatureExtractor> = OnceLock::new();
    FX.get_or_init(|| FeatureExtractor::new(ExtractorConfig::default()).expect("default extractor config is valid"))
}

/// `n_clips` clips of length `len`, clip `i` seeded with `split_seed(seed, i)`.
pub fn synth_dataset(seed: u64, n_clips: usize, len: usize) -> Result<Vec<SyntheticClip>> {
    synth_dataset_with(seed, n_clips, len, &SynthConfig::default())
}

pub fn synth_dataset_with(seed: u64, n_clips: usize, len: usize, cfg: &SynthConfig) -> Result<Vec<SyntheticClip>> {
    if n_clips == 0 {
        return Err(Error::InvalidInput("n_clips must be at least 1".into()));
    }
    (0..n_clips as u64).map(|i| synth_clip(split_seed(seed, i), len, cfg)).collect()
}

/// Seed-deterministic disjoint split; returns `(train, validation)` indices.
pub fn split_train_val(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, u64::MAX));
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
    let val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::unpack_motion;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synth_dataset(7, 3, 20).unwrap();
        let b = synth_dataset(7, 3, 20).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].target, a[1].target);
    }

    #[test]
    fn silent_clip_has_quiet_lips() {
        let cfg = SynthConfig { silent_probability: 1.0, ..Default::default() };
        let clip = synth_clip(3, 40, &cfg).unwrap();
        assert!(clip.envelope.iter().all(|&e| e == 0.0));
        assert!(clip.bundle.audio.features.iter().all(|&v| v == 0.0));
        for f in 0..clip.target.len() {
            for &(dim, _) in &LIP_MAP {
                assert_eq!(clip.target.frames[[f, dim]], 0.0);
            }
        }
    }

    #[test]
    fn mouth_open_tracks_envelope() {
        let clip = synth_clip(split_seed(11, 0), 80, &SynthConfig { silent_probability: 0.0, ..Default::default() }).unwrap();
        let dim58: Vec<f64> = (0..80).map(|f| clip.target.frames[[f, MOUTH_OPEN_DIM]]).collect();
        assert!(corr(&clip.envelope, &dim58) > 0.9);
    }

    #[test]
    fn m_ref_is_preceding_frame_and_frames_are_valid() {
        let clip = synth_clip(5, 16, &SynthConfig::default()).unwrap();
        let m_ref = unpack_motion(clip.bundle.m_ref.as_slice()).unwrap();
        let first = unpack_motion(clip.target.frames.row(0).as_slice().unwrap()).unwrap();
        assert!((m_ref.euler.yaw - first.euler.yaw).abs() < 1.0);
        assert_eq!(clip.bundle.len(), 16);
        clip.bundle.validate().unwrap();
    }

    #[test]
    fn prototypes_are_mirror_symmetric_and_distinct() {
        let pairing = SymmetryPairing::default();
        for proto in emotion_prototypes() {
            let mut m = MotionFrame::default();
            m.set_delta_flat(proto);
            let flipped = crate::motion::hflip_motion(&m, &pairing).unwrap();
            assert_eq!(flipped.delta_flat(), *proto);
            // emotion never touches the audio-driven dims
            for &(dim, _) in &LIP_MAP {
                assert_eq!(proto[dim], 0.0);
            }
        }
        assert_ne!(emotion_prototypes()[0], emotion_prototypes()[1]);
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let (t, v) = split_train_val(200, 0.2, 9);
        assert_eq!(v.len(), 40);
        assert_eq!(t.len(), 160);
        assert!(t.iter().all(|i| !v.contains(i)));
        assert_eq!(split_train_val(200, 0.2, 9), (t, v));
    }
}
