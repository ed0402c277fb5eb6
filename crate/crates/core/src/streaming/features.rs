//! Chunked causal audio features.
//!
//! A log-mel filterbank at 25 fps feeds a causal windowed self-similarity
//! smoother. The smoother only looks back `context_frames` rows, and the
//! extractor state caches exactly that many rows, so processing audio in
//! 0.4 s units reproduces one-shot processing of the whole signal. The cache
//! starts out filled with rows computed from a fixed built-in corpus.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::VecDeque;
use std::sync::{Arc, OnceLock};

pub const SAMPLE_RATE: u32 = 16_000;
pub const FPS: f64 = 25.0;
/// Samples per feature frame (40 ms).
pub const HOP: usize = 640;
/// Samples per 0.4 s streaming unit.
pub const UNIT_SAMPLES: usize = 6_400;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorConfig {
    pub sample_rate: u32,
    pub feature_dim: usize,
    pub window: usize,
    /// Cached pseudo-context rows; also the smoother's look-back.
    pub context_frames: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Similarity temperature of the smoother.
    pub temperature: f64,
    pub gain: f64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            feature_dim: 32,
            window: 1024,
            context_frames: 50,
            fmin: 80.0,
            fmax: 7600.0,
            temperature: 4.0,
            gain: 0.5,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::Config(format!("sample rate must be {SAMPLE_RATE} Hz, got {}", self.sample_rate)));
        }
        if self.window < HOP || !self.window.is_power_of_two() {
            return Err(Error::Config(format!("window {} must be a power of two >= {HOP}", self.window)));
        }
        if self.feature_dim == 0 || self.context_frames == 0 {
            return Err(Error::Config("feature_dim and context_frames must be positive".into()));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return Err(Error::Config("filterbank range must satisfy 0 <= fmin < fmax <= nyquist".into()));
        }
        Ok(())
    }
}

/// Streaming state carried between chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractorState {
    /// Last `context_frames` filterbank rows (pseudo-context prefix).
    pub context_cache: VecDeque<Vec<f64>>,
    /// Look-back samples plus any samples not yet forming a full frame.
    pub sample_remainder: Vec<f32>,
    pub total_frames_emitted: u64,
}

struct Filterbank {
    fft: Arc<dyn Fft<f64>>,
    hann: Vec<f64>,
    /// Per band: (first fft bin, weights).
    bands: Vec<(usize, Vec<f64>)>,
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl Filterbank {
    fn new(cfg: &ExtractorConfig) -> Self {
        let n = cfg.window;
        let fft = FftPlanner::new().plan_fft_forward(n);
        let hann = (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
        let bins = n / 2 + 1;
        let bin_hz = cfg.sample_rate as f64 / n as f64;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.feature_dim + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.feature_dim + 1) as f64))
            .collect();
        let bands = (0..cfg.feature_dim)
            .map(|b| {
                let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
                let first = ((l / bin_hz).floor() as usize).min(bins - 1);
                let last = ((r / bin_hz).ceil() as usize).min(bins - 1);
                let weights: Vec<f64> = (first..=last)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= l || f >= r {
                            0.0
                        } else if f <= c {
                            (f - l) / (c - l)
                        } else {
                            (r - f) / (r - c)
                        }
                    })
                    .collect();
                let norm: f64 = weights.iter().sum::<f64>().max(1e-12);
                (first, weights.into_iter().map(|w| w / norm).collect())
            })
            .collect();
        Self { fft, hann, bands }
    }

    /// Log-compressed band energies of one analysis window.
    fn row(&self, window: &[f32], gain: f64) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> =
            window.iter().zip(&self.hann).map(|(&s, &w)| Complex::new(s as f64 * w, 0.0)).collect();
        self.fft.process(&mut buf);
        let n = buf.len() as f64;
        self.bands
            .iter()
            .map(|(first, weights)| {
                let power: f64 = weights.iter().enumerate().map(|(i, w)| w * buf[first + i].norm_sqr()).sum::<f64>() / n;
                (1.0 + gain * power).ln()
            })
            .collect()
    }
}

/// Deterministic speech-like signal used to seed the context cache.
fn corpus_signal(samples: usize) -> Vec<f32> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut lp = 0.0f64;
    let mut prev = 0.0f64;
    (0..samples)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let env = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * 3.7 * t).sin();
            let white: f64 = rng.gen_range(-1.0..1.0);
            lp += 0.25 * (white - lp);
            let hp = lp - prev;
            prev = lp;
            (0.3 * env * (lp + 0.8 * hp) + 0.05 * env * (2.0 * std::f64::consts::PI * 180.0 * t).sin()) as f32
        })
        .collect()
}

pub struct FeatureExtractor {
    cfg: ExtractorConfig,
    bank: Filterbank,
    initial_context: Vec<Vec<f64>>,
    state: FeatureExtractorState,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor").field("cfg", &self.cfg).field("state", &self.state).finish()
    }
}

fn default_context() -> &'static Vec<Vec<f64>> {
    static CONTEXT: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    CONTEXT.get_or_init(|| build_context(&ExtractorConfig::default()))
}

fn build_context(cfg: &ExtractorConfig) -> Vec<Vec<f64>> {
    let bank = Filterbank::new(cfg);
    let lookback = cfg.window - HOP;
    let signal = corpus_signal(lookback + cfg.context_frames * HOP);
    (0..cfg.context_frames).map(|i| bank.row(&signal[i * HOP..i * HOP + cfg.window], cfg.gain)).collect()
}

impl FeatureExtractor {
    pub fn new(cfg: ExtractorConfig) -> Result<Self> {
        cfg.validate()?;
        let bank = Filterbank::new(&cfg);
        let initial_context = if cfg == ExtractorConfig::default() { default_context().clone() } else { build_context(&cfg) };
        let state = Self::fresh_state(&cfg, &initial_context);
        Ok(Self { cfg, bank, initial_context, state })
    }

    fn fresh_state(cfg: &ExtractorConfig, context: &[Vec<f64>]) -> FeatureExtractorState {
        FeatureExtractorState {
            context_cache: context.iter().cloned().collect(),
            sample_remainder: vec![0.0; cfg.window - HOP],
            total_frames_emitted: 0,
        }
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.cfg
    }

    pub fn state(&self) -> &FeatureExtractorState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = Self::fresh_state(&self.cfg, &self.initial_context);
    }

    /// The built-in pseudo-context rows.
    pub fn initial_context(&self) -> &[Vec<f64>] {
        &self.initial_context
    }

    /// Feeds PCM samples (any length) and returns every completed frame.
    pub fn push(&mut self, pcm: &[f32], sample_rate: u32) -> Result<Array2<f64>> {
        if sample_rate != self.cfg.sample_rate {
            return Err(Error::Config(format!("expected {} Hz audio, got {sample_rate} Hz", self.cfg.sample_rate)));
        }
        let (rows, next) = extract_features_chunk(&self.bank, &self.cfg, &self.state, pcm)?;
        self.state = next;
        Ok(rows)
    }

    /// Zero-pads a trailing partial frame, if any, and emits it.
    pub fn flush(&mut self) -> Result<Array2<f64>> {
        let lookback = self.cfg.window - HOP;
        let pending = self.state.sample_remainder.len() - lookback;
        if pending == 0 {
            return Ok(Array2::zeros((0, self.cfg.feature_dim)));
        }
        let pad = vec![0.0f32; HOP - pending];
        self.push(&pad, self.cfg.sample_rate)
    }

    /// One-shot processing of a whole signal: every filterbank row is
    /// computed first, then the smoother runs over `[corpus prefix | rows]`.
    pub fn extract_full(&self, signal: &[f32], sample_rate: u32) -> Result<Array2<f64>> {
        if sample_rate != self.cfg.sample_rate {
            return Err(Error::Config(format!("expected {} Hz audio, got {sample_rate} Hz", self.cfg.sample_rate)));
        }
        let lookback = self.cfg.window - HOP;
        let frames = signal.len().div_ceil(HOP);
        let mut padded = vec![0.0f32; lookback + frames * HOP];
        padded[lookback..lookback + signal.len()].copy_from_slice(signal);
        let mut seq: Vec<Vec<f64>> = self.initial_context.clone();
        for n in 0..frames {
            seq.push(self.bank.row(&padded[n * HOP..n * HOP + self.cfg.window], self.cfg.gain));
        }
        let p = self.initial_context.len();
        let mut out = Array2::zeros((frames, self.cfg.feature_dim));
        for n in 0..frames {
            let pos = p + n;
            let smoothed = smooth_row(&seq[pos + 1 - self.cfg.context_frames.min(pos + 1)..=pos], self.cfg.temperature);
            out.row_mut(n).assign(&ArrayView1::from(&smoothed));
        }
        Ok(out)
    }
}

/// Smooths the last row of `window` against every row of `window`.
///
/// `out = x ⊙ (1 + 0.5·tanh(ctx − x))` where `ctx` is a softmax-weighted
/// average of the window by negative squared distance. Silent rows stay zero.
fn smooth_row(window: &[Vec<f64>], temperature: f64) -> Vec<f64> {
    let x = window.last().expect("window contains the current row");
    let scores: Vec<f64> = window
        .iter()
        .map(|r| -r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / temperature)
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut ctx = vec![0.0; x.len()];
    for (w, r) in weights.iter().zip(window) {
        for (c, v) in ctx.iter_mut().zip(r) {
            *c += w / z * v;
        }
    }
    x.iter().zip(&ctx).map(|(&xi, &ci)| xi * (1.0 + 0.5 * (ci - xi).tanh())).collect()
}

fn extract_features_chunk(
    bank: &Filterbank,
    cfg: &ExtractorConfig,
    state: &FeatureExtractorState,
    pcm: &[f32],
) -> Result<(Array2<f64>, FeatureExtractorState)> {
    if pcm.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("pcm contains non-finite samples".into()));
    }
    let mut next = state.clone();
    next.sample_remainder.extend_from_slice(pcm);
    let lookback = cfg.window - HOP;
    let frames = (next.sample_remainder.len() - lookback) / HOP;
    let mut out = Array2::zeros((frames, cfg.feature_dim));
    // the smoother needs the cache plus the rows of this chunk
    let mut window: Vec<Vec<f64>> = next.context_cache.iter().cloned().collect();
    for n in 0..frames {
        let row = bank.row(&next.sample_remainder[n * HOP..n * HOP + cfg.window], cfg.gain);
        window.push(row);
        let lo = window.len() - cfg.context_frames.min(window.len());
        let smoothed = smooth_row(&window[lo..], cfg.temperature);
        out.row_mut(n).assign(&ArrayView1::from(&smoothed));
    }
    next.sample_remainder.drain(..frames * HOP);
    let keep = cfg.context_frames;
    let start = window.len().saturating_sub(keep);
    next.context_cache = window.drain(start..).collect();
    next.total_frames_emitted += frames as u64;
    Ok((out, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn speechy(seconds: f64, seed: u64) -> Vec<f32> {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let t = i as f64 / SAMPLE_RATE as f64;
                let env = (0.5 + 0.5 * (2.0 * std::f64::consts::PI * 4.0 * t).sin()).powi(2);
                (env * rng.gen_range(-0.3..0.3)) as f32
            })
            .collect()
    }

    #[test]
    fn silence_gives_zero_rows() {
        let mut fx = FeatureExtractor::new(ExtractorConfig::default()).unwrap();
        let rows = fx.push(&vec![0.0; UNIT_SAMPLES], SAMPLE_RATE).unwrap();
        assert_eq!(rows.dim(), (10, 32));
        assert!(rows.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_given_state() {
        let sig = speechy(0.4, 1);
        let mut a = FeatureExtractor::new(ExtractorConfig::default()).unwrap();
        let mut b = FeatureExtractor::new(ExtractorConfig::default()).unwrap();
        assert_eq!(a.push(&sig, SAMPLE_RATE).unwrap(), b.push(&sig, SAMPLE_RATE).unwrap());
        assert_eq!(a.state(), b.state());
        assert_eq!(a.state().context_cache.len(), 50);
    }

    #[test]
    fn rejects_wrong_sample_rate() {
        let mut fx = FeatureExtractor::new(ExtractorConfig::default()).unwrap();
        assert!(matches!(fx.push(&[0.0; 10], 8_000), Err(Error::Config(_))));
        let cfg = ExtractorConfig { sample_rate: 22_050, ..Default::default() };
        assert!(matches!(FeatureExtractor::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn chunked_equals_full_for_odd_chunk_sizes() {
        let sig = speechy(3.0, 2);
        let mut fx = FeatureExtractor::new(ExtractorConfig::default()).unwrap();
        let full = fx.extract_full(&sig, SAMPLE_RATE).unwrap();
        let mut rows = Vec::new();
        for chunk in sig.chunks(997) {
            rows.push(fx.push(chunk, SAMPLE_RATE).unwrap());
        }
        rows.push(fx.flush().unwrap());
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        let chunked = ndarray::concatenate(ndarray::Axis(0), &views).unwrap();
        assert_eq!(chunked.dim(), full.dim());
        let max = (&chunked - &full).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-9, "max diff {max}");
    }

    #[test]
    fn flush_only_pads_partial_frames() {
        let mut fx = FeatureExtractor::new(ExtractorConfig::default()).unwrap();
        fx.push(&vec![0.1; HOP * 2], SAMPLE_RATE).unwrap();
        assert_eq!(fx.flush().unwrap().nrows(), 0);
        fx.push(&vec![0.1; 10], SAMPLE_RATE).unwrap();
        assert_eq!(fx.flush().unwrap().nrows(), 1);
        assert_eq!(fx.state().total_frames_emitted, 3);
    }
}
