use super::eye::EyeState;
use crate::error::{Error, Result};
use crate::motion::layout::{DELTA_DIMS, MOTION_DIMS};
use crate::motion::{CanonicalKeypoints, MotionVector, SymmetryPairing};
use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub const NUM_EMOTIONS: usize = 8;
pub const DEFAULT_FEATURE_DIM: usize = 32;

/// Audio features aligned to video frames (25 fps).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatureChunk {
    pub features: Array2<f64>,
    pub start_frame: u64,
}

impl AudioFeatureChunk {
    pub fn new(features: Array2<f64>, start_frame: u64) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidInput("audio feature chunk is empty".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("audio features contain non-finite values".into()));
        }
        Ok(Self { features, start_frame })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }
}

/// Clip-level emotion class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct EmotionLabel(usize);

impl EmotionLabel {
    pub fn new(index: usize) -> Result<Self> {
        if index >= NUM_EMOTIONS {
            return Err(Error::Range(format!("emotion index {index} >= {NUM_EMOTIONS}")));
        }
        Ok(Self(index))
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn one_hot(self) -> [f64; NUM_EMOTIONS] {
        let mut v = [0.0; NUM_EMOTIONS];
        v[self.0] = 1.0;
        v
    }
}

impl TryFrom<usize> for EmotionLabel {
    type Error = Error;
    fn try_from(i: usize) -> Result<Self> {
        Self::new(i)
    }
}

impl From<EmotionLabel> for usize {
    fn from(e: EmotionLabel) -> usize {
        e.0
    }
}

/// `C = {a, e, c_ref, s, m_ref}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    pub audio: AudioFeatureChunk,
    pub eyes: Vec<EyeState>,
    pub c_ref: CanonicalKeypoints,
    pub emotion: EmotionLabel,
    pub m_ref: MotionVector,
}

impl ConditionBundle {
    pub fn len(&self) -> usize {
        self.audio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.eyes.len() != self.audio.len() {
            return Err(Error::shape(format!("{} eye states", self.audio.len()), self.eyes.len()));
        }
        for e in &self.eyes {
            e.validate()?;
        }
        Ok(())
    }

    /// Mirror image of every condition except audio and emotion.
    pub fn mirrored(&self, m_ref: MotionVector) -> Result<Self> {
        let perm = SymmetryPairing::default().permutation()?;
        let mut c = self.c_ref;
        for (k, &src) in perm.iter().enumerate() {
            let p = self.c_ref.points[src];
            c.points[k] = [-p[0], p[1], p[2]];
        }
        Ok(Self {
            audio: self.audio.clone(),
            eyes: self.eyes.iter().map(EyeState::mirrored).collect(),
            c_ref: c,
            emotion: self.emotion,
            m_ref,
        })
    }

    /// Sub-window `[start, start + len)` of the per-frame conditions.
    pub fn window(&self, start: usize, len: usize, m_ref: MotionVector) -> Result<Self> {
        if start + len > self.len() || len == 0 {
            return Err(Error::Range(format!("window {start}+{len} outside bundle of length {}", self.len())));
        }
        Ok(Self {
            audio: AudioFeatureChunk {
                features: self.audio.features.slice(s![start..start + len, ..]).to_owned(),
                start_frame: self.audio.start_frame + start as u64,
            },
            eyes: self.eyes[start..start + len].to_vec(),
            c_ref: self.c_ref,
            emotion: self.emotion,
            m_ref,
        })
    }
}

/// Ablation switches for the identity and emotion conditions. Disabled
/// conditions are zero-filled so the ECS width never changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionFlags {
    pub use_ckp: bool,
    pub use_emotion: bool,
}

impl Default for ConditionFlags {
    fn default() -> Self {
        Self { use_ckp: true, use_emotion: true }
    }
}

/// Column layout of the ECS matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcsLayout {
    pub feature_dim: usize,
}

impl EcsLayout {
    pub fn width(&self) -> usize {
        self.feature_dim + EyeState::DIMS + DELTA_DIMS + NUM_EMOTIONS
    }
    pub fn audio(&self) -> std::ops::Range<usize> {
        0..self.feature_dim
    }
    pub fn eyes(&self) -> std::ops::Range<usize> {
        self.feature_dim..self.feature_dim + EyeState::DIMS
    }
    pub fn identity(&self) -> std::ops::Range<usize> {
        let s = self.feature_dim + EyeState::DIMS;
        s..s + DELTA_DIMS
    }
    pub fn emotion(&self) -> std::ops::Range<usize> {
        let s = self.feature_dim + EyeState::DIMS + DELTA_DIMS;
        s..s + NUM_EMOTIONS
    }
}

/// Per-frame `[a | e | c_ref | one-hot(s)]`, shape `L × (F + 6 + 63 + 8)`.
pub fn assemble_ecs(
    audio: &AudioFeatureChunk,
    eyes: &[EyeState],
    c_ref: &CanonicalKeypoints,
    emotion: EmotionLabel,
    len: usize,
    flags: ConditionFlags,
) -> Result<Array2<f64>> {
    if audio.len() != len {
        return Err(Error::shape(format!("{len} audio frames"), audio.len()));
    }
    if eyes.len() != len {
        return Err(Error::shape(format!("{len} eye states"), eyes.len()));
    }
    let layout = EcsLayout { feature_dim: audio.width() };
    let mut out = Array2::zeros((len, layout.width()));
    out.slice_mut(s![.., layout.audio()]).assign(&audio.features);
    let identity = c_ref.flatten();
    let onehot = emotion.one_hot();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        for (j, v) in eyes[i].to_array().iter().enumerate() {
            row[layout.eyes().start + j] = *v;
        }
        if flags.use_ckp {
            for (j, v) in identity.iter().enumerate() {
                row[layout.identity().start + j] = *v;
            }
        }
        if flags.use_emotion {
            for (j, v) in onehot.iter().enumerate() {
                row[layout.emotion().start + j] = *v;
            }
        }
    }
    Ok(out)
}

pub fn assemble_bundle_ecs(bundle: &ConditionBundle, flags: ConditionFlags) -> Result<Array2<f64>> {
    assemble_ecs(&bundle.audio, &bundle.eyes, &bundle.c_ref, bundle.emotion, bundle.len(), flags)
}

/// Rows `[noise_row | m_ref]`, shape `L × 530`.
pub fn assemble_ics(m_ref: &[f64], noise: ArrayView2<f64>) -> Result<Array2<f64>> {
    if m_ref.len() != MOTION_DIMS {
        return Err(Error::shape(format!("{MOTION_DIMS}-D m_ref"), m_ref.len()));
    }
    if noise.ncols() != MOTION_DIMS {
        return Err(Error::shape(format!("{MOTION_DIMS} noise columns"), noise.ncols()));
    }
    let mut out = Array2::zeros((noise.nrows(), 2 * MOTION_DIMS));
    out.slice_mut(s![.., ..MOTION_DIMS]).assign(&noise);
    for mut row in out.rows_mut() {
        for (j, v) in m_ref.iter().enumerate() {
            row[MOTION_DIMS + j] = *v;
        }
    }
    Ok(out)
}
