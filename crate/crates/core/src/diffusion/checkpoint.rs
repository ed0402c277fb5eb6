//! Checkpoint directory: `manifest.json` plus `params.bin` (little-endian f32).

use super::engine::MotionModel;
use super::model::{Denoiser, DenoiserConfig};
use super::normalize::Normalizer;
use super::schedule::{NoiseSchedule, BETA_END, BETA_START};
use crate::conditioning::ConditionFlags;
use crate::error::{Error, Result};
use crate::motion::layout::{LAYOUT_ID, MOTION_DIMS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub arch: DenoiserConfig,
    pub dims: usize,
    pub layout_id: String,
    pub seed: u64,
    pub epoch: usize,
    pub group_weights: [f64; 3],
    pub flags: ConditionFlags,
    pub schedule: ScheduleSpec,
    pub motion_normalizer: Normalizer,
    pub condition_normalizer: Normalizer,
    pub param_count: usize,
    pub blob_bytes: usize,
    pub blob_sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode_params(params: &[f64]) -> Vec<u8> {
    params.iter().flat_map(|p| (*p as f32).to_le_bytes()).collect()
}

pub fn save_checkpoint(model: &MotionModel, dir: &Path) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let blob = encode_params(model.denoiser.params());
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        arch: *model.denoiser.config(),
        dims: MOTION_DIMS,
        layout_id: LAYOUT_ID.to_string(),
        seed: model.seed,
        epoch: model.epoch,
        group_weights: model.group_weights,
        flags: model.flags,
        schedule: ScheduleSpec { steps: model.schedule.steps(), beta_start: BETA_START, beta_end: BETA_END },
        motion_normalizer: model.motion_norm.clone(),
        condition_normalizer: model.ecs_norm.clone(),
        param_count: model.denoiser.num_params(),
        blob_bytes: blob.len(),
        blob_sha256: hex(&Sha256::digest(&blob)),
    };
    fs::write(dir.join(PARAMS_FILE), &blob)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<MotionModel> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(Error::Checkpoint(format!("no checkpoint manifest at {}", manifest_path.display())));
    }
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(&manifest_path)?)
        .map_err(|e| Error::Checkpoint(format!("unreadable manifest: {e}")))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", manifest.format_version)));
    }
    if manifest.dims != MOTION_DIMS || manifest.layout_id != LAYOUT_ID {
        return Err(Error::Checkpoint(format!("checkpoint layout {} / {} does not match {LAYOUT_ID}", manifest.layout_id, manifest.dims)));
    }
    let blob = fs::read(dir.join(PARAMS_FILE))?;
    if blob.len() != manifest.blob_bytes || blob.len() != manifest.param_count * 4 {
        return Err(Error::Checkpoint(format!(
            "parameter blob is {} bytes, manifest expects {} ({} params)",
            blob.len(),
            manifest.blob_bytes,
            manifest.param_count
        )));
    }
    let digest = hex(&Sha256::digest(&blob));
    if digest != manifest.blob_sha256 {
        return Err(Error::Checkpoint("parameter blob hash does not match manifest".into()));
    }
    let params: Vec<f64> =
        blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let s = &manifest.schedule;
    Ok(MotionModel {
        denoiser: Denoiser::from_params(manifest.arch, params)?,
        schedule: NoiseSchedule::linear(s.steps, s.beta_start, s.beta_end)?,
        motion_norm: manifest.motion_normalizer,
        ecs_norm: manifest.condition_normalizer,
        flags: manifest.flags,
        group_weights: manifest.group_weights,
        seed: manifest.seed,
        epoch: manifest.epoch,
    })
}

/// Untrained model with identity normalizers, handy for plumbing and tests.
pub fn untrained_model(arch: DenoiserConfig, seed: u64) -> Result<MotionModel> {
    let mut denoiser = Denoiser::with_random_head(arch, seed)?;
    denoiser.params_mut().iter_mut().for_each(|p| *p = *p as f32 as f64);
    Ok(MotionModel {
        denoiser,
        schedule: NoiseSchedule::default(),
        motion_norm: Normalizer::identity(MOTION_DIMS),
        ecs_norm: Normalizer::identity(arch.ecs_width),
        flags: ConditionFlags::default(),
        group_weights: [1.0; 3],
        seed,
        epoch: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let model = untrained_model(DenoiserConfig::tiny(), 5).unwrap();
        let m = save_checkpoint(&model, dir.path()).unwrap();
        assert_eq!(m.blob_bytes, model.denoiser.num_params() * 4);
        assert_eq!(load_checkpoint(dir.path()).unwrap(), model);
        // identical models give identical bytes
        let dir2 = tempfile::tempdir().unwrap();
        save_checkpoint(&model, dir2.path()).unwrap();
        assert_eq!(fs::read(dir.path().join(PARAMS_FILE)).unwrap(), fs::read(dir2.path().join(PARAMS_FILE)).unwrap());
        assert_eq!(fs::read(dir.path().join(MANIFEST_FILE)).unwrap(), fs::read(dir2.path().join(MANIFEST_FILE)).unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let model = untrained_model(DenoiserConfig::tiny(), 1).unwrap();
        save_checkpoint(&model, dir.path()).unwrap();
        let p = dir.path().join(PARAMS_FILE);
        let mut blob = fs::read(&p).unwrap();
        blob[10] ^= 0xff;
        fs::write(&p, &blob).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
        blob.truncate(blob.len() - 4);
        fs::write(&p, &blob).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn missing_checkpoint_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_checkpoint(&dir.path().join("nope")).unwrap_err();
        assert!(err.to_string().contains("no checkpoint manifest"));
    }
}
