//! Offline generation from audio files.

use crate::diffusion::MotionModel;
use crate::error::{Error, Result};
use crate::motion::{write_motion_jsonl, CanonicalKeypoints, MotionFileHeader, MotionRecord, DEFAULT_FPS};
use crate::streaming::features::SAMPLE_RATE;
use crate::streaming::{run_pipeline, ModelGenerator, Pacing, PipelineConfig, PipelineRun, SessionInputs, SourceConfig};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

/// Reads a 16 kHz WAV file as mono samples in `[-1, 1]`. Multi-channel audio
/// is averaged.
pub fn read_wav(path: &Path) -> Result<Vec<f32>> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Format(format!("{}: sample rate {} Hz, expected {SAMPLE_RATE}", path.display(), spec.sample_rate)));
    }
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.into_samples::<f32>().collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Int => {
            let full = (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader.into_samples::<i32>().map(|s| s.map(|v| v as f32 / full)).collect()
        }
    }
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let ch = spec.channels.max(1) as usize;
    Ok(interleaved.chunks(ch).map(|f| f.iter().sum::<f32>() / f.len() as f32).collect())
}

pub fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    let spec = hound::WavSpec { channels: 1, sample_rate: SAMPLE_RATE, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let fmt = |e: hound::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = hound::WavWriter::create(path, spec).map_err(fmt)?;
    for s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16).map_err(fmt)?;
    }
    w.finalize().map_err(fmt)
}

/// Identity file: the canonical keypoints as `{"points": [[x, y, z], ...]}`.
pub fn read_identity(path: &Path) -> Result<CanonicalKeypoints> {
    let text = std::fs::read_to_string(path)?;
    let c: CanonicalKeypoints =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    CanonicalKeypoints::new(c.points)
}

/// Runs the whole clip through the pipeline as fast as possible.
pub fn generate_from_audio(model: Arc<MotionModel>, audio: &[f32], inputs: SessionInputs, cfg: PipelineConfig) -> Result<PipelineRun> {
    if audio.is_empty() {
        return Err(Error::InvalidInput("audio is empty".into()));
    }
    model.schedule.ladder(cfg.steps)?;
    let source = SourceConfig { chunk_samples: 6_400, pacing: Pacing::AsFastAsPossible };
    run_pipeline(audio, source, Box::new(ModelGenerator::new(model)), inputs, cfg, vec![])
}

pub fn motion_records(run: &PipelineRun) -> Vec<MotionRecord> {
    run.frames.iter().map(|f| MotionRecord { frame_index: f.frame_index, values: f.motion.clone() }).collect()
}

pub fn write_motion_file(path: &Path, records: &[MotionRecord]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    write_motion_jsonl(w, &MotionFileHeader::new(DEFAULT_FPS), records)
}
