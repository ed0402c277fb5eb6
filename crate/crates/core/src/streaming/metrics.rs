//! Real-Time Factor, First-Frame Delay and the pipeline event log.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Duration;

/// Step time divided by the valid (non-overlapping) duration it produced.
pub fn compute_rtf(step_time: Duration, valid_len: Duration) -> Result<f64> {
    if valid_len.is_zero() {
        return Err(Error::Range("valid length must be positive".into()));
    }
    // nanosecond integers divide to the correctly rounded ratio
    Ok(step_time.as_nanos() as f64 / valid_len.as_nanos() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AudioIn,
    FeaturesOut,
    MotionOut,
    FrameEmitted,
}

/// One line of the timing log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingEvent {
    pub event: EventKind,
    pub stream_id: u64,
    pub frame_index: u64,
    pub t_mono_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    Generate,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Extract, Stage::Generate, Stage::Render];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Generate => "generate",
            Stage::Render => "render",
        }
    }
}

/// Busy time of one stage step and the number of new frames it produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: Stage,
    pub duration_ns: u64,
    pub valid_frames: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineTimings {
    pub fps: f64,
    pub events: Vec<TimingEvent>,
    pub steps: Vec<StepRecord>,
}

impl PipelineTimings {
    pub fn new(fps: f64) -> Self {
        Self { fps, events: Vec::new(), steps: Vec::new() }
    }

    pub fn first(&self, kind: EventKind) -> Option<&TimingEvent> {
        self.events.iter().filter(|e| e.event == kind).min_by_key(|e| e.t_mono_ns)
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TimingEvent> {
        self.events.iter().filter(move |e| e.event == kind)
    }

    pub fn frames_emitted(&self) -> usize {
        self.of_kind(EventKind::FrameEmitted).count()
    }

    /// Total busy time of a stage over the total duration of the frames it
    /// produced. Equal to the mean per-step RTF when steps are uniform.
    pub fn module_rtf(&self, stage: Stage) -> Result<f64> {
        let (busy, frames) = self
            .steps
            .iter()
            .filter(|s| s.stage == stage)
            .fold((0u64, 0u64), |(b, f), s| (b + s.duration_ns, f + s.valid_frames));
        compute_rtf(Duration::from_nanos(busy), self.frames_to_duration(frames))
    }

    /// Combined busy time of all stages per second of produced motion, i.e.
    /// the RTF of running the stages back to back on one worker.
    pub fn end_to_end_rtf(&self) -> Result<f64> {
        let busy: u64 = self.steps.iter().map(|s| s.duration_ns).sum();
        compute_rtf(Duration::from_nanos(busy), self.frames_to_duration(self.frames_emitted() as u64))
    }

    /// Emission rate between the first and last emitted frame.
    pub fn emission_fps(&self) -> Result<f64> {
        let times: Vec<u64> = self.of_kind(EventKind::FrameEmitted).map(|e| e.t_mono_ns).collect();
        let (lo, hi) = match (times.iter().min(), times.iter().max()) {
            (Some(lo), Some(hi)) if hi > lo => (*lo, *hi),
            _ => return Err(Error::NoOutput("fewer than two emitted frames".into())),
        };
        Ok((times.len() - 1) as f64 / Duration::from_nanos(hi - lo).as_secs_f64())
    }

    fn frames_to_duration(&self, frames: u64) -> Duration {
        if self.fps > 0.0 {
            Duration::from_secs_f64(frames as f64 / self.fps)
        } else {
            Duration::ZERO
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut events = self.events.clone();
        events.sort_by_key(|e| (e.t_mono_ns, e.frame_index));
        for e in &events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Time from the first audio received to the first frame emitted.
pub fn compute_ffd(timings: &PipelineTimings) -> Result<Duration> {
    let frame = timings.first(EventKind::FrameEmitted).ok_or_else(|| Error::NoOutput("no frame was emitted".into()))?;
    let audio = timings.first(EventKind::AudioIn).ok_or_else(|| Error::NoOutput("no audio was received".into()))?;
    Ok(Duration::from_nanos(frame.t_mono_ns.saturating_sub(audio.t_mono_ns)))
}

/// Per-module and end-to-end figures of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub frames: usize,
    /// `(stage, steps, mean step ms, rtf)`
    pub modules: Vec<(Stage, usize, f64, f64)>,
    pub end_to_end_rtf: f64,
    pub ffd_ms: f64,
    pub emission_fps: f64,
}

impl BenchSummary {
    pub fn from_timings(t: &PipelineTimings) -> Result<Self> {
        let mut modules = Vec::with_capacity(3);
        for stage in Stage::ALL {
            let steps: Vec<u64> = t.steps.iter().filter(|s| s.stage == stage).map(|s| s.duration_ns).collect();
            let mean_ms = steps.iter().sum::<u64>() as f64 / steps.len().max(1) as f64 / 1e6;
            modules.push((stage, steps.len(), mean_ms, t.module_rtf(stage)?));
        }
        Ok(Self {
            frames: t.frames_emitted(),
            modules,
            end_to_end_rtf: t.end_to_end_rtf()?,
            ffd_ms: compute_ffd(t)?.as_secs_f64() * 1e3,
            emission_fps: t.emission_fps()?,
        })
    }

    pub fn rtf(&self, stage: Stage) -> f64 {
        self.modules.iter().find(|m| m.0 == stage).map_or(f64::NAN, |m| m.3)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<10}{:>7}{:>13}{:>8}\n", "module", "steps", "mean (ms)", "rtf");
        for (stage, steps, mean_ms, rtf) in &self.modules {
            out += &format!("{:<10}{:>7}{:>13.2}{:>8.3}\n", stage.name(), steps, mean_ms, rtf);
        }
        out += &format!("end-to-end rtf {:.3}\n", self.end_to_end_rtf);
        out += &format!("ffd {:.1} ms\n", self.ffd_ms);
        out += &format!("{} frames at {:.1} fps\n", self.frames, self.emission_fps);
        out
    }
}
