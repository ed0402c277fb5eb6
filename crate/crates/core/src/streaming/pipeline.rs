//! Three-stage streaming pipeline: feature extraction, motion generation and
//! rendering, each on its own worker, connected by bounded FIFO queues.
//!
//! The generator waits until a window is filled before running it, so the
//! online plan only needs its first `L₀` frames of audio before the first
//! frame goes out. Control updates queue up and take effect at the first
//! window whose emitted range starts at or after their `effective_frame`.

use super::features::{ExtractorConfig, FeatureExtractor, HOP, SAMPLE_RATE};
use super::fusion::Fuser;
use super::generator::MotionGenerator;
use super::metrics::{compute_rtf, EventKind, PipelineTimings, Stage, StepRecord, TimingEvent};
use super::render::{Projected, RenderStub};
use super::segment::SegmentPlan;
use crate::conditioning::synth::split_seed;
use crate::conditioning::{AudioFeatureChunk, ConditionBundle, EmotionLabel, EyeState};
use crate::error::{Error, Result};
use crate::motion::{apply_control_vector, project_pose_bins, CanonicalKeypoints, ControlSpec, MotionVector, DEFAULT_FPS};
use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::sync::mpsc::{channel, sync_channel, Receiver, Sender, SyncSender, TryRecvError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

/// Per-step durations each stage is padded to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedLatency {
    pub extract: Duration,
    pub generate: Duration,
    pub render: Duration,
}

impl SimulatedLatency {
    pub fn from_millis(extract: u64, generate: u64, render: u64) -> Self {
        Self {
            extract: Duration::from_millis(extract),
            generate: Duration::from_millis(generate),
            render: Duration::from_millis(render),
        }
    }

    /// Single-step times of the three modules: 23, 62 and 15 ms.
    pub fn table3() -> Self {
        Self::from_millis(23, 62, 15)
    }

    /// Parses `a,b,c` milliseconds or the name `table3`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim() == "table3" {
            return Ok(Self::table3());
        }
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let ms: Vec<f64> = parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|_| Error::Config(format!("latency '{p}' is not a number of milliseconds"))))
            .collect::<Result<_>>()?;
        if ms.len() != 3 || ms.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("expected three non-negative latencies a,b,c in ms, got '{text}'")));
        }
        let d = |v: f64| Duration::from_secs_f64(v / 1000.0);
        Ok(Self { extract: d(ms[0]), generate: d(ms[1]), render: d(ms[2]) })
    }

    fn for_stage(&self, stage: Stage) -> Duration {
        match stage {
            Stage::Extract => self.extract,
            Stage::Generate => self.generate,
            Stage::Render => self.render,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub plan: SegmentPlan,
    pub steps: usize,
    pub seed: u64,
    /// Capacity of each inter-stage queue, in messages.
    pub queue_capacity: usize,
    /// Feature frames per extractor step.
    pub extract_unit_frames: usize,
    pub latency: Option<SimulatedLatency>,
    pub stream_id: u64,
}

impl PipelineConfig {
    /// 5-frame extractor steps, 10 denoising steps, online windows.
    pub fn online() -> Self {
        Self {
            plan: SegmentPlan::online(),
            steps: 10,
            seed: 0,
            queue_capacity: 4,
            extract_unit_frames: 5,
            latency: None,
            stream_id: 0,
        }
    }

    /// 0.4 s extractor steps, 50 denoising steps, offline windows.
    pub fn offline() -> Self {
        Self { plan: SegmentPlan::offline(), steps: 50, extract_unit_frames: 10, ..Self::online() }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue capacity must be at least 1".into()));
        }
        if self.extract_unit_frames == 0 {
            return Err(Error::Config("extractor unit must be at least one frame".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-session conditions that hold until a control update changes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInputs {
    pub c_ref: CanonicalKeypoints,
    pub m_ref: MotionVector,
    pub emotion: EmotionLabel,
    pub eyes: EyeState,
    pub control: ControlSpec,
}

/// Live change of emotion, eye state or control spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<EmotionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eyes: Option<EyeState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    /// Takes effect at the first segment boundary at or after this frame.
    #[serde(default)]
    pub effective_frame: u64,
}

impl ControlUpdate {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = &self.eyes {
            e.validate()?;
        }
        if let Some(c) = &self.control {
            c.validate()?;
        }
        Ok(())
    }
}

/// A rendered output frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFrame {
    pub frame_index: u64,
    /// Packed motion after fusion, bin projection and control.
    pub motion: Vec<f64>,
    pub keypoints: Projected,
    pub t_mono_ns: u64,
}

#[derive(Debug)]
pub enum AudioMessage {
    Pcm(Vec<f32>),
    End,
}

enum FeatureMessage {
    Rows { start: usize, rows: Array2<f64> },
    End,
}

enum MotionMessage {
    Frames { start: usize, frames: Vec<Vec<f64>> },
    End,
}

#[derive(Clone, Copy)]
struct Clock {
    epoch: Instant,
    stream_id: u64,
}

impl Clock {
    fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    fn event(&self, event: EventKind, frame_index: usize) -> TimingEvent {
        TimingEvent { event, stream_id: self.stream_id, frame_index: frame_index as u64, t_mono_ns: self.now_ns() }
    }
}

struct StageLog {
    events: Vec<TimingEvent>,
    steps: Vec<StepRecord>,
    meter: Arc<BusyMeter>,
}

impl StageLog {
    fn new(meter: Arc<BusyMeter>) -> Self {
        Self { events: Vec::new(), steps: Vec::new(), meter }
    }
}

/// Live totals shared with observers while the pipeline runs.
#[derive(Debug, Default)]
pub struct BusyMeter {
    busy_ns: AtomicU64,
    frames: AtomicU64,
}

impl BusyMeter {
    pub fn busy(&self) -> Duration {
        Duration::from_nanos(self.busy_ns.load(Ordering::Relaxed))
    }

    pub fn frames_emitted(&self) -> u64 {
        self.frames.load(Ordering::Relaxed)
    }

    /// Busy time of all stages per second of emitted motion so far.
    pub fn rolling_rtf(&self) -> Result<f64> {
        compute_rtf(self.busy(), Duration::from_secs_f64(self.frames_emitted() as f64 / DEFAULT_FPS))
    }
}

/// Sleeps out the rest of a simulated step and records its busy time.
fn finish_step(log: &mut StageLog, stage: Stage, started: Instant, latency: Option<SimulatedLatency>, valid_frames: usize) {
    if let Some(target) = latency.map(|l| l.for_stage(stage)) {
        let spent = started.elapsed();
        if spent < target {
            thread::sleep(target - spent);
        }
    }
    let ns = started.elapsed().as_nanos() as u64;
    log.meter.busy_ns.fetch_add(ns, Ordering::Relaxed);
    log.steps.push(StepRecord { stage, duration_ns: ns, valid_frames: valid_frames as u64 });
}

fn disconnected(stage: &str) -> Error {
    Error::State(format!("{stage} stage lost its upstream before end of stream"))
}

fn run_extractor(
    rx: Receiver<AudioMessage>,
    tx: SyncSender<FeatureMessage>,
    unit_frames: usize,
    latency: Option<SimulatedLatency>,
    clock: Clock,
    meter: Arc<BusyMeter>,
) -> Result<StageLog> {
    let mut log = StageLog::new(meter);
    let mut ext = FeatureExtractor::new(ExtractorConfig::default())?;
    let unit = unit_frames * HOP;
    let mut buf: Vec<f32> = Vec::new();
    let mut received = 0usize;
    let mut produced = 0usize;
    let mut step = |pcm: &[f32], last: bool, log: &mut StageLog, produced: &mut usize| -> Result<bool> {
        let t = Instant::now();
        let mut rows = ext.push(pcm, SAMPLE_RATE)?;
        if last {
            let tail = ext.flush()?;
            rows = ndarray::concatenate(Axis(0), &[rows.view(), tail.view()]).map_err(|e| Error::Shape(e.to_string()))?;
        }
        let n = rows.nrows();
        if n == 0 && pcm.is_empty() {
            // nothing was pending at end of stream
            return Ok(true);
        }
        finish_step(log, Stage::Extract, t, latency, n);
        if n > 0 {
            log.events.push(clock.event(EventKind::FeaturesOut, *produced));
        }
        let start = *produced;
        *produced += n;
        Ok(tx.send(FeatureMessage::Rows { start, rows }).is_ok())
    };
    loop {
        match rx.recv() {
            Ok(AudioMessage::Pcm(pcm)) => {
                log.events.push(clock.event(EventKind::AudioIn, received / HOP));
                received += pcm.len();
                buf.extend_from_slice(&pcm);
                while buf.len() >= unit {
                    let chunk: Vec<f32> = buf.drain(..unit).collect();
                    if !step(&chunk, false, &mut log, &mut produced)? {
                        return Ok(log);
                    }
                }
            }
            Ok(AudioMessage::End) => {
                let rest = std::mem::take(&mut buf);
                step(&rest, true, &mut log, &mut produced)?;
                let _ = tx.send(FeatureMessage::End);
                return Ok(log);
            }
            Err(_) => return Err(disconnected("extractor")),
        }
    }
}

struct GeneratorStage {
    generator: Box<dyn MotionGenerator>,
    inputs: SessionInputs,
    cfg: PipelineConfig,
    controls: Receiver<ControlUpdate>,
    pending: Vec<ControlUpdate>,
    /// Fused frames before control, kept back to the next window's start.
    history: VecDeque<Vec<f64>>,
    history_start: usize,
}

impl GeneratorStage {
    fn take_controls(&mut self, boundary: usize) {
        loop {
            match self.controls.try_recv() {
                Ok(u) => self.pending.push(u),
                Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => break,
            }
        }
        let (due, later): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.pending).into_iter().partition(|u| u.effective_frame <= boundary as u64);
        self.pending = later;
        for u in due {
            if let Some(e) = u.emotion {
                self.inputs.emotion = e;
            }
            if let Some(e) = u.eyes {
                self.inputs.eyes = e;
            }
            if let Some(c) = u.control {
                self.inputs.control = c;
            }
        }
    }

    fn m_ref_for(&self, start: usize) -> Result<MotionVector> {
        if start == 0 {
            return Ok(self.inputs.m_ref.clone());
        }
        let i = (start - 1)
            .checked_sub(self.history_start)
            .ok_or_else(|| Error::State(format!("frame {} no longer in history", start - 1)))?;
        let row = self.history.get(i).ok_or_else(|| Error::State(format!("frame {} not yet generated", start - 1)))?;
        MotionVector::from_slice(row)
    }

    fn remember(&mut self, frames: &[Vec<f64>]) {
        self.history.extend(frames.iter().cloned());
        while self.history.len() > self.cfg.plan.window + 1 {
            self.history.pop_front();
            self.history_start += 1;
        }
    }

    /// Projects pose bins, keeps the fused frames as history and applies the
    /// active control spec.
    fn finalize(&mut self, out: Array2<f64>) -> Result<Vec<Vec<f64>>> {
        let mut fused = Vec::with_capacity(out.nrows());
        for row in out.rows() {
            let mut v = row.to_vec();
            project_pose_bins(&mut v)?;
            fused.push(v);
        }
        self.remember(&fused);
        fused.iter().map(|v| apply_control_vector(v, &self.inputs.control)).collect()
    }

    fn run(mut self, rx: Receiver<FeatureMessage>, tx: SyncSender<MotionMessage>, clock: Clock, meter: Arc<BusyMeter>) -> Result<StageLog> {
        let mut log = StageLog::new(meter);
        let plan = self.cfg.plan;
        let mut features: Option<Array2<f64>> = None;
        let mut ended = false;
        let mut fuser = Fuser::new(crate::motion::layout::MOTION_DIMS);
        let mut k = 0usize;
        loop {
            let available = features.as_ref().map_or(0, |f| f.nrows());
            if !ended && available < plan.window_end(k) {
                match rx.recv() {
                    Ok(FeatureMessage::Rows { start, rows }) => {
                        if start != available {
                            return Err(Error::State(format!("feature rows start at {start}, expected {available}")));
                        }
                        features = Some(match features.take() {
                            None => rows,
                            Some(f) => ndarray::concatenate(Axis(0), &[f.view(), rows.view()])
                                .map_err(|e| Error::Shape(e.to_string()))?,
                        });
                    }
                    Ok(FeatureMessage::End) => ended = true,
                    Err(_) => return Err(disconnected("generator")),
                }
                continue;
            }
            if available == 0 || (k > 0 && plan.window_end(k - 1) >= available) {
                let tail = fuser.flush();
                if tail.nrows() > 0 {
                    let start = fuser.next_frame() - tail.nrows();
                    let frames = self.finalize(tail)?;
                    log.events.push(clock.event(EventKind::MotionOut, start));
                    if tx.send(MotionMessage::Frames { start, frames }).is_err() {
                        return Ok(log);
                    }
                }
                break;
            }
            let total = if ended { available } else { usize::MAX };
            let w = plan.window_at(k, total);
            self.take_controls(w.emit_start);
            let feats = features.as_ref().expect("features present");
            let t = Instant::now();
            let bundle = ConditionBundle {
                audio: AudioFeatureChunk::new(feats.slice(s![w.start..w.end, ..]).to_owned(), w.start as u64)?,
                eyes: vec![self.inputs.eyes; w.len()],
                c_ref: self.inputs.c_ref,
                emotion: self.inputs.emotion,
                m_ref: self.m_ref_for(w.start)?,
            };
            let seg = self.generator.generate(&bundle, self.cfg.steps, split_seed(self.cfg.seed, k as u64))?;
            let out = fuser.push(&w, seg.view())?;
            let frames = self.finalize(out)?;
            finish_step(&mut log, Stage::Generate, t, self.cfg.latency, frames.len());
            log.events.push(clock.event(EventKind::MotionOut, w.emit_start));
            if tx.send(MotionMessage::Frames { start: w.emit_start, frames }).is_err() {
                return Ok(log);
            }
            k += 1;
        }
        let _ = tx.send(MotionMessage::End);
        Ok(log)
    }
}

fn run_renderer(
    rx: Receiver<MotionMessage>,
    tx: SyncSender<EmittedFrame>,
    stub: RenderStub,
    latency: Option<SimulatedLatency>,
    clock: Clock,
    meter: Arc<BusyMeter>,
) -> Result<StageLog> {
    let mut log = StageLog::new(meter);
    let mut next = 0usize;
    loop {
        match rx.recv() {
            Ok(MotionMessage::Frames { start, frames }) => {
                if start != next {
                    return Err(Error::State(format!("motion frames start at {start}, expected {next}")));
                }
                for motion in frames {
                    let t = Instant::now();
                    let keypoints = stub.render(&motion)?;
                    finish_step(&mut log, Stage::Render, t, latency, 1);
                    let ev = clock.event(EventKind::FrameEmitted, next);
                    log.meter.frames.fetch_add(1, Ordering::Relaxed);
                    log.events.push(ev);
                    let frame = EmittedFrame { frame_index: next as u64, motion, keypoints, t_mono_ns: ev.t_mono_ns };
                    if tx.send(frame).is_err() {
                        return Ok(log);
                    }
                    next += 1;
                }
            }
            Ok(MotionMessage::End) => return Ok(log),
            Err(_) => return Err(disconnected("render")),
        }
    }
}

/// A running pipeline. Feed audio through [`Pipeline::audio`], read frames
/// from [`Pipeline::frames`], then [`Pipeline::join`] for the timings.
pub struct Pipeline {
    pub audio: SyncSender<AudioMessage>,
    pub controls: Sender<ControlUpdate>,
    pub frames: Receiver<EmittedFrame>,
    workers: Vec<JoinHandle<Result<StageLog>>>,
    meter: Arc<BusyMeter>,
    epoch: Instant,
    stream_id: u64,
}

impl Pipeline {
    pub fn spawn(generator: Box<dyn MotionGenerator>, inputs: SessionInputs, cfg: PipelineConfig) -> Result<Self> {
        Self::spawn_at(generator, inputs, cfg, Instant::now())
    }

    /// Like [`Pipeline::spawn`] with timestamps measured from `epoch`.
    pub fn spawn_at(generator: Box<dyn MotionGenerator>, inputs: SessionInputs, cfg: PipelineConfig, epoch: Instant) -> Result<Self> {
        cfg.validate()?;
        inputs.control.validate()?;
        inputs.eyes.validate()?;
        let cap = cfg.queue_capacity;
        let clock = Clock { epoch, stream_id: cfg.stream_id };
        let (audio_tx, audio_rx) = sync_channel(cap);
        let (feat_tx, feat_rx) = sync_channel(cap);
        let (motion_tx, motion_rx) = sync_channel(cap);
        let (frame_tx, frame_rx) = sync_channel(cap);
        let (control_tx, control_rx) = channel();
        let stub = RenderStub::new(inputs.c_ref);
        let (unit, latency) = (cfg.extract_unit_frames, cfg.latency);
        let stage = GeneratorStage {
            generator,
            inputs,
            cfg,
            controls: control_rx,
            pending: Vec::new(),
            history: VecDeque::new(),
            history_start: 0,
        };
        let meter = Arc::new(BusyMeter::default());
        let (m1, m2, m3) = (meter.clone(), meter.clone(), meter.clone());
        let workers = vec![
            thread::Builder::new()
                .name("extract".into())
                .spawn(move || run_extractor(audio_rx, feat_tx, unit, latency, clock, m1))?,
            thread::Builder::new().name("generate".into()).spawn(move || stage.run(feat_rx, motion_tx, clock, m2))?,
            thread::Builder::new()
                .name("render".into())
                .spawn(move || run_renderer(motion_rx, frame_tx, stub, latency, clock, m3))?,
        ];
        Ok(Self { audio: audio_tx, controls: control_tx, frames: frame_rx, workers, meter, epoch, stream_id: clock.stream_id })
    }

    pub fn meter(&self) -> Arc<BusyMeter> {
        self.meter.clone()
    }

    pub fn epoch(&self) -> Instant {
        self.epoch
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Waits for every stage and merges their logs. Returns the first stage
    /// error, upstream first.
    pub fn join(self) -> Result<PipelineTimings> {
        drop(self.audio);
        drop(self.frames);
        let mut timings = PipelineTimings::new(DEFAULT_FPS);
        let mut first_err = None;
        for w in self.workers {
            match w.join() {
                Ok(Ok(log)) => {
                    timings.events.extend(log.events);
                    timings.steps.extend(log.steps);
                }
                Ok(Err(e)) => {
                    first_err.get_or_insert(e);
                }
                Err(_) => {
                    first_err.get_or_insert(Error::State("pipeline worker panicked".into()));
                }
            }
        }
        match first_err {
            // a broken upstream is reported by its own error
            Some(e) => Err(e),
            None => Ok(timings),
        }
    }
}

/// How the audio source releases samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    /// Chunk `i` is released once its last sample would have been captured.
    Realtime,
    AsFastAsPossible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub chunk_samples: usize,
    pub pacing: Pacing,
}

impl Default for SourceConfig {
    /// 20 ms chunks in real time.
    fn default() -> Self {
        Self { chunk_samples: 320, pacing: Pacing::Realtime }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub frames: Vec<EmittedFrame>,
    pub timings: PipelineTimings,
}

/// Streams a whole signal through a fresh pipeline and collects the output.
pub fn run_pipeline(
    audio: &[f32],
    source: SourceConfig,
    generator: Box<dyn MotionGenerator>,
    inputs: SessionInputs,
    cfg: PipelineConfig,
    controls: Vec<ControlUpdate>,
) -> Result<PipelineRun> {
    if source.chunk_samples == 0 {
        return Err(Error::Config("source chunk must be at least one sample".into()));
    }
    let pipeline = Pipeline::spawn(generator, inputs, cfg)?;
    for c in controls {
        c.validate()?;
        let _ = pipeline.controls.send(c);
    }
    let tx = pipeline.audio.clone();
    let epoch = pipeline.epoch();
    let signal = audio.to_vec();
    let feeder = thread::spawn(move || {
        for (i, chunk) in signal.chunks(source.chunk_samples).enumerate() {
            if source.pacing == Pacing::Realtime {
                let due = Duration::from_secs_f64((i * source.chunk_samples + chunk.len()) as f64 / SAMPLE_RATE as f64);
                let now = epoch.elapsed();
                if due > now {
                    thread::sleep(due - now);
                }
            }
            if tx.send(AudioMessage::Pcm(chunk.to_vec())).is_err() {
                return;
            }
        }
        let _ = tx.send(AudioMessage::End);
    });
    let mut frames = Vec::new();
    for f in pipeline.frames.iter() {
        frames.push(f);
    }
    let _ = feeder.join();
    let timings = pipeline.join()?;
    Ok(PipelineRun { frames, timings })
}
