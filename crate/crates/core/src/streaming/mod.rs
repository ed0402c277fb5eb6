//! Chunked feature extraction, windowing, fusion and the realtime pipeline.

pub mod features;
pub mod fusion;
pub mod generator;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod segment;

pub use features::{ExtractorConfig, FeatureExtractor, FeatureExtractorState};
pub use fusion::{fuse_segments, fusion_weights, FusionCarry, FusionWeights, Fuser};
pub use generator::{HoldGenerator, ModelGenerator, MotionGenerator};
pub use metrics::{compute_ffd, compute_rtf, BenchSummary, EventKind, PipelineTimings, Stage, StepRecord, TimingEvent};
pub use pipeline::{
    run_pipeline, AudioMessage, BusyMeter, ControlUpdate, EmittedFrame, Pacing, Pipeline, PipelineConfig, PipelineRun, SessionInputs,
    SimulatedLatency, SourceConfig,
};
pub use render::{Projected, RenderStub};
pub use segment::{plan_segments, SegmentPlan, SegmentWindow};
