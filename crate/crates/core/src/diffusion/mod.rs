//! Conditional motion diffusion: schedule, losses, denoiser, training and
//! reduced-step sampling.

pub mod checkpoint;
mod engine;
pub mod eval;
pub mod loss;
pub mod model;
mod normalize;
pub mod sampler;
mod schedule;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, untrained_model, CheckpointManifest};
pub use engine::{MotionModel, PreparedConditions};
pub use loss::{
    loss_denoise, loss_initial, loss_temporal, total_loss, update_adaptive_weights, LossParts, LossWeightsState,
};
pub use model::{Denoiser, DenoiserConfig};
pub use normalize::Normalizer;
pub use sampler::{sample, PredictX0};
pub use schedule::NoiseSchedule;
pub use train::{train, EpochMetrics, OptimizerKind, TrainConfig, TrainOutcome};
