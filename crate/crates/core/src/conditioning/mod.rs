//! Condition signals and the synthetic corpus.

mod bundle;
mod eye;
pub mod synth;

pub use bundle::{
    assemble_bundle_ecs, assemble_ecs, assemble_ics, AudioFeatureChunk, ConditionBundle, ConditionFlags, EcsLayout,
    EmotionLabel, DEFAULT_FEATURE_DIM, NUM_EMOTIONS,
};
pub use eye::{compute_eye_state, EyeLandmarks, EyeState, MAX_ASPECT};
pub use synth::{
    split_seed, split_train_val, synth_clip, synth_dataset, synth_dataset_with, synth_speech, SynthConfig, SyntheticClip,
};
