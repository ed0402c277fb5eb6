//! Streams audio through the pipeline and opens the mouth from frame 40 on
//! with a control update.
//!
//! `cargo run --example live_control`

use headmotion::conditioning::synth::MOUTH_OPEN_DIM;
use headmotion::conditioning::{synth_speech, EmotionLabel, EyeState};
use headmotion::motion::{default_template, pack_motion, ControlSpec, MotionFrame};
use headmotion::streaming::{
    run_pipeline, ControlUpdate, HoldGenerator, Pacing, PipelineConfig, SessionInputs, SourceConfig,
};

fn main() -> headmotion::Result<()> {
    let inputs = SessionInputs {
        c_ref: default_template(),
        m_ref: pack_motion(&MotionFrame::default())?,
        emotion: EmotionLabel::new(0)?,
        eyes: EyeState::default(),
        control: ControlSpec::default(),
    };
    let update = ControlUpdate {
        emotion: None,
        eyes: None,
        control: Some(ControlSpec::default().with_offset(MOUTH_OPEN_DIM, 0.1)),
        effective_frame: 38,
    };
    let audio = synth_speech(2, 60 * 640);
    let source = SourceConfig { chunk_samples: 640, pacing: Pacing::AsFastAsPossible };
    let run = run_pipeline(&audio, source, Box::new(HoldGenerator::default()), inputs, PipelineConfig::online(), vec![update])?;
    for f in run.frames.iter().skip(36).take(8) {
        println!("frame {:>2}  mouth {:+.4}  keypoint 19 y {:+.4}", f.frame_index, f.motion[MOUTH_OPEN_DIM], f.keypoints[19][1]);
    }
    Ok(())
}
