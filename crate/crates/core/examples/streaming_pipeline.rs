//! Streams synthetic speech through the three-stage pipeline and prints the
//! per-module RTF, end-to-end RTF and first-frame delay.
//!
//! `cargo run --example streaming_pipeline -- [seconds] [model|hold] [a,b,c]`

use headmotion::conditioning::synth::{synth_clip, SynthConfig};
use headmotion::conditioning::{EmotionLabel, EyeState};
use headmotion::diffusion::{untrained_model, DenoiserConfig};
use headmotion::motion::{default_template, ControlSpec};
use headmotion::conditioning::synth_speech;
use headmotion::streaming::features::SAMPLE_RATE;
use headmotion::streaming::{
    compute_ffd, run_pipeline, HoldGenerator, ModelGenerator, MotionGenerator, PipelineConfig, SessionInputs,
    SimulatedLatency, SourceConfig, Stage,
};
use std::sync::Arc;

fn main() -> headmotion::Result<()> {
    let mut args = std::env::args().skip(1);
    let seconds: f64 = args.next().map(|s| s.parse().expect("seconds")).unwrap_or(4.0);
    let which = args.next().unwrap_or_else(|| "model".into());
    let latency = args.next().map(|s| SimulatedLatency::parse(&s)).transpose()?;

    let generator: Box<dyn MotionGenerator> = match which.as_str() {
        "hold" => Box::new(HoldGenerator::default()),
        _ => Box::new(ModelGenerator::new(Arc::new(untrained_model(DenoiserConfig::default(), 1)?))),
    };
    let clip = synth_clip(5, 4, &SynthConfig::default())?;
    let inputs = SessionInputs {
        c_ref: default_template(),
        m_ref: clip.bundle.m_ref,
        emotion: EmotionLabel::new(0)?,
        eyes: EyeState::default(),
        control: ControlSpec::default(),
    };
    let audio = synth_speech(11, (seconds * SAMPLE_RATE as f64) as usize);
    let cfg = PipelineConfig { latency, ..PipelineConfig::online() };
    let run = run_pipeline(&audio, SourceConfig::default(), generator, inputs, cfg, vec![])?;

    println!("{} frames from {seconds:.1} s of audio ({which} generator)", run.frames.len());
    for stage in Stage::ALL {
        let steps: Vec<_> = run.timings.steps.iter().filter(|s| s.stage == stage).collect();
        let mean_ms = steps.iter().map(|s| s.duration_ns as f64).sum::<f64>() / steps.len().max(1) as f64 / 1e6;
        println!("{:<9} steps {:>4}  mean {:>7.2} ms  rtf {:.3}", stage.name(), steps.len(), mean_ms, run.timings.module_rtf(stage)?);
    }
    println!("end-to-end rtf {:.3}", run.timings.end_to_end_rtf()?);
    println!("ffd {:.1} ms", compute_ffd(&run.timings)?.as_secs_f64() * 1e3);
    println!("emission {:.1} fps", run.timings.emission_fps()?);
    Ok(())
}
