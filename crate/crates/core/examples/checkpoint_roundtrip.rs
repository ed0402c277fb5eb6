//! Saves a model, loads it back and checks that sampling is unchanged.
//!
//! `cargo run --example checkpoint_roundtrip`

use headmotion::conditioning::synth::{synth_clip, SynthConfig};
use headmotion::diffusion::{load_checkpoint, save_checkpoint, untrained_model, DenoiserConfig};

fn main() -> headmotion::Result<()> {
    let dir = std::env::temp_dir().join("headmotion-ckpt-example");
    let model = untrained_model(DenoiserConfig::default(), 7)?;
    let manifest = save_checkpoint(&model, &dir)?;
    println!("{} parameters, sha256 {}", manifest.param_count, &manifest.blob_sha256[..16]);

    let loaded = load_checkpoint(&dir)?;
    let clip = synth_clip(3, 20, &SynthConfig::default())?;
    let a = loaded.sample(&clip.bundle, 10, 1)?;
    let b = loaded.sample(&clip.bundle, 10, 1)?;
    println!("deterministic after reload: {}", a.frames == b.frames);
    let orig = model.sample(&clip.bundle, 10, 1)?;
    let diff = (&orig.frames - &a.frames).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("max difference to the in-memory model {diff:.2e}");
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
