//! Trains the denoiser on the synthetic corpus and prints per-epoch metrics.
//!
//! `cargo run --release --example train_synthetic -- [epochs] [clips]`

use headmotion::conditioning::synth_dataset;
use headmotion::diffusion::{train, TrainConfig};

fn main() -> headmotion::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = TrainConfig::default();
    if let Some(e) = args.next() {
        cfg.epochs = e.parse().expect("epochs must be an integer");
    }
    if let Some(n) = args.next() {
        cfg.n_clips = n.parse().expect("clips must be an integer");
    }
    let t0 = std::time::Instant::now();
    let clips = synth_dataset(cfg.seed, cfg.n_clips, cfg.clip_len)?;
    println!("generated {} clips in {:.1}s", clips.len(), t0.elapsed().as_secs_f64());
    let out = train(&clips, &cfg, |m| {
        println!(
            "epoch {:>3}  train {:.4}  val {:.4}  groups [{:.4} {:.4} {:.4}]  w [{:.2} {:.2} {:.2}]  {:.1}s",
            m.epoch,
            m.train_loss,
            m.val_grouped_mse,
            m.val_group_mse[0],
            m.val_group_mse[1],
            m.val_group_mse[2],
            m.group_weights[0],
            m.group_weights[1],
            m.group_weights[2],
            m.seconds
        );
    })?;
    println!("final/baseline = {:.3}", out.last().val_grouped_mse / out.baseline().val_grouped_mse);
    Ok(())
}
