//! Trains the full model and the two ablations (no emotion condition, fixed
//! group weights) on the same data and compares held-out metrics.
//!
//! `cargo run --release --example ablation_study -- [epochs]`

use headmotion::conditioning::{synth_dataset, ConditionBundle};
use headmotion::diffusion::eval::{emotion_switch, step_disparity};
use headmotion::diffusion::{train, TrainConfig, TrainOutcome};
use ndarray::Axis;

fn run(name: &str, cfg: &TrainConfig, clips: &[headmotion::conditioning::SyntheticClip]) -> headmotion::Result<TrainOutcome> {
    let out = train(clips, cfg, |_| {})?;
    let (b, l) = (out.baseline(), out.last());
    println!(
        "{name:<10} val {:.4} (baseline {:.4}, ratio {:.3})  groups [{:.4} {:.4} {:.4}]  pose/def {:.3}  {:.0}s",
        l.val_grouped_mse,
        b.val_grouped_mse,
        l.val_grouped_mse / b.val_grouped_mse,
        l.val_group_mse[0],
        l.val_group_mse[1],
        l.val_group_mse[2],
        l.val_group_mse[1] / l.val_group_mse[0],
        l.seconds
    );
    Ok(out)
}

fn main() -> headmotion::Result<()> {
    let epochs = std::env::args().nth(1).map(|e| e.parse().expect("epochs must be an integer")).unwrap_or(30);
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let clips = synth_dataset(cfg.seed, cfg.n_clips, cfg.clip_len)?;

    let full = run("full", &cfg, &clips)?;
    let no_emo = run("w/o emo", &TrainConfig { use_emotion: false, ..cfg.clone() }, &clips)?;
    let no_ada = run("w/o ada-w", &TrainConfig { adaptive_weights: false, ..cfg.clone() }, &clips)?;

    let ratio = |o: &TrainOutcome| o.last().val_group_mse[1] / o.last().val_group_mse[0];
    println!("w/o emo raises held-out MSE: {}", no_emo.last().val_grouped_mse > full.last().val_grouped_mse);
    println!("w/o ada-w raises pose/def ratio: {} ({:.3} vs {:.3})", ratio(&no_ada) > ratio(&full), ratio(&no_ada), ratio(&full));

    let val: Vec<&ConditionBundle> = full.val_indices.iter().map(|&i| &clips[i].bundle).collect();
    let report = emotion_switch(&full.model, &val[..8], 10, 99, 5)?;
    println!("emotion switch agreement {:.3} all={} {:?}", report.agreement_rate(), report.all_agree(), report.cases);

    let targets: Vec<_> = full
        .train_indices
        .iter()
        .map(|&i| full.model.motion_norm.normalize(clips[i].target.frames.view()))
        .collect::<headmotion::Result<_>>()?;
    let views: Vec<_> = targets.iter().map(|t| t.view()).collect();
    let stacked = ndarray::concatenate(Axis(0), &views).expect("equal widths");
    let std = stacked.var_axis(Axis(0), 0.0).mean().unwrap().sqrt();
    let gap = step_disparity(&full.model, &val[..8], 10, 50, 5)?;
    println!("steps 10 vs 50: rmse {gap:.4}, dataset std {std:.4}, ratio {:.3}", gap / std);
    Ok(())
}
