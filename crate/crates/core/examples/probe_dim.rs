//! Offsets one deformation dimension by ±eps and lists what moved.
//!
//! `cargo run --example probe_dim -- [dim] [eps]`

use headmotion::motion::{default_template, probe_dim, MotionFrame};

fn main() -> headmotion::Result<()> {
    let mut args = std::env::args().skip(1);
    let dim: usize = args.next().map(|s| s.parse().expect("dim")).unwrap_or(45);
    let eps: f64 = args.next().map(|s| s.parse().expect("eps")).unwrap_or(0.05);
    let r = probe_dim(&default_template(), &MotionFrame::default(), dim, eps)?;
    println!("dim {dim} = keypoint {} ({}) axis {}", r.keypoint, r.keypoint_name, r.axis);
    for s in &r.snapshots {
        println!("  offset {:+.3}: {:?}", s.offset, s.projected[r.keypoint]);
    }
    for d in &r.moved {
        println!("  moved keypoint {} axis {} by {:+.4}", d.keypoint, d.axis, d.delta);
    }
    println!("isolated: {}", r.isolated(1e-12));
    Ok(())
}
