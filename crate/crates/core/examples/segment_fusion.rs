//! Plans online and offline segment windows and fuses overlapping outputs.
//!
//! `cargo run --example segment_fusion`

use headmotion::streaming::segment::{plan_segments, SegmentPlan};
use headmotion::streaming::Fuser;
use ndarray::Array2;

fn main() -> headmotion::Result<()> {
    for (name, plan) in [("offline", SegmentPlan::offline()), ("online", SegmentPlan::online())] {
        let windows = plan_segments(160, &plan)?;
        println!("{name}: {} windows, first {:?}", windows.len(), &windows[..3.min(windows.len())]);
    }

    // each window predicts a line with its own offset; fusion hides the steps
    let plan = SegmentPlan::offline();
    let mut fuser = Fuser::new(1);
    let mut out = Vec::new();
    for w in plan_segments(240, &plan)? {
        let seg = Array2::from_shape_fn((w.len(), 1), |(i, _)| (w.start + i) as f64 * 0.01 + 0.05 * w.index as f64);
        out.extend(fuser.push(&w, seg.view())?.column(0).iter().copied());
    }
    out.extend(fuser.flush().column(0).iter().copied());
    let jump = out.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
    println!("fused {} frames, largest frame-to-frame change {jump:.4}", out.len());
    Ok(())
}
