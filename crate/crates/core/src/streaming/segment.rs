//! Fixed-length windowing of the frame stream.
//!
//! Window `k` ends at `e_k = L₀ + k·V` and starts at `max(0, e_k − L)`, so
//! every window after the first adds exactly `V` new frames. Window `k`
//! emits `[k·V, k·V + V)`; the rest of the window is carried into the next
//! blend. With `L₀ = L` (offline) the carry is exactly the `O = L − V`
//! overlap. The final window is clipped to the stream length and the carry
//! left behind it is flushed.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentPlan {
    /// Window length `L`.
    pub window: usize,
    /// Valid (emitted) length per step `V`.
    pub hop: usize,
    /// Length of the first window `L₀`.
    pub first_window: usize,
}

impl SegmentPlan {
    pub fn new(window: usize, hop: usize, first_window: usize) -> Result<Self> {
        let p = Self { window, hop, first_window };
        p.validate()?;
        Ok(p)
    }

    /// 80-frame windows, 70 valid frames, 10 frames of overlap.
    pub fn offline() -> Self {
        Self { window: 80, hop: 70, first_window: 80 }
    }

    /// 80-frame windows advancing by 5 frames (200 ms). The first window is
    /// a single hop: with live audio, every extra frame it waits for adds
    /// 40 ms to the first-frame delay.
    pub fn online() -> Self {
        Self { window: 80, hop: 5, first_window: 5 }
    }

    pub fn overlap(&self) -> usize {
        self.window - self.hop
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window {
            return Err(Error::Config(format!("hop {} must be in [1, window {}]", self.hop, self.window)));
        }
        if self.first_window < self.hop || self.first_window > self.window {
            return Err(Error::Config(format!(
                "first window {} must be in [hop {}, window {}]",
                self.first_window, self.hop, self.window
            )));
        }
        Ok(())
    }

    /// End (exclusive) of window `k` before clipping.
    pub fn window_end(&self, k: usize) -> usize {
        self.first_window + k * self.hop
    }

    /// Window `k` clipped to a stream of `total` frames.
    pub fn window_at(&self, k: usize, total: usize) -> SegmentWindow {
        let end = self.window_end(k).min(total);
        let start = self.window_end(k).saturating_sub(self.window).min(end);
        let emit_start = (k * self.hop).min(end);
        SegmentWindow { index: k, start, end, emit_start, emit_end: (emit_start + self.hop).min(end) }
    }
}

/// One generation window with the part of it that is emitted when it fuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentWindow {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub emit_start: usize,
    pub emit_end: usize,
}

impl SegmentWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// All windows for a stream of `total` frames.
pub fn plan_segments(total: usize, plan: &SegmentPlan) -> Result<Vec<SegmentWindow>> {
    plan.validate()?;
    if total == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        out.push(plan.window_at(k, total));
        if plan.window_end(k) >= total {
            return Ok(out);
        }
        k += 1;
    }
}
