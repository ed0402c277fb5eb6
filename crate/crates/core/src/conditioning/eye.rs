use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MAX_ASPECT: f64 = 1.5;

/// Per-frame eye openness and gaze.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeState {
    pub aspect_left: f64,
    pub aspect_right: f64,
    pub pupil_left: [f64; 2],
    pub pupil_right: [f64; 2],
}

impl Default for EyeState {
    /// Open eyes looking straight ahead.
    fn default() -> Self {
        Self { aspect_left: 0.3, aspect_right: 0.3, pupil_left: [0.0; 2], pupil_right: [0.0; 2] }
    }
}

impl EyeState {
    pub const DIMS: usize = 6;

    pub fn to_array(&self) -> [f64; Self::DIMS] {
        [
            self.aspect_left,
            self.aspect_right,
            self.pupil_left[0],
            self.pupil_left[1],
            self.pupil_right[0],
            self.pupil_right[1],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("eye state contains non-finite values".into()));
        }
        if !(0.0..=MAX_ASPECT).contains(&self.aspect_left) || !(0.0..=MAX_ASPECT).contains(&self.aspect_right) {
            return Err(Error::Range(format!("eye aspect outside [0, {MAX_ASPECT}]")));
        }
        if v[2..].iter().any(|p| p.abs() > 1.0) {
            return Err(Error::Range("pupil position outside [-1, 1]".into()));
        }
        Ok(())
    }

    /// Mirror image: sides swap and horizontal gaze changes sign.
    pub fn mirrored(&self) -> Self {
        Self {
            aspect_left: self.aspect_right,
            aspect_right: self.aspect_left,
            pupil_left: [-self.pupil_right[0], self.pupil_right[1]],
            pupil_right: [-self.pupil_left[0], self.pupil_left[1]],
        }
    }
}

/// Six contour points around one eye plus the pupil center, in 2-D image
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeLandmarks {
    pub contour: [[f64; 2]; 6],
    pub pupil: [f64; 2],
}

/// Returns `(aspect, relative pupil)` for one eye.
fn single_eye(lm: &EyeLandmarks) -> Result<(f64, [f64; 2])> {
    if lm.contour.iter().flatten().chain(lm.pupil.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("eye landmarks must be finite".into()));
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in &lm.contour {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
        cx += p[0] / 6.0;
        cy += p[1] / 6.0;
    }
    let width = xmax - xmin;
    if width <= 0.0 {
        return Err(Error::DegenerateGeometry("eye contour has zero width".into()));
    }
    let aspect = ((ymax - ymin) / width).min(MAX_ASPECT);
    let half = width / 2.0;
    let pupil = [((lm.pupil[0] - cx) / half).clamp(-1.0, 1.0), ((lm.pupil[1] - cy) / half).clamp(-1.0, 1.0)];
    Ok((aspect, pupil))
}

pub fn compute_eye_state(left: &EyeLandmarks, right: &EyeLandmarks) -> Result<EyeState> {
    let (aspect_left, pupil_left) = single_eye(left)?;
    let (aspect_right, pupil_right) = single_eye(right)?;
    Ok(EyeState { aspect_left, aspect_right, pupil_left, pupil_right })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(cx: f64, cy: f64, half: f64) -> [[f64; 2]; 6] {
        [
            [cx - half, cy],
            [cx - half, cy - half],
            [cx + half, cy - half],
            [cx + half, cy],
            [cx + half, cy + half],
            [cx - half, cy + half],
        ]
    }

    #[test]
    fn square_contour_centered_pupil() {
        let lm = EyeLandmarks { contour: square(1.0, 2.0, 0.5), pupil: [1.0, 2.0] };
        let e = compute_eye_state(&lm, &lm).unwrap();
        assert!((e.aspect_left - 1.0).abs() < 1e-12);
        assert_eq!(e.pupil_right, [0.0, 0.0]);
    }

    #[test]
    fn collapsed_contour_is_closed() {
        let mut c = square(0.0, 0.0, 1.0);
        for p in c.iter_mut() {
            p[1] = 0.0;
        }
        let lm = EyeLandmarks { contour: c, pupil: [0.0, 0.0] };
        assert_eq!(compute_eye_state(&lm, &lm).unwrap().aspect_left, 0.0);
    }

    #[test]
    fn zero_width_is_degenerate() {
        let lm = EyeLandmarks { contour: [[0.0, 0.0], [0.0, 1.0], [0.0, 2.0], [0.0, 3.0], [0.0, 4.0], [0.0, 5.0]], pupil: [0.0; 2] };
        assert!(matches!(compute_eye_state(&lm, &lm), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn almond_fixture_matches_hand_computation() {
        // corners at x=0 and x=4, lids at y=-0.6 / +0.4
        let contour = [[0.0, 0.0], [1.0, -0.6], [3.0, -0.5], [4.0, 0.0], [3.0, 0.4], [1.0, 0.3]];
        let lm = EyeLandmarks { contour, pupil: [2.5, 0.1] };
        let right = EyeLandmarks { contour, pupil: [9.0, 0.0] };
        let e = compute_eye_state(&lm, &right).unwrap();
        assert!((e.aspect_left - 1.0 / 4.0).abs() < 1e-9);
        let (cx, cy) = (12.0 / 6.0, -0.4 / 6.0);
        assert!((e.pupil_left[0] - (2.5 - cx) / 2.0).abs() < 1e-9);
        assert!((e.pupil_left[1] - (0.1 - cy) / 2.0).abs() < 1e-9);
        assert_eq!(e.pupil_right[0], 1.0);
    }

    #[test]
    fn aspect_invariant_under_similarity() {
        let contour = [[0.0, 0.0], [1.0, -0.6], [3.0, -0.5], [4.0, 0.0], [3.0, 0.4], [1.0, 0.3]];
        let lm = EyeLandmarks { contour, pupil: [2.5, 0.1] };
        let base = compute_eye_state(&lm, &lm).unwrap();
        let mut moved = lm;
        for p in moved.contour.iter_mut().chain(std::iter::once(&mut moved.pupil)) {
            p[0] = 3.7 * p[0] - 11.0;
            p[1] = 3.7 * p[1] + 2.0;
        }
        let e = compute_eye_state(&moved, &moved).unwrap();
        assert!((e.aspect_left - base.aspect_left).abs() < 1e-12);
        assert!((e.pupil_left[0] - base.pupil_left[0]).abs() < 1e-12);
    }

    #[test]
    fn mirrored_twice_is_identity() {
        let e = EyeState { aspect_left: 0.2, aspect_right: 0.35, pupil_left: [0.3, -0.1], pupil_right: [-0.5, 0.2] };
        assert_eq!(e.mirrored().mirrored(), e);
        assert!(e.validate().is_ok());
    }
}
