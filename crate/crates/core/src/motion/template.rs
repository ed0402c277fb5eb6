use super::{CanonicalKeypoints, NUM_KEYPOINTS};

/// Semantic names of the template keypoints. `left`/`right` are the subject's
/// sides on the -x/+x half of the face.
pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "nose_tip",
    "nose_bridge",
    "forehead",
    "chin",
    "cheek_left",
    "cheek_right",
    "brow_outer_left",
    "brow_outer_right",
    "brow_inner_left",
    "brow_inner_right",
    "eyelid_upper_left",
    "eyelid_upper_right",
    "eyelid_lower_left",
    "eyelid_lower_right",
    "mouth_corner_left",
    "mouth_corner_right",
    "lip_upper",
    "jaw_left",
    "jaw_right",
    "lip_lower",
    "throat",
];

pub fn keypoint_name(index: usize) -> Option<&'static str> {
    KEYPOINT_NAMES.get(index).copied()
}

/// Mirror-symmetric neutral face used as the default identity. Image-style
/// axes: x to the subject's right, y down, z toward the camera.
pub fn default_template() -> CanonicalKeypoints {
    CanonicalKeypoints {
        points: [
            [0.0, 0.0, 0.12],
            [0.0, -0.15, 0.06],
            [0.0, -0.45, 0.0],
            [0.0, 0.45, 0.02],
            [-0.35, 0.05, -0.05],
            [0.35, 0.05, -0.05],
            [-0.28, -0.28, -0.02],
            [0.28, -0.28, -0.02],
            [-0.1, -0.3, 0.03],
            [0.1, -0.3, 0.03],
            [-0.18, -0.18, 0.0],
            [0.18, -0.18, 0.0],
            [-0.18, -0.12, 0.0],
            [0.18, -0.12, 0.0],
            [-0.15, 0.22, 0.05],
            [0.15, 0.22, 0.05],
            [0.0, 0.17, 0.09],
            [-0.32, 0.3, -0.08],
            [0.32, 0.3, -0.08],
            [0.0, 0.27, 0.08],
            [0.0, 0.6, -0.1],
        ],
    }
}
