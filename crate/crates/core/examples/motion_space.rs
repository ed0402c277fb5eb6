//! Composes posed keypoints from an identity and a motion frame, packs the
//! frame into its 265-dim vector and mirrors it.
//!
//! `cargo run --example motion_space`

use headmotion::motion::{
    compose_keypoints, default_template, hflip_vector, keypoint_name, pack_motion, unpack_motion, Euler, MotionFrame,
    ScaleMode, SymmetryPairing,
};

fn main() -> headmotion::Result<()> {
    let c = default_template();
    let mut m = MotionFrame { euler: Euler::new(15.0, -5.0, 3.0), translation: [0.02, 0.0, 0.0], ..Default::default() };
    m.delta[15][0] = 0.05;

    let x = compose_keypoints(&c, &m, ScaleMode::Apply)?;
    for k in [0, 15, 16] {
        let [px, py] = x.project_2d()[k];
        println!("{:<20} canonical {:?} posed ({px:+.4}, {py:+.4})", keypoint_name(k).unwrap_or("?"), c.points[k]);
    }

    let v = pack_motion(&m)?;
    let back = unpack_motion(v.as_slice())?;
    println!("packed {} dims, euler round trip {:?}", v.as_slice().len(), back.euler.as_array());

    let pairing = SymmetryPairing::default();
    let flipped = unpack_motion(&hflip_vector(v.as_slice(), &pairing)?)?;
    println!("mirrored euler {:?}, translation x {:+.3}", flipped.euler.as_array(), flipped.translation[0]);
    Ok(())
}
