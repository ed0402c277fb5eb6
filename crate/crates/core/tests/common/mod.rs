#![allow(dead_code)]

use headmotion::conditioning::{synth_speech, EmotionLabel, EyeState};
use headmotion::diffusion::{untrained_model, DenoiserConfig};
use headmotion::motion::{ControlSpec, MagnitudeClamp};
use headmotion::service::{
    ControlMessage, Engine, ErrorCode, FrameMessage, Message, Server, ServerConfig, ServerHandle, SessionConfig,
    StatsMessage, StreamMode,
};
use headmotion::streaming::features::HOP;
use std::collections::BTreeMap;
use std::path::PathBuf;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/protocol")
}

/// Every protocol fixture with the value it must decode to.
pub fn golden_messages() -> Vec<(&'static str, Message)> {
    let mut offsets = BTreeMap::new();
    offsets.insert(45, -0.05);
    offsets.insert(58, 0.1);
    vec![
        (
            "session_start.json",
            Message::SessionStart(SessionConfig {
                fps: 25.0,
                mode: StreamMode::Online,
                steps: Some(10),
                seed: 7,
                identity: None,
                m_ref: None,
                emotion: EmotionLabel::new(3).unwrap(),
                eyes: Some(EyeState { aspect_left: 0.3, aspect_right: 0.25, pupil_left: [0.1, 0.0], pupil_right: [0.1, -0.05] }),
                control: Some(ControlSpec::default().with_offset(58, 0.1)),
                flags: Some(Default::default()),
            }),
        ),
        ("audio_chunk.json", Message::AudioChunk { pcm: "AAD/fwCA".into() }),
        (
            "control_update.json",
            Message::ControlUpdate(ControlMessage {
                emotion: Some(EmotionLabel::new(5).unwrap()),
                eyes: None,
                control: Some(ControlSpec {
                    magnitude_clamp: Some(MagnitudeClamp::Uniform(0.05)),
                    dim_offsets: offsets,
                    ..Default::default()
                }),
                at_frame: Some(40),
            }),
        ),
        (
            "motion_frame.json",
            Message::MotionFrame(FrameMessage {
                frame_index: 12,
                motion: vec![0.0, -0.015, 1.0],
                keypoints: vec![[0.0, -0.15], [0.25, 0.5]],
            }),
        ),
        ("stats.json", Message::Stats(StatsMessage { frames_emitted: 80, rtf: 0.807, ffd_ms: Some(280.5) })),
        ("error.json", Message::error(ErrorCode::NotStarted, "audio before session.start")),
        ("session_end.json", Message::SessionEnd { frames: Some(80) }),
        ("session_end_client.json", Message::SessionEnd { frames: None }),
    ]
}

/// Decodes each fixture, compares it with the expected value and checks that
/// encoding reproduces the file byte for byte.
pub fn check_golden() -> Result<usize, String> {
    let all = golden_messages();
    for (file, expected) in &all {
        let text = std::fs::read_to_string(fixture_dir().join(file)).map_err(|e| format!("{file}: {e}"))?;
        let text = text.trim_end();
        let got = Message::from_json(text.as_bytes()).map_err(|e| format!("{file}: {e}"))?;
        if &got != expected {
            return Err(format!("{file}: decoded {got:?}"));
        }
        let back = String::from_utf8(got.to_json().unwrap()).unwrap();
        if back != text {
            return Err(format!("{file}: re-encoded as {back}"));
        }
    }
    let kinds: std::collections::BTreeSet<&str> = all.iter().map(|(_, m)| m.kind()).collect();
    if kinds.len() != 7 {
        return Err(format!("fixtures cover {} message types", kinds.len()));
    }
    Ok(all.len())
}

pub fn start_server(cfg: ServerConfig) -> ServerHandle {
    let model = untrained_model(DenoiserConfig::tiny(), 3).unwrap();
    let engine = Engine::new(model, ServerConfig { bind: "127.0.0.1:0".into(), ..cfg }).unwrap();
    Server::bind(engine).unwrap().spawn().unwrap()
}

/// `frames` worth of synthetic speech.
pub fn speech(frames: usize, seed: u64) -> Vec<f32> {
    synth_speech(seed, frames * HOP)
}

pub fn online(seed: u64) -> SessionConfig {
    SessionConfig { seed, steps: Some(10), mode: StreamMode::Online, ..Default::default() }
}
