mod common;

use common::*;
use headmotion::conditioning::synth::MOUTH_OPEN_DIM;
use headmotion::motion::ControlSpec;
use headmotion::service::{run_session, Client, ControlMessage, ErrorCode, Message, ServerConfig, StreamMode};
use headmotion::streaming::features::HOP;
use std::thread;
use std::time::Duration;

const WAIT: Duration = Duration::from_secs(60);

#[test]
fn golden_fixtures_round_trip() {
    assert_eq!(check_golden().unwrap(), 8);
}

#[test]
fn session_of_3_2_seconds_emits_80_frames() {
    let server = start_server(ServerConfig::default());
    for mode in [StreamMode::Online, StreamMode::Offline] {
        let cfg = headmotion::service::SessionConfig { mode, steps: Some(10), ..Default::default() };
        let t = run_session(server.addr, cfg, &speech(80, 1), 1_000, false, vec![], WAIT).unwrap();
        let idx: Vec<u64> = t.frames().iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, (0..80).collect::<Vec<u64>>(), "{mode:?}");
        assert_eq!(t.ended(), Some(80));
        assert!(t.errors().is_empty());
        assert!(t.frames().iter().all(|f| f.motion.len() == 265 && f.keypoints.len() == 21));
    }
}

#[test]
fn control_update_applies_from_the_next_boundary() {
    let server = start_server(ServerConfig::default());
    let audio = speech(100, 2);
    let base = run_session(server.addr, online(4), &audio, 640, false, vec![], WAIT).unwrap();
    let update = ControlMessage { control: Some(ControlSpec::default().with_offset(MOUTH_OPEN_DIM, 0.1)), ..Default::default() };
    // sent after 40 frames of audio have gone out; online boundaries fall every 5 frames
    let ctl = run_session(server.addr, online(4), &audio, 640, false, vec![(40 * HOP, update)], WAIT).unwrap();
    let (a, b) = (base.frames(), ctl.frames());
    assert_eq!(a.len(), 100);
    assert_eq!(b.len(), 100);
    for (fa, fb) in a.iter().zip(&b) {
        for d in 0..265 {
            if fa.frame_index >= 40 && d == MOUTH_OPEN_DIM {
                assert!((fb.motion[d] - fa.motion[d] - 0.1).abs() < 1e-12, "frame {}", fa.frame_index);
            } else {
                assert_eq!(fa.motion[d].to_bits(), fb.motion[d].to_bits(), "frame {} dim {d}", fa.frame_index);
            }
        }
    }
}

#[test]
fn concurrent_identical_sessions_are_byte_identical() {
    let server = start_server(ServerConfig::default());
    let audio = speech(60, 3);
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let (addr, audio) = (server.addr, audio.clone());
            thread::spawn(move || run_session(addr, online(9), &audio, 800, false, vec![], WAIT).unwrap())
        })
        .collect();
    let t: Vec<_> = runs.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(t[0].frames().len(), 60);
    assert_eq!(t[0].frame_bytes(), t[1].frame_bytes());
}

#[test]
fn malformed_messages_get_errors_and_the_session_survives() {
    let server = start_server(ServerConfig::default());
    let mut c = Client::connect(server.addr).unwrap();
    c.audio(&[0.0; 10]).unwrap();
    let r = c.recv_timeout(WAIT).unwrap().unwrap();
    assert!(matches!(r.message, Message::Error { code: ErrorCode::NotStarted, .. }));
    c.start(online(1)).unwrap();
    c.send_raw(b"{not json").unwrap();
    c.send_raw(br#"{"type":"audio.chunk","pcm":"AA=="}"#).unwrap();
    c.send_raw(br#"{"type":"control.update","control":{"dim_offsets":{"99":1.0}}}"#).unwrap();
    c.start(online(1)).unwrap();
    c.audio(&speech(20, 5)).unwrap();
    c.end().unwrap();
    let mut codes = Vec::new();
    let mut frames = 0;
    let mut end = None;
    while let Some(r) = c.recv_timeout(WAIT).unwrap() {
        match r.message {
            Message::Error { code, .. } => codes.push(code),
            Message::MotionFrame(_) => frames += 1,
            Message::SessionEnd { frames } => {
                end = frames;
                break;
            }
            _ => {}
        }
    }
    assert_eq!(codes, vec![ErrorCode::BadMessage, ErrorCode::BadMessage, ErrorCode::InvalidControl, ErrorCode::AlreadyStarted]);
    assert_eq!((frames, end), (20, Some(20)));
}

#[test]
fn invalid_session_config_is_rejected() {
    let server = start_server(ServerConfig::default());
    let mut c = Client::connect(server.addr).unwrap();
    c.start(headmotion::service::SessionConfig { steps: Some(7), ..Default::default() }).unwrap();
    let r = c.recv_timeout(WAIT).unwrap().unwrap();
    assert!(matches!(r.message, Message::Error { code: ErrorCode::InvalidConfig, .. }), "{r:?}");
    c.start(headmotion::service::SessionConfig { fps: 30.0, ..Default::default() }).unwrap();
    let r = c.recv_timeout(WAIT).unwrap().unwrap();
    assert!(matches!(r.message, Message::Error { code: ErrorCode::InvalidConfig, .. }));
}

#[test]
fn sessions_beyond_the_limit_are_refused() {
    let server = start_server(ServerConfig { max_sessions: 1, ..Default::default() });
    let mut first = Client::connect(server.addr).unwrap();
    first.start(online(0)).unwrap();
    thread::sleep(Duration::from_millis(100));
    let second = Client::connect(server.addr).unwrap();
    let r = second.recv_timeout(WAIT).unwrap().unwrap();
    assert!(matches!(r.message, Message::Error { code: ErrorCode::Overloaded, .. }));
    drop(second);
    first.audio(&speech(10, 1)).unwrap();
    first.end().unwrap();
    let mut n = 0;
    while let Some(r) = first.recv_timeout(WAIT).unwrap() {
        if let Message::SessionEnd { frames } = r.message {
            n = frames.unwrap();
            break;
        }
    }
    assert_eq!(n, 10);
}

#[test]
fn simulated_realtime_session_reports_low_ffd() {
    let server = start_server(ServerConfig { simulate_latency: Some("table3".into()), ..Default::default() });
    let t = run_session(server.addr, online(2), &speech(50, 8), 320, true, vec![], WAIT).unwrap();
    assert_eq!(t.frames().len(), 50);
    let stats = t.stats();
    let ffd = stats.last().unwrap().ffd_ms.unwrap();
    assert!(ffd < 400.0, "ffd {ffd} ms");
    assert_eq!(stats.first().unwrap().ffd_ms, Some(ffd));
    assert!(stats.last().unwrap().rtf < 1.0);
}
