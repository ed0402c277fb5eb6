//! Starts a session server, streams speech to it as a client and prints the
//! frames and stats that come back.
//!
//! `cargo run --example session_server`

use headmotion::conditioning::synth_speech;
use headmotion::diffusion::{untrained_model, DenoiserConfig};
use headmotion::motion::ControlSpec;
use headmotion::service::{run_session, ControlMessage, Engine, Server, ServerConfig, SessionConfig};
use std::time::Duration;

fn main() -> headmotion::Result<()> {
    let model = untrained_model(DenoiserConfig::default(), 1)?;
    let cfg = ServerConfig { bind: "127.0.0.1:0".into(), simulate_latency: Some("table3".into()), ..Default::default() };
    let server = Server::bind(Engine::new(model, cfg)?)?.spawn()?;
    println!("server on {}", server.addr);

    let audio = synth_speech(4, 16_000 * 3);
    let raise_brows = ControlMessage { control: Some(ControlSpec::default().with_offset(4, 0.05)), ..Default::default() };
    let t = run_session(
        server.addr,
        SessionConfig { seed: 1, ..Default::default() },
        &audio,
        320,
        true,
        vec![(16_000, raise_brows)],
        Duration::from_secs(30),
    )?;
    let frames = t.frames();
    println!("{} frames, last index {}", frames.len(), frames.last().map_or(0, |f| f.frame_index));
    for s in t.stats() {
        println!("stats: {} frames, rtf {:.3}, ffd {:?} ms", s.frames_emitted, s.rtf, s.ffd_ms);
    }
    println!("session.end frames {:?}", t.ended());
    server.stop();
    Ok(())
}
