//! TCP session server. Each connection carries at most one session, and each
//! session runs its own pipeline over the shared, read-only model.

use super::protocol::{
    decode_pcm, read_frame, write_message, ControlMessage, ErrorCode, FrameMessage, Message, SessionConfig,
    StatsMessage, StreamMode,
};
use crate::diffusion::MotionModel;
use crate::error::{Error, Result};
use crate::motion::{default_template, pack_motion, MotionFrame, MotionVector};
use crate::streaming::features::HOP;
use crate::streaming::{
    AudioMessage, ControlUpdate, ModelGenerator, Pipeline, PipelineConfig, SessionInputs, SimulatedLatency,
};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{Sender, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub max_sessions: usize,
    pub queue_capacity: usize,
    /// Per-step stage latencies `a,b,c` in ms, or `table3`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate_latency: Option<String>,
    /// A stats message goes out every this many frames.
    pub stats_every: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:7878".into(), max_sessions: 8, queue_capacity: 4, simulate_latency: None, stats_every: 25 }
    }
}

impl ServerConfig {
    pub fn latency(&self) -> Result<Option<SimulatedLatency>> {
        self.simulate_latency.as_deref().map(SimulatedLatency::parse).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_sessions == 0 || self.queue_capacity == 0 || self.stats_every == 0 {
            return Err(Error::Config("max_sessions, queue_capacity and stats_every must be positive".into()));
        }
        self.latency()?;
        Ok(())
    }
}

/// What sessions share: the model and server settings.
#[derive(Debug, Clone)]
pub struct Engine {
    pub model: Arc<MotionModel>,
    pub config: ServerConfig,
}

impl Engine {
    pub fn new(model: MotionModel, config: ServerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { model: Arc::new(model), config })
    }

    /// Checks a session config against the engine and resolves defaults.
    pub fn session_setup(&self, cfg: &SessionConfig, stream_id: u64) -> Result<(SessionInputs, PipelineConfig)> {
        if cfg.fps != 25.0 {
            return Err(Error::Config(format!("fps must be 25, got {}", cfg.fps)));
        }
        if let Some(flags) = cfg.flags {
            if flags != self.model.flags {
                return Err(Error::Config(format!("flags {flags:?} do not match the checkpoint's {:?}", self.model.flags)));
            }
        }
        let mut p = match cfg.mode {
            StreamMode::Online => PipelineConfig::online(),
            StreamMode::Offline => PipelineConfig::offline(),
        };
        if let Some(steps) = cfg.steps {
            self.model.schedule.ladder(steps)?;
            p.steps = steps;
        }
        p.seed = cfg.seed;
        p.queue_capacity = self.config.queue_capacity;
        p.latency = self.config.latency()?;
        p.stream_id = stream_id;
        let m_ref = match &cfg.m_ref {
            Some(v) => MotionVector::from_slice(v)?,
            None => pack_motion(&MotionFrame::default())?,
        };
        if m_ref.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("m_ref contains non-finite values".into()));
        }
        let inputs = SessionInputs {
            c_ref: cfg.identity.unwrap_or_else(default_template),
            m_ref,
            emotion: cfg.emotion,
            eyes: cfg.eyes.unwrap_or_default(),
            control: cfg.control.clone().unwrap_or_default(),
        };
        inputs.eyes.validate()?;
        inputs.control.validate()?;
        Ok((inputs, p))
    }
}

type Writer = Arc<Mutex<TcpStream>>;

fn send(w: &Writer, msg: &Message) -> Result<()> {
    let mut s = w.lock().map_err(|_| Error::State("writer lock poisoned".into()))?;
    write_message(&mut *s, msg)
}

struct Live {
    audio: SyncSender<AudioMessage>,
    controls: Sender<ControlUpdate>,
    received_samples: u64,
    first_audio_ns: Arc<AtomicU64>,
    epoch: Instant,
    forwarder: JoinHandle<()>,
}

const NO_AUDIO: u64 = u64::MAX;

/// Streams pipeline output to the client, then reports the final stats.
fn forward(pipeline: Pipeline, writer: Writer, first_audio_ns: Arc<AtomicU64>, stats_every: u64) {
    let meter = pipeline.meter();
    let mut ffd_ms = None;
    let mut count = 0u64;
    let stats = |count: u64, ffd_ms: Option<f64>| {
        Message::Stats(StatsMessage { frames_emitted: count, rtf: meter.rolling_rtf().unwrap_or(0.0), ffd_ms })
    };
    let mut ok = true;
    for f in pipeline.frames.iter() {
        if !ok {
            continue;
        }
        let frame = Message::MotionFrame(FrameMessage {
            frame_index: f.frame_index,
            motion: f.motion,
            keypoints: f.keypoints.to_vec(),
        });
        ok = send(&writer, &frame).is_ok();
        count += 1;
        if ffd_ms.is_none() {
            let a = first_audio_ns.load(Ordering::Acquire);
            if a != NO_AUDIO {
                ffd_ms = Some(f.t_mono_ns.saturating_sub(a) as f64 / 1e6);
            }
            ok = ok && send(&writer, &stats(count, ffd_ms)).is_ok();
        } else if count.is_multiple_of(stats_every) {
            ok = ok && send(&writer, &stats(count, None)).is_ok();
        }
    }
    match pipeline.join() {
        Ok(_) => {
            let _ = send(&writer, &stats(count, ffd_ms));
            let _ = send(&writer, &Message::SessionEnd { frames: Some(count) });
        }
        Err(e) => {
            warn!("session pipeline failed: {e}");
            let _ = send(&writer, &Message::error(ErrorCode::Internal, e.to_string()));
        }
    }
}

fn error_code(e: &Error) -> ErrorCode {
    match e {
        Error::Protocol(_) | Error::Json(_) => ErrorCode::BadMessage,
        _ => ErrorCode::InvalidConfig,
    }
}

fn finish(live: Option<Live>) {
    if let Some(l) = live {
        let _ = l.audio.send(AudioMessage::End);
        drop(l.audio);
        let _ = l.forwarder.join();
    }
}

fn handle_connection(stream: TcpStream, engine: Engine, stream_id: u64) -> Result<()> {
    let writer: Writer = Arc::new(Mutex::new(stream.try_clone()?));
    let mut reader = stream;
    let mut live: Option<Live> = None;
    loop {
        let body = match read_frame(&mut reader) {
            Ok(Some(b)) => b,
            Ok(None) => break,
            Err(e) => {
                debug!("connection {stream_id}: {e}");
                break;
            }
        };
        let msg = match Message::from_json(&body) {
            Ok(m) => m,
            Err(e) => {
                send(&writer, &Message::error(ErrorCode::BadMessage, e.to_string()))?;
                continue;
            }
        };
        match msg {
            Message::SessionStart(cfg) => {
                if live.is_some() {
                    send(&writer, &Message::error(ErrorCode::AlreadyStarted, "session already started"))?;
                    continue;
                }
                let (inputs, pcfg) = match engine.session_setup(&cfg, stream_id) {
                    Ok(v) => v,
                    Err(e) => {
                        send(&writer, &Message::error(ErrorCode::InvalidConfig, e.to_string()))?;
                        continue;
                    }
                };
                let generator = Box::new(ModelGenerator::new(engine.model.clone()));
                let pipeline = Pipeline::spawn(generator, inputs, pcfg)?;
                let first_audio_ns = Arc::new(AtomicU64::new(NO_AUDIO));
                let (audio, controls, epoch) = (pipeline.audio.clone(), pipeline.controls.clone(), pipeline.epoch());
                let (w, fa, every) = (writer.clone(), first_audio_ns.clone(), engine.config.stats_every);
                let forwarder = thread::spawn(move || forward(pipeline, w, fa, every));
                info!("session {stream_id} started");
                live = Some(Live { audio, controls, received_samples: 0, first_audio_ns, epoch, forwarder });
            }
            Message::AudioChunk { pcm } => {
                let Some(l) = live.as_mut() else {
                    send(&writer, &Message::error(ErrorCode::NotStarted, "audio before session.start"))?;
                    continue;
                };
                let samples = match decode_pcm(&pcm) {
                    Ok(s) => s,
                    Err(e) => {
                        send(&writer, &Message::error(error_code(&e), e.to_string()))?;
                        continue;
                    }
                };
                if samples.is_empty() {
                    continue;
                }
                let _ = l.first_audio_ns.compare_exchange(
                    NO_AUDIO,
                    l.epoch.elapsed().as_nanos() as u64,
                    Ordering::AcqRel,
                    Ordering::Acquire,
                );
                l.received_samples += samples.len() as u64;
                // blocks while the pipeline is full, which stalls this socket
                if l.audio.send(AudioMessage::Pcm(samples)).is_err() {
                    break;
                }
            }
            Message::ControlUpdate(ControlMessage { emotion, eyes, control, at_frame }) => {
                let Some(l) = live.as_ref() else {
                    send(&writer, &Message::error(ErrorCode::NotStarted, "control before session.start"))?;
                    continue;
                };
                let received = l.received_samples / HOP as u64;
                let update = ControlUpdate { emotion, eyes, control, effective_frame: at_frame.unwrap_or(0).max(received) };
                if let Err(e) = update.validate() {
                    send(&writer, &Message::error(ErrorCode::InvalidControl, e.to_string()))?;
                    continue;
                }
                let _ = l.controls.send(update);
            }
            Message::SessionEnd { .. } => {
                if live.is_none() {
                    send(&writer, &Message::error(ErrorCode::NotStarted, "no session to end"))?;
                    continue;
                }
                finish(live.take());
                return Ok(());
            }
            other => {
                send(&writer, &Message::error(ErrorCode::BadMessage, format!("{} is server-to-client only", other.kind())))?;
            }
        }
    }
    finish(live.take());
    Ok(())
}

/// Listening server; [`Server::spawn`] runs it on a background thread.
pub struct Server {
    listener: TcpListener,
    engine: Engine,
    active: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

struct SessionSlot(Arc<AtomicUsize>);

impl Drop for SessionSlot {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Server {
    pub fn bind(engine: Engine) -> Result<Self> {
        let listener = TcpListener::bind(&engine.config.bind)?;
        Ok(Self { listener, engine, active: Arc::new(AtomicUsize::new(0)), shutdown: Arc::new(AtomicBool::new(false)) })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until shut down.
    pub fn run(self) -> Result<()> {
        let mut next_id = 0u64;
        for conn in self.listener.incoming() {
            if self.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let _ = stream.set_nodelay(true);
            if self.active.fetch_add(1, Ordering::SeqCst) >= self.engine.config.max_sessions {
                self.active.fetch_sub(1, Ordering::SeqCst);
                let w: Writer = Arc::new(Mutex::new(stream));
                let _ = send(&w, &Message::error(ErrorCode::Overloaded, "too many concurrent sessions"));
                continue;
            }
            let slot = SessionSlot(self.active.clone());
            let engine = self.engine.clone();
            let id = next_id;
            next_id += 1;
            thread::spawn(move || {
                let _slot = slot;
                if let Err(e) = handle_connection(stream, engine, id) {
                    warn!("connection {id} ended with error: {e}");
                }
            });
        }
        Ok(())
    }

    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let shutdown = self.shutdown.clone();
        let thread = thread::spawn(move || {
            if let Err(e) = self.run() {
                warn!("server stopped: {e}");
            }
        });
        Ok(ServerHandle { addr, shutdown, thread: Some(thread) })
    }
}
