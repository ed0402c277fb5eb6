//! Blocking client for the session protocol. Incoming messages are read on
//! a background thread so sending audio never waits on unread frames.

use super::protocol::{read_frame, write_message, ControlMessage, FrameMessage, Message, SessionConfig, StatsMessage};
use crate::error::{Error, Result};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

/// A message as received, with its exact bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub raw: Vec<u8>,
    pub message: Message,
}

pub struct Client {
    stream: TcpStream,
    incoming: Receiver<Result<Received>>,
    reader: Option<JoinHandle<()>>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut rd = stream.try_clone()?;
        let (tx, incoming) = channel();
        let reader = thread::spawn(move || loop {
            let item = match read_frame(&mut rd) {
                Ok(Some(raw)) => Message::from_json(&raw).map(|message| Received { raw, message }),
                Ok(None) => return,
                Err(e) => Err(e),
            };
            let failed = item.is_err();
            if tx.send(item).is_err() || failed {
                return;
            }
        });
        Ok(Self { stream, incoming, reader: Some(reader) })
    }

    pub fn send(&mut self, msg: &Message) -> Result<()> {
        write_message(&mut self.stream, msg)
    }

    /// Sends raw bytes as one frame, for exercising malformed input.
    pub fn send_raw(&mut self, body: &[u8]) -> Result<()> {
        super::protocol::write_frame(&mut self.stream, body)
    }

    pub fn start(&mut self, cfg: SessionConfig) -> Result<()> {
        self.send(&Message::SessionStart(cfg))
    }

    pub fn audio(&mut self, samples: &[f32]) -> Result<()> {
        self.send(&Message::audio(samples))
    }

    pub fn control(&mut self, update: ControlMessage) -> Result<()> {
        self.send(&Message::ControlUpdate(update))
    }

    pub fn end(&mut self) -> Result<()> {
        self.send(&Message::SessionEnd { frames: None })
    }

    /// Next message, or `None` once the server has closed the connection.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<Received>> {
        match self.incoming.recv_timeout(timeout) {
            Ok(r) => r.map(Some),
            Err(RecvTimeoutError::Disconnected) => Ok(None),
            Err(RecvTimeoutError::Timeout) => Err(Error::NoOutput(format!("no message within {timeout:?}"))),
        }
    }

    /// Messages that have already arrived.
    pub fn drain(&self) -> Result<Vec<Received>> {
        let mut out = Vec::new();
        while let Ok(r) = self.incoming.try_recv() {
            out.push(r?);
        }
        Ok(out)
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
        if let Some(r) = self.reader.take() {
            let _ = r.join();
        }
    }
}

/// Everything a session sent back, in order.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub messages: Vec<Received>,
}

impl Transcript {
    pub fn frames(&self) -> Vec<&FrameMessage> {
        self.messages
            .iter()
            .filter_map(|r| match &r.message {
                Message::MotionFrame(f) => Some(f),
                _ => None,
            })
            .collect()
    }

    pub fn frame_bytes(&self) -> Vec<&[u8]> {
        self.messages.iter().filter(|r| matches!(r.message, Message::MotionFrame(_))).map(|r| &r.raw[..]).collect()
    }

    pub fn stats(&self) -> Vec<&StatsMessage> {
        self.messages
            .iter()
            .filter_map(|r| match &r.message {
                Message::Stats(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    pub fn errors(&self) -> Vec<&Message> {
        self.messages.iter().map(|r| &r.message).filter(|m| matches!(m, Message::Error { .. })).collect()
    }

    pub fn ended(&self) -> Option<u64> {
        self.messages.iter().find_map(|r| match r.message {
            Message::SessionEnd { frames } => frames,
            _ => None,
        })
    }
}

/// Plays one whole session: audio in `chunk` sample pieces (paced in real
/// time when `realtime`), with each control sent once `at_sample` samples
/// have gone out.
pub fn run_session(
    addr: impl ToSocketAddrs,
    cfg: SessionConfig,
    audio: &[f32],
    chunk: usize,
    realtime: bool,
    controls: Vec<(usize, ControlMessage)>,
    timeout: Duration,
) -> Result<Transcript> {
    if chunk == 0 {
        return Err(Error::Config("chunk must be at least one sample".into()));
    }
    let mut client = Client::connect(addr)?;
    client.start(cfg)?;
    let mut pending = controls;
    pending.sort_by_key(|c| c.0);
    let mut pending = pending.into_iter().peekable();
    let t0 = Instant::now();
    let mut sent = 0usize;
    for piece in audio.chunks(chunk) {
        while let Some((_, c)) = pending.next_if(|(at, _)| *at <= sent) {
            client.control(c)?;
        }
        if realtime {
            let due = Duration::from_secs_f64((sent + piece.len()) as f64 / 16_000.0);
            if let Some(wait) = due.checked_sub(t0.elapsed()) {
                thread::sleep(wait);
            }
        }
        client.audio(piece)?;
        sent += piece.len();
    }
    for (_, c) in pending {
        client.control(c)?;
    }
    client.end()?;
    let mut transcript = Transcript::default();
    loop {
        match client.recv_timeout(timeout)? {
            None => break,
            Some(r) => {
                let done = matches!(r.message, Message::SessionEnd { .. })
                    || matches!(r.message, Message::Error { code: super::protocol::ErrorCode::Internal, .. });
                transcript.messages.push(r);
                if done {
                    break;
                }
            }
        }
    }
    Ok(transcript)
}
