//! Wire protocol: JSON messages tagged by `type`, each framed by a 4-byte
//! big-endian length.

use crate::conditioning::{ConditionFlags, EmotionLabel, EyeState};
use crate::error::{Error, Result};
use crate::motion::{CanonicalKeypoints, ControlSpec};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use std::io::{ErrorKind, Read, Write};

/// Largest accepted frame body.
pub const MAX_FRAME_BYTES: usize = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    #[default]
    Online,
    Offline,
}

/// Everything a session needs up front. Omitted fields take engine defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub mode: StreamMode,
    /// Denoising steps; 10 online and 50 offline when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<CanonicalKeypoints>,
    /// Packed reference motion; the neutral frame when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_ref: Option<Vec<f64>>,
    #[serde(default = "default_emotion")]
    pub emotion: EmotionLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eyes: Option<EyeState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    /// Must match the checkpoint when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flags: Option<ConditionFlags>,
}

fn default_fps() -> f64 {
    25.0
}

fn default_emotion() -> EmotionLabel {
    EmotionLabel::new(0).expect("class 0 exists")
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            fps: default_fps(),
            mode: StreamMode::Online,
            steps: None,
            seed: 0,
            identity: None,
            m_ref: None,
            emotion: default_emotion(),
            eyes: None,
            control: None,
            flags: None,
        }
    }
}

/// Live change requested by the client. It takes effect at the first segment
/// boundary at or after `at_frame`, and never before the audio already
/// received.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlMessage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<EmotionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eyes: Option<EyeState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_frame: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMessage {
    pub frame_index: u64,
    pub motion: Vec<f64>,
    /// Orthographic 2-D projection of the 21 posed keypoints.
    pub keypoints: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsMessage {
    pub frames_emitted: u64,
    /// Busy time of all stages per second of emitted motion so far.
    pub rtf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffd_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    NotStarted,
    AlreadyStarted,
    InvalidConfig,
    InvalidControl,
    Overloaded,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    #[serde(rename = "session.start")]
    SessionStart(SessionConfig),
    /// Base64 of 16-bit little-endian mono PCM at 16 kHz.
    #[serde(rename = "audio.chunk")]
    AudioChunk { pcm: String },
    #[serde(rename = "control.update")]
    ControlUpdate(ControlMessage),
    #[serde(rename = "motion.frame")]
    MotionFrame(FrameMessage),
    #[serde(rename = "stats")]
    Stats(StatsMessage),
    #[serde(rename = "error")]
    Error { code: ErrorCode, message: String },
    /// From the client: no more audio. From the server: all frames sent.
    #[serde(rename = "session.end")]
    SessionEnd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frames: Option<u64>,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::SessionStart(_) => "session.start",
            Message::AudioChunk { .. } => "audio.chunk",
            Message::ControlUpdate(_) => "control.update",
            Message::MotionFrame(_) => "motion.frame",
            Message::Stats(_) => "stats",
            Message::Error { .. } => "error",
            Message::SessionEnd { .. } => "session.end",
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Message::Error { code, message: message.into() }
    }

    pub fn audio(samples: &[f32]) -> Self {
        Message::AudioChunk { pcm: encode_pcm(samples) }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Protocol(format!("malformed message: {e}")))
    }
}

/// Float samples in `[-1, 1]` to base64 little-endian i16.
pub fn encode_pcm(samples: &[f32]) -> String {
    let bytes: Vec<u8> = samples
        .iter()
        .flat_map(|s| ((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).to_le_bytes())
        .collect();
    STANDARD.encode(bytes)
}

pub fn decode_pcm(b64: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD.decode(b64).map_err(|e| Error::Protocol(format!("audio is not base64: {e}")))?;
    if bytes.len() % 2 != 0 {
        return Err(Error::Protocol(format!("audio payload has odd length {}", bytes.len())));
    }
    Ok(bytes.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0).collect())
}

/// Writes one length-prefixed frame.
pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> Result<()> {
    if body.len() > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!("frame of {} bytes exceeds {MAX_FRAME_BYTES}", body.len())));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame body; `None` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!("frame of {n} bytes exceeds {MAX_FRAME_BYTES}")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    write_frame(w, &msg.to_json()?)
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>> {
    read_frame(r)?.map(|b| Message::from_json(&b)).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn pcm_round_trip() {
        let s = [0.0f32, 0.5, -0.5, 1.0, -1.0];
        let back = decode_pcm(&encode_pcm(&s)).unwrap();
        for (a, b) in s.iter().zip(&back) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!(decode_pcm("AA==").is_err());
        assert!(decode_pcm("***").is_err());
    }

    #[test]
    fn framing_round_trip_and_eof() {
        let mut buf = Vec::new();
        write_message(&mut buf, &Message::SessionEnd { frames: Some(3) }).unwrap();
        write_message(&mut buf, &Message::error(ErrorCode::NotStarted, "x")).unwrap();
        let first = Message::SessionEnd { frames: Some(3) }.to_json().unwrap();
        assert_eq!(&buf[..4], &(first.len() as u32).to_be_bytes()[..]);
        assert_eq!(&buf[4..4 + first.len()], &first[..]);
        let mut r = Cursor::new(buf);
        assert_eq!(read_message(&mut r).unwrap(), Some(Message::SessionEnd { frames: Some(3) }));
        assert!(matches!(read_message(&mut r).unwrap(), Some(Message::Error { .. })));
        assert_eq!(read_message(&mut r).unwrap(), None);
    }

    #[test]
    fn unknown_fields_and_types_are_rejected() {
        assert!(Message::from_json(br#"{"type":"session.start","fsp":25}"#).is_err());
        assert!(Message::from_json(br#"{"type":"nope"}"#).is_err());
        assert!(Message::from_json(br#"{"type":"control.update","emotion":9}"#).is_err());
        let m = Message::from_json(br#"{"type":"session.start"}"#).unwrap();
        assert_eq!(m, Message::SessionStart(SessionConfig::default()));
    }

    #[test]
    fn oversized_frame_is_refused() {
        let mut r = Cursor::new(((MAX_FRAME_BYTES + 1) as u32).to_be_bytes().to_vec());
        assert!(matches!(read_frame(&mut r), Err(Error::Protocol(_))));
    }
}
