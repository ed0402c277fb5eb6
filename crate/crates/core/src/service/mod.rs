//! Session service: wire protocol, TCP server, client, config files and
//! offline generation.

pub mod client;
pub mod config;
pub mod generate;
pub mod protocol;
pub mod server;

pub use client::{run_session, Client, Received, Transcript};
pub use config::{load_config, parse_config};
pub use generate::{generate_from_audio, motion_records, read_identity, read_wav, write_motion_file, write_wav};
pub use protocol::{ControlMessage, ErrorCode, FrameMessage, Message, SessionConfig, StatsMessage, StreamMode};
pub use server::{Engine, Server, ServerConfig, ServerHandle};
