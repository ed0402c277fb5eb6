//! Streaming audio-to-motion generation for talking-head animation.

pub mod conditioning;
pub mod diffusion;
pub mod error;
pub mod motion;
pub mod service;
pub mod streaming;

pub use error::{Error, Result};
