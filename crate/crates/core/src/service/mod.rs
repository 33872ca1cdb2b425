//! The session server: device backends, the per-frame intervention
//! pipeline, the HTTP/WebSocket API and the latency model.

mod backend;
pub mod http;
mod session;

pub use backend::{
    scripted_backend, Ack, Composition, DeviceBackend, InputEvent, InputKind, Layer, ScriptedBackend, ScriptedScene,
    Trigger,
};
pub use session::{BackendFactory, Engine, EngineConfig, RenderedFrame, Session, SessionConfig, SessionInfo, DEFAULT_FPS};

use crate::error::{Error, Result};

/// `one_way_count * frame_bits / bandwidth` in milliseconds, plus
/// `inference_ms`.
pub fn theoretical_latency(frame_bits: f64, bandwidth_bits_per_s: f64, inference_ms: f64, one_way_count: u32) -> Result<f64> {
    if bandwidth_bits_per_s == 0.0 {
        return Err(Error::DivisionByZero);
    }
    if !(frame_bits >= 0.0 && bandwidth_bits_per_s > 0.0 && inference_ms >= 0.0) {
        return Err(Error::InvalidArgument("latency inputs must be non-negative and finite".into()));
    }
    Ok(one_way_count as f64 * (frame_bits / bandwidth_bits_per_s) * 1000.0 + inference_ms)
}

#[cfg(test)]
mod tests;
