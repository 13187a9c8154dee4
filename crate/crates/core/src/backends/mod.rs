//! Inference backends: an analytic roofline simulator and a client for
//! OpenAI-compatible streaming completion endpoints.

pub mod endpoint;
pub mod sim;

use thiserror::Error;

use crate::types::SweepPoint;

pub use endpoint::{EndpointBackend, EndpointBackendConfig, PromptSource, SyntheticPrompts};
pub use sim::{sim_param_count, DeviceSpec, Roofline, SimBackend, SimBackendConfig};

/// Timing of one inference call (one batch of `point.batch` sequences).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallTiming {
    pub ttft_ms: f64,
    pub total_ms: f64,
    /// The backend produced a different number of tokens than requested.
    pub token_mismatch: bool,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("model + kv-cache exceed device memory at {0}")]
    MemoryExceeded(SweepPoint),
    #[error("request {index} failed with HTTP status {status}: {body}")]
    Http { index: u32, status: u16, body: String },
    #[error("request {index} failed: {message}")]
    Transport { index: u32, message: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

/// Something that can execute one experiment iteration for a sweep point.
///
/// Repeated calls with the same point are independent trials.
pub trait Backend {
    fn id(&self) -> &str;

    fn call(&mut self, point: SweepPoint) -> Result<CallTiming, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn call(&mut self, point: SweepPoint) -> Result<CallTiming, BackendError> {
        (**self).call(point)
    }
}
