//! Multi-feed social-distancing analytics: per-feed workers, JSON-lines
//! outputs, capacity planning and the HTTP API used by the calibration UI.

pub mod api;
pub mod capacity;
pub mod config;
pub mod error;
pub mod feed;
pub mod overlay;
pub mod runtime;

pub use config::AppConfig;
pub use error::{PipelineError, Result};
pub use runtime::Pipeline;
