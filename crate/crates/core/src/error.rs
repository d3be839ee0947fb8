use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("rejected record: {0}")]
    RejectedRecord(String),

    #[error("sequencing error: frame {got} does not follow frame {previous}")]
    Sequencing { previous: u64, got: u64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("point ({x}, {y}) maps to the line at infinity")]
    Horizon { x: f64, y: f64 },

    #[error("ray at or above the horizon (angle below horizon {angle_rad} rad)")]
    AboveHorizon { angle_rad: f64 },

    #[error("person not visible: {0}")]
    NotVisible(String),

    #[error("not enough data: {0}")]
    NotEnoughData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undefined metric: {0}")]
    Undefined(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
