use thiserror::Error;

/// A configuration value that violates a model invariant.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ConfigError {
    field: &'static str,
    reason: String,
}

impl ConfigError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Self { field, reason: reason.into() }
    }

    /// Dotted name of the offending field, e.g. `radar.chirps_per_frame`.
    pub fn field(&self) -> &'static str {
        self.field
    }

    pub fn reason(&self) -> &str {
        &self.reason
    }
}

/// Errors raised by the signal-processing chain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhyError {
    #[error("signal has {actual} samples, expected {expected} ({chirps} chirps x {per_chirp})")]
    ShapeMismatch { expected: usize, actual: usize, chirps: usize, per_chirp: usize },
    #[error("CFAR window of {window} cells does not fit a map row of {row} cells")]
    MapTooSmall { window: usize, row: usize },
    #[error("CFAR {what} count must be even and split across both sides, got {count}")]
    OddWindow { what: &'static str, count: usize },
    #[error("amplitude must be non-negative, got {0}")]
    NegativeAmplitude(f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Errors raised by the slot-scheduling protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("slot index 0 means unassigned and has no slot position")]
    Unassigned,
}
