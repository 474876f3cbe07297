//! Interference analysis and mitigation for FMCW automotive radar sharing
//! spectrum with a narrowband control channel.
//!
//! - [`waveform`]: chirp-sequence and control-channel parameters.
//! - [`analytic`]: closed-form SIRs, vulnerable periods, interference
//!   probabilities, detection probability and SER.
//! - [`phy`]: baseband chain (echo/interferer synthesis, range-Doppler
//!   processing, GO-CFAR, QAM symbol-error Monte Carlo).
//! - [`protocol`]: per-unit slot-scheduling MAC state and control-packet
//!   processing.
//! - [`engine`]: deterministic discrete-event network simulator and Monte
//!   Carlo harness.

pub mod analytic;
pub mod engine;
pub mod error;
pub mod phy;
pub mod protocol;
pub mod waveform;

pub use error::{ConfigError, PhyError, ProtocolError};
