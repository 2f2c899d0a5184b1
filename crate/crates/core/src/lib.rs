//! Authentication of streamed sensor signals with spread-spectrum
//! watermarks, either static (a fixed bit stream per window) or dynamic
//! (bits derived from each window's own stochastic fingerprint).

pub mod detect;
pub mod error;
pub mod fingerprint;
pub mod harness;
pub mod lstm;
pub mod rng;
pub mod signal;
pub mod sswm;
pub mod threat;

pub use error::{Constraint, Error, Result};
pub use fingerprint::{FeatureCalibration, FeatureVector};
pub use signal::SignalFrame;
pub use sswm::{BitStream, PnKey, WatermarkParams};
