//! Scenario runner, Monte Carlo sweeps, metrics and the frame codec.

pub mod metrics;
pub mod scenario;
pub mod sweep;
pub mod wire;

pub use metrics::{BerPoint, MetricsBundle, RatioPoint};
pub use scenario::{run_scenario, Mode, ModelPaths, Scenario, Source};
pub use sweep::{ber_point, ber_sweep};
pub use wire::{decode_frame, encode_frame, CodecError, DecodedFrame, FrameHeader};
