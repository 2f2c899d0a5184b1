//! Shared fixtures for the benchmarks.

use aqwm_core::fingerprint::calibrate;
use aqwm_core::signal::gen_gaussian;
use aqwm_core::sswm::gen_pn_key;
use aqwm_core::{BitStream, FeatureCalibration, PnKey, SignalFrame, WatermarkParams};

pub struct Fixture {
    pub params: WatermarkParams,
    pub key: PnKey,
    pub bits: BitStream,
    pub calib: FeatureCalibration,
    pub windows: Vec<SignalFrame>,
}

/// `count` unit-variance windows of `n * n_s` samples at 1 kHz.
pub fn fixture(beta: f64, n: usize, n_s: usize, count: usize) -> Fixture {
    let params = WatermarkParams::new(beta, n, n_s, 1000.0).expect("valid params");
    let len = params.window_len();
    let windows = gen_gaussian(0.0, 1.0, count * len, 1000.0, 1)
        .and_then(|f| f.windows(len))
        .expect("synthetic windows");
    let calib_windows = gen_gaussian(0.0, 1.0, 200 * len, 1000.0, 2)
        .and_then(|f| f.windows(len))
        .expect("calibration windows");
    Fixture {
        params,
        key: gen_pn_key(n, 3).expect("key"),
        bits: BitStream::random(n_s, 4).expect("bits"),
        calib: calibrate(&calib_windows, 1).expect("calibration"),
        windows,
    }
}
