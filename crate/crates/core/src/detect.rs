//! Cloud-side verification of received windows.
//!
//! Static: extracted bits are compared with the provisioned reference stream.
//! Dynamic: extracted bits are compared with the fingerprint bits of the
//! received window. The fingerprint of a raw watermarked window is not
//! reliably the fingerprint of its carrier, so the carrier is estimated first
//! as `w - beta * c (x) p`, where `c` is the extracted stream after
//! soft-combining the repeats of the cyclic code. The comparison itself stays
//! per bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{combine_repeated, fingerprint_bits, recover_carrier, FeatureCalibration};
use crate::lstm::tasks::{cloud_decode_soft, WatermarkNet};
use crate::signal::SignalFrame;
use crate::sswm::{extract, hard_bits, BitStream, PnKey, WatermarkParams};

pub const DEFAULT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub per_window_mismatch: Vec<f64>,
    pub alarm_window: Option<usize>,
    pub alarm_time_s: Option<f64>,
    pub threshold: f64,
    pub params: WatermarkParams,
}

impl DetectionReport {
    /// First window strictly above `threshold` raises the alarm.
    pub fn from_mismatches(
        per_window_mismatch: Vec<f64>,
        threshold: f64,
        params: WatermarkParams,
    ) -> Result<Self> {
        check_threshold(threshold)?;
        let alarm_window = per_window_mismatch.iter().position(|&m| m > threshold);
        let alarm_time_s =
            alarm_window.map(|w| ((w + 1) * params.window_len()) as f64 / params.sample_rate_hz);
        Ok(Self {
            per_window_mismatch,
            alarm_window,
            alarm_time_s,
            threshold,
            params,
        })
    }

    pub fn alarmed(&self) -> bool {
        self.alarm_window.is_some()
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(())
}

pub fn mismatch(expected: &BitStream, extracted: &BitStream) -> Result<f64> {
    if expected.len() != extracted.len() {
        return Err(Error::shape(format!(
            "bit streams differ in length: {} vs {}",
            expected.len(),
            extracted.len()
        )));
    }
    if expected.is_empty() {
        return Ok(0.0);
    }
    let diff = expected
        .bits()
        .iter()
        .zip(extracted.bits())
        .filter(|(a, b)| a != b)
        .count();
    Ok(diff as f64 / expected.len() as f64)
}

fn check_stream(stream: &[SignalFrame], key: &PnKey, params: &WatermarkParams) -> Result<()> {
    params.validate()?;
    if key.n() != params.n {
        return Err(Error::shape(format!(
            "key has {} chips, params say n = {}",
            key.n(),
            params.n
        )));
    }
    if let Some((i, w)) = stream
        .iter()
        .enumerate()
        .find(|(_, w)| w.len() != params.window_len())
    {
        return Err(Error::shape(format!(
            "window {i} has {} samples, expected {}",
            w.len(),
            params.window_len()
        )));
    }
    Ok(())
}

pub fn static_verify(
    stream: &[SignalFrame],
    key: &PnKey,
    params: &WatermarkParams,
    s_ref: &BitStream,
    threshold: f64,
) -> Result<DetectionReport> {
    check_threshold(threshold)?;
    check_stream(stream, key, params)?;
    if s_ref.len() != params.n_s {
        return Err(Error::shape(format!(
            "reference stream has {} bits, params say n_s = {}",
            s_ref.len(),
            params.n_s
        )));
    }
    let mm = stream
        .par_iter()
        .map(|w| {
            let got = hard_bits(&extract(w, key, params.n_s, params.beta)?);
            mismatch(s_ref, &got)
        })
        .collect::<Result<Vec<_>>>()?;
    DetectionReport::from_mismatches(mm, threshold, *params)
}

/// Expected and extracted bits for one received window under the dynamic scheme.
pub fn dynamic_window_bits(
    w: &SignalFrame,
    key: &PnKey,
    params: &WatermarkParams,
    calib: &FeatureCalibration,
    decoder: Option<&WatermarkNet>,
) -> Result<(BitStream, BitStream)> {
    let soft: Vec<f64> = match decoder {
        Some(net) => cloud_decode_soft(net, w, key)?.0,
        None => extract(w, key, params.n_s, params.beta)?
            .iter()
            .map(|b| b.value)
            .collect(),
    };
    let extracted = BitStream::new(soft.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect())?;
    let combined = BitStream::new(combine_repeated(&soft, calib.code_len()))?;
    let carrier = recover_carrier(w, key, &combined, params.beta)?;
    let expected = fingerprint_bits(&carrier, calib, params.n_s)?;
    Ok((expected, extracted))
}

pub fn dynamic_verify(
    stream: &[SignalFrame],
    key: &PnKey,
    params: &WatermarkParams,
    calib: Option<&FeatureCalibration>,
    decoder: Option<&WatermarkNet>,
    threshold: f64,
) -> Result<DetectionReport> {
    check_threshold(threshold)?;
    let calib =
        calib.ok_or_else(|| Error::invalid("dynamic verification needs a feature calibration"))?;
    check_stream(stream, key, params)?;
    if let Some(net) = decoder {
        if net.n != params.n || net.n_s != params.n_s {
            return Err(Error::shape(format!(
                "decoder was trained for n = {}, n_s = {}",
                net.n, net.n_s
            )));
        }
    }
    let mm = stream
        .par_iter()
        .map(|w| {
            let (expected, extracted) = dynamic_window_bits(w, key, params, calib, decoder)?;
            mismatch(&expected, &extracted)
        })
        .collect::<Result<Vec<_>>>()?;
    DetectionReport::from_mismatches(mm, threshold, *params)
}
