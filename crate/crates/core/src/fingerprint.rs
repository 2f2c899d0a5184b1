//! Stochastic fingerprints of a window and their mapping to a bit stream.
//!
//! The five features are always handled in [`FEATURE_ORDER`]. A
//! [`FeatureCalibration`] places per-feature thresholds at equiprobable
//! quantiles of a calibration set; [`quantize`] turns a feature vector into a
//! short code (one bit per threshold) and repeats it cyclically to `n_s` bits.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{mean_variance, SignalFrame};
use crate::sswm::{add_spread, embed, BitStream, PnKey};

pub const FEATURE_COUNT: usize = 5;
pub const FEATURE_ORDER: [&str; FEATURE_COUNT] = [
    "spectral_flatness",
    "mean",
    "variance",
    "skewness",
    "kurtosis",
];
pub const CALIBRATION_VERSION: u32 = 1;
pub const MIN_FEATURE_LEN: usize = 8;
pub const MIN_CALIBRATION_FRAMES: usize = 10;
const SPREAD_FLOOR: f64 = 1e-9;
const POWER_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub spectral_flatness: f64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.spectral_flatness,
            self.mean,
            self.variance,
            self.skewness,
            self.kurtosis,
        ]
    }

    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        Self {
            spectral_flatness: v[0],
            mean: v[1],
            variance: v[2],
            skewness: v[3],
            kurtosis: v[4],
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_for(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub fn features(frame: &SignalFrame) -> Result<FeatureVector> {
    let xs = frame.samples();
    if xs.len() < MIN_FEATURE_LEN {
        return Err(Error::invalid(format!(
            "features need at least {MIN_FEATURE_LEN} samples, got {}",
            xs.len()
        )));
    }
    let (mean, variance) = mean_variance(xs);
    if variance == 0.0 {
        // constant window: all energy sits in the excluded DC bin
        return Ok(FeatureVector {
            spectral_flatness: 0.0,
            mean,
            variance,
            skewness: 0.0,
            kurtosis: 0.0,
        });
    }
    let n = xs.len() as f64;
    let (m3, m4) = xs.iter().fold((0.0, 0.0), |(a, b), &x| {
        let d = x - mean;
        let d2 = d * d;
        (a + d2 * d, b + d2 * d2)
    });
    let (m3, m4) = (m3 / n, m4 / n);
    Ok(FeatureVector {
        spectral_flatness: spectral_flatness(xs, mean),
        mean,
        variance,
        skewness: m3 / variance.powf(1.5),
        kurtosis: m4 / (variance * variance),
    })
}

/// Geometric over arithmetic mean of `|X_k|^2` for `k = 1..=N/2`.
fn spectral_flatness(xs: &[f64], mean: f64) -> f64 {
    // removing the mean only changes the DC bin, which is excluded anyway
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    fft_for(buf.len()).process(&mut buf);
    let bins = &buf[1..=xs.len() / 2];
    let (log_sum, sum) = bins.iter().fold((0.0, 0.0), |(l, s), c| {
        let p = c.norm_sqr();
        (l + p.max(POWER_FLOOR).ln(), s + p)
    });
    let k = bins.len() as f64;
    let arith = sum / k;
    if arith <= 0.0 {
        return 0.0;
    }
    ((log_sum / k).exp() / arith).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureThresholds {
    pub name: String,
    pub center: f64,
    pub spread: f64,
    /// Non-decreasing cut points; they coincide when the calibration set is degenerate.
    pub thresholds: Vec<f64>,
}

/// Shared device/cloud provisioning for the feature-to-bit mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationDoc", into = "CalibrationDoc")]
pub struct FeatureCalibration {
    features: [FeatureThresholds; FEATURE_COUNT],
    bits_per_feature: usize,
}

#[derive(Serialize, Deserialize)]
struct CalibrationDoc {
    version: u32,
    feature_order: Vec<String>,
    bits_per_feature: usize,
    features: Vec<FeatureThresholds>,
}

impl From<FeatureCalibration> for CalibrationDoc {
    fn from(c: FeatureCalibration) -> Self {
        CalibrationDoc {
            version: CALIBRATION_VERSION,
            feature_order: FEATURE_ORDER.iter().map(|s| s.to_string()).collect(),
            bits_per_feature: c.bits_per_feature,
            features: c.features.into(),
        }
    }
}

impl TryFrom<CalibrationDoc> for FeatureCalibration {
    type Error = Error;

    fn try_from(doc: CalibrationDoc) -> Result<Self> {
        if doc.version != CALIBRATION_VERSION {
            return Err(Error::invalid(format!(
                "unsupported calibration version {}",
                doc.version
            )));
        }
        if doc.feature_order != FEATURE_ORDER {
            return Err(Error::invalid(format!(
                "calibration feature order {:?} does not match {:?}",
                doc.feature_order, FEATURE_ORDER
            )));
        }
        if doc.bits_per_feature == 0 {
            return Err(Error::invalid("bits_per_feature must be positive"));
        }
        let features: [FeatureThresholds; FEATURE_COUNT] = doc
            .features
            .try_into()
            .map_err(|_| Error::invalid("calibration must list exactly five features"))?;
        for (f, name) in features.iter().zip(FEATURE_ORDER) {
            if f.name != name {
                return Err(Error::invalid(format!(
                    "expected feature {name}, found {}",
                    f.name
                )));
            }
            if f.thresholds.len() != doc.bits_per_feature {
                return Err(Error::invalid(format!(
                    "{name}: {} thresholds for {} bits",
                    f.thresholds.len(),
                    doc.bits_per_feature
                )));
            }
            if f.spread.is_nan() || f.spread <= 0.0 || f.thresholds.windows(2).any(|w| w[1] < w[0])
            {
                return Err(Error::invalid(format!(
                    "{name}: spread must be positive and thresholds ordered"
                )));
            }
        }
        Ok(FeatureCalibration {
            features,
            bits_per_feature: doc.bits_per_feature,
        })
    }
}

impl FeatureCalibration {
    pub fn bits_per_feature(&self) -> usize {
        self.bits_per_feature
    }

    pub fn features(&self) -> &[FeatureThresholds; FEATURE_COUNT] {
        &self.features
    }

    /// Length of the code before cyclic extension.
    pub fn code_len(&self) -> usize {
        FEATURE_COUNT * self.bits_per_feature
    }

    pub fn centers(&self) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|i| self.features[i].center)
    }

    pub fn spreads(&self) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|i| self.features[i].spread)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn calibrate(frames: &[SignalFrame], bits_per_feature: usize) -> Result<FeatureCalibration> {
    if frames.len() < MIN_CALIBRATION_FRAMES {
        return Err(Error::invalid(format!(
            "calibration needs at least {MIN_CALIBRATION_FRAMES} frames, got {}",
            frames.len()
        )));
    }
    if bits_per_feature == 0 {
        return Err(Error::invalid("bits_per_feature must be positive"));
    }
    let vectors = frames
        .iter()
        .map(|f| features(f).map(|v| v.to_array()))
        .collect::<Result<Vec<_>>>()?;
    let features = std::array::from_fn(|i| {
        let mut column: Vec<f64> = vectors.iter().map(|v| v[i]).collect();
        column.sort_by(f64::total_cmp);
        let center = quantile(&column, 0.5);
        let spread = (quantile(&column, 0.75) - quantile(&column, 0.25)).max(SPREAD_FLOOR);
        let thresholds = (1..=bits_per_feature)
            .map(|j| quantile(&column, j as f64 / (bits_per_feature + 1) as f64))
            .collect();
        FeatureThresholds {
            name: FEATURE_ORDER[i].to_string(),
            center,
            spread,
            thresholds,
        }
    });
    Ok(FeatureCalibration {
        features,
        bits_per_feature,
    })
}

/// The un-repeated code: `+1` where the feature is strictly above a threshold.
pub fn code(fv: &FeatureVector, calib: &FeatureCalibration) -> Vec<i8> {
    fv.to_array()
        .iter()
        .zip(&calib.features)
        .flat_map(|(&v, f)| {
            f.thresholds
                .iter()
                .map(move |&t| if v > t { 1 } else { -1 })
        })
        .collect()
}

pub fn quantize(fv: &FeatureVector, calib: &FeatureCalibration, n_s: usize) -> Result<BitStream> {
    if n_s == 0 {
        return Err(Error::invalid("n_s must be positive"));
    }
    let code = code(fv, calib);
    BitStream::new(code.iter().copied().cycle().take(n_s).collect())
}

/// Hard decisions for a cyclically repeated code: soft values sharing a code
/// position are summed before taking the sign (ties resolve to +1). Returns
/// the decisions re-expanded to the input length.
pub fn combine_repeated(soft: &[f64], code_len: usize) -> Vec<i8> {
    let mut sums = vec![0.0; code_len.min(soft.len())];
    for (i, v) in soft.iter().enumerate() {
        sums[i % code_len] += v;
    }
    (0..soft.len())
        .map(|i| if sums[i % code_len] < 0.0 { -1 } else { 1 })
        .collect()
}

/// Bits derived from a window's own fingerprint, `quantize(features(frame))`.
pub fn fingerprint_bits(
    frame: &SignalFrame,
    calib: &FeatureCalibration,
    n_s: usize,
) -> Result<BitStream> {
    quantize(&features(frame)?, calib, n_s)
}

/// The deterministic dynamic watermark: embeds the window's fingerprint bits.
/// Returns the watermarked frame and the bits it carries.
pub fn dynamic_embed(
    y: &SignalFrame,
    key: &PnKey,
    calib: &FeatureCalibration,
    beta: f64,
) -> Result<(SignalFrame, BitStream)> {
    if !y.len().is_multiple_of(key.n()) {
        return Err(Error::shape(format!(
            "frame of {} samples is not a whole number of {}-chip spans",
            y.len(),
            key.n()
        )));
    }
    let bits = fingerprint_bits(y, calib, y.len() / key.n())?;
    Ok((embed(y, key, &bits, beta)?, bits))
}

/// Removes the spread pattern of `bits` from `w`, estimating the carrier.
pub fn recover_carrier(
    w: &SignalFrame,
    key: &PnKey,
    bits: &BitStream,
    beta: f64,
) -> Result<SignalFrame> {
    if w.len() != key.n() * bits.len() {
        return Err(Error::shape(format!(
            "frame has {} samples, expected {}",
            w.len(),
            key.n() * bits.len()
        )));
    }
    let mut xs = w.samples().to_vec();
    add_spread(&mut xs, key.chips(), bits.bits(), -beta);
    w.with_samples(xs)
}
