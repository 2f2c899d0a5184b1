//! Sampled signals, synthetic sources, CSV ingestion and window statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A fixed-rate window of finite real samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame")]
pub struct SignalFrame {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

#[derive(Deserialize)]
struct RawFrame {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl TryFrom<RawFrame> for SignalFrame {
    type Error = Error;

    fn try_from(raw: RawFrame) -> Result<Self> {
        SignalFrame::new(raw.samples, raw.sample_rate_hz)
    }
}

impl SignalFrame {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid(
                "signal frame must contain at least one sample",
            ));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Same rate, new samples. Used by operations that preserve length and rate.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        SignalFrame::new(samples, self.sample_rate_hz)
    }

    /// Splits into consecutive windows of `window_len` samples. Trailing samples
    /// that do not fill a window are an error.
    pub fn windows(&self, window_len: usize) -> Result<Vec<SignalFrame>> {
        if window_len == 0 || !self.len().is_multiple_of(window_len) {
            return Err(Error::shape(format!(
                "frame of {} samples is not a whole number of {window_len}-sample windows",
                self.len()
            )));
        }
        self.samples
            .chunks(window_len)
            .map(|c| SignalFrame::new(c.to_vec(), self.sample_rate_hz))
            .collect()
    }

    /// Concatenates frames sharing one sample rate.
    pub fn concat(frames: &[SignalFrame]) -> Result<SignalFrame> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("cannot concatenate zero frames"))?;
        if frames
            .iter()
            .any(|f| f.sample_rate_hz != first.sample_rate_hz)
        {
            return Err(Error::shape("frames have different sample rates"));
        }
        let samples = frames
            .iter()
            .flat_map(|f| f.samples.iter().copied())
            .collect();
        SignalFrame::new(samples, first.sample_rate_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    pub mean: f64,
    /// Population variance (divides by `count`).
    pub variance: f64,
    pub count: usize,
}

impl SignalStats {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Count-weighted pooling of two summaries, equal to the statistics of the
    /// concatenated samples.
    pub fn pooled(&self, other: &SignalStats) -> SignalStats {
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let mean = (n1 * self.mean + n2 * other.mean) / n;
        let d1 = self.mean - mean;
        let d2 = other.mean - mean;
        let variance = (n1 * (self.variance + d1 * d1) + n2 * (other.variance + d2 * d2)) / n;
        SignalStats {
            mean,
            variance,
            count: self.count + other.count,
        }
    }
}

/// Mean and variance of the elementwise product of two carriers, the inputs to
/// the attacker error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductStats {
    pub mean: f64,
    pub variance: f64,
}

impl ProductStats {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::invalid(format!(
                "product statistics must be finite with non-negative variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    /// Estimates the statistics from two independent carrier recordings.
    pub fn estimate(a: &SignalFrame, b: &SignalFrame) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::shape(format!(
                "product statistics need equal lengths, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let prod: Vec<f64> = a
            .samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| x * y)
            .collect();
        let (mean, variance) = mean_variance(&prod);
        ProductStats::new(mean, variance)
    }
}

pub fn gen_gaussian(
    mean: f64,
    std_dev: f64,
    length: usize,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<SignalFrame> {
    if length == 0 {
        return Err(Error::invalid("length must be positive"));
    }
    if !(std_dev.is_finite() && std_dev >= 0.0) {
        return Err(Error::invalid(format!(
            "std_dev must be non-negative, got {std_dev}"
        )));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let samples = (0..length)
        .map(|_| rng::gaussian(&mut rng, mean, std_dev))
        .collect();
    SignalFrame::new(samples, sample_rate_hz)
}

/// Reads a single-column CSV. A first row that does not parse as a number is
/// treated as a header; any later non-numeric row is an error. Blank lines are
/// skipped. Row numbers in errors are 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, sample_rate_hz: f64) -> Result<SignalFrame> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, sample_rate_hz)
}

pub fn parse_csv(text: &str, sample_rate_hz: f64) -> Result<SignalFrame> {
    let mut samples = Vec::new();
    let mut seen_row = false;
    for (i, line) in text.lines().enumerate() {
        let field = line.trim().trim_start_matches('\u{feff}');
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => samples.push(v),
            Ok(_) => {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("non-finite value {field:?}"),
                })
            }
            Err(_) if !seen_row => {}
            Err(_) => {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("expected a number, found {field:?}"),
                })
            }
        }
        seen_row = true;
    }
    if samples.is_empty() {
        return Err(Error::invalid("CSV contains no samples"));
    }
    SignalFrame::new(samples, sample_rate_hz)
}

pub fn stats(frame: &SignalFrame) -> SignalStats {
    let (mean, variance) = mean_variance(frame.samples());
    SignalStats {
        mean,
        variance,
        count: frame.len(),
    }
}

/// Two-pass mean and population variance in index order. A constant input
/// returns its value and exactly zero variance.
pub(crate) fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return (first, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, variance)
}
