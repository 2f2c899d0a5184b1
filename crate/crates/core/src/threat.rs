//! Adversary models: data injection and accumulation eavesdropping followed
//! by forgery.
//!
//! The eavesdropper sums `m` recorded windows. Under a static watermark the
//! key term adds coherently (`m * beta`) while the carrier grows like
//! `sqrt(m) * sigma`, so the key eventually dominates.
//!
//! The key estimator works on the `n_s` spans of the accumulated window.
//! Span 0 is the reference; every other span is sign-aligned to it by the
//! sign of their inner product (ties to +1), which removes the unknown bit
//! pattern up to one global sign. With aligned spans `A_i(t)`, per chip
//! offset `t`:
//!
//! ```text
//! mu(t)  = mean_i A_i(t)
//! v(t)   = sample variance_i A_i(t)          (n_s - 1 denominator)
//! key(t) = sign(mu(t))                       (ties to +1)
//! power_ratio = max(0, mean_t mu(t)^2 / mean_t v(t) - 1 / n_s)
//! ```
//!
//! For a static stream `power_ratio` estimates `m * beta^2 / sigma^2`, the
//! key-to-carrier power of the accumulation. The key estimate carries the
//! global sign of the reference bit; [`chip_agreement`] is therefore
//! sign-invariant, and forging with `key` and the matching bit estimate
//! reproduces `s_i * p` either way.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::SignalFrame;
use crate::sswm::{add_spread, correlate, BitStream, PnKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Injection,
    EavesdropForge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// First attacked sample; must sit on a window boundary.
    pub start_sample: u64,
    pub injected_mean: f64,
    pub injected_std: f64,
    /// Windows the eavesdropper accumulates before forging.
    #[serde(default = "default_eavesdrop_windows")]
    pub eavesdrop_windows: usize,
    pub seed: u64,
}

fn default_eavesdrop_windows() -> usize {
    100
}

impl AttackConfig {
    pub fn validate(&self, window_len: usize) -> Result<()> {
        if window_len == 0 {
            return Err(Error::invalid("window length must be positive"));
        }
        if !self.start_sample.is_multiple_of(window_len as u64) {
            return Err(Error::invalid(format!(
                "attack.start_sample {} is not a multiple of the window length {window_len}",
                self.start_sample
            )));
        }
        if !self.injected_mean.is_finite() {
            return Err(Error::invalid("attack.injected_mean must be finite"));
        }
        if !(self.injected_std.is_finite() && self.injected_std >= 0.0) {
            return Err(Error::invalid("attack.injected_std must be nonnegative"));
        }
        if self.eavesdrop_windows == 0 {
            return Err(Error::invalid(
                "attack.eavesdrop_windows must be at least 1",
            ));
        }
        Ok(())
    }

    /// Index of the first attacked window.
    pub fn start_window(&self, window_len: usize) -> u64 {
        self.start_sample / window_len as u64
    }

    /// Seeded Gaussian cover for attacked window `index`.
    pub fn cover(&self, index: u64, len: usize, sample_rate_hz: f64) -> Result<SignalFrame> {
        let mut r = rng::seeded(rng::derive_seed(self.seed, index));
        let xs = (0..len)
            .map(|_| rng::gaussian(&mut r, self.injected_mean, self.injected_std))
            .collect();
        SignalFrame::new(xs, sample_rate_hz)
    }
}

fn uniform_len(windows: &[SignalFrame]) -> Result<usize> {
    let first = windows
        .first()
        .ok_or_else(|| Error::invalid("at least one window is required"))?;
    let len = first.len();
    if let Some((i, w)) = windows.iter().enumerate().find(|(_, w)| w.len() != len) {
        return Err(Error::shape(format!(
            "window {i} has {} samples, window 0 has {len}",
            w.len()
        )));
    }
    Ok(len)
}

/// Replaces every window from the attack start onward with seeded Gaussian data.
pub fn inject(stream: &[SignalFrame], cfg: &AttackConfig) -> Result<Vec<SignalFrame>> {
    if cfg.kind != AttackKind::Injection {
        return Err(Error::invalid("inject requires an injection attack"));
    }
    if stream.is_empty() {
        return Ok(Vec::new());
    }
    let len = uniform_len(stream)?;
    cfg.validate(len)?;
    let start = cfg.start_window(len);
    stream
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if (i as u64) < start {
                Ok(w.clone())
            } else {
                cfg.cover(i as u64, len, w.sample_rate_hz())
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulatedObservation {
    pub sum_samples: Vec<f64>,
    pub windows_summed: usize,
}

/// Elementwise sum of recorded windows. With `aligned = false` window `k`
/// is read `k` samples late (cyclically), a one-sample-per-window clock drift.
pub fn accumulate(windows: &[SignalFrame], aligned: bool) -> Result<AccumulatedObservation> {
    let len = uniform_len(windows)?;
    let mut sum = vec![0.0; len];
    for (k, w) in windows.iter().enumerate() {
        let shift = if aligned { 0 } else { k % len };
        let xs = w.samples();
        for (t, s) in sum.iter_mut().enumerate() {
            *s += xs[(t + shift) % len];
        }
    }
    Ok(AccumulatedObservation {
        sum_samples: sum,
        windows_summed: windows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEstimate {
    pub chips: Vec<i8>,
    pub power_ratio: f64,
}

fn sign_of(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

pub fn estimate_key(acc: &AccumulatedObservation, n: usize, n_s: usize) -> Result<KeyEstimate> {
    if n < 2 || n_s < 2 {
        return Err(Error::invalid("key estimation needs n >= 2 and n_s >= 2"));
    }
    if acc.sum_samples.len() != n * n_s {
        return Err(Error::shape(format!(
            "accumulation has {} samples, expected n * n_s = {}",
            acc.sum_samples.len(),
            n * n_s
        )));
    }
    let spans: Vec<&[f64]> = acc.sum_samples.chunks(n).collect();
    let reference = spans[0];
    let signs: Vec<f64> = spans
        .iter()
        .map(|s| {
            let c: f64 = s.iter().zip(reference).map(|(a, b)| a * b).sum();
            f64::from(sign_of(c))
        })
        .collect();

    let k = n_s as f64;
    let mut chips = Vec::with_capacity(n);
    let mut mean_sq = 0.0;
    let mut var = 0.0;
    for t in 0..n {
        let mu = spans.iter().zip(&signs).map(|(s, g)| g * s[t]).sum::<f64>() / k;
        let v = spans
            .iter()
            .zip(&signs)
            .map(|(s, g)| (g * s[t] - mu).powi(2))
            .sum::<f64>()
            / (k - 1.0);
        chips.push(sign_of(mu));
        mean_sq += mu * mu;
        var += v;
    }
    let power_ratio = if var > 0.0 {
        (mean_sq / var - 1.0 / k).max(0.0)
    } else if mean_sq > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(KeyEstimate { chips, power_ratio })
}

/// Bits the eavesdropper reads from the accumulation with its own key estimate.
pub fn estimate_bits(acc: &AccumulatedObservation, key_estimate: &[i8]) -> Result<BitStream> {
    let n = key_estimate.len();
    if n == 0 || !acc.sum_samples.len().is_multiple_of(n) {
        return Err(Error::shape(format!(
            "accumulation of {} samples is not a whole number of {n}-chip spans",
            acc.sum_samples.len()
        )));
    }
    BitStream::new(
        correlate(&acc.sum_samples, key_estimate)
            .into_iter()
            .map(sign_of)
            .collect(),
    )
}

/// Fraction of chips matching the true key, up to a global sign flip.
pub fn chip_agreement(estimate: &[i8], key: &PnKey) -> Result<f64> {
    if estimate.len() != key.n() {
        return Err(Error::shape(format!(
            "estimate has {} chips, key has {}",
            estimate.len(),
            key.n()
        )));
    }
    let same = estimate
        .iter()
        .zip(key.chips())
        .filter(|(a, b)| a == b)
        .count();
    let a = same as f64 / key.n() as f64;
    Ok(a.max(1.0 - a))
}

/// Counterfeit frame: the cover with the estimated bits spread by the
/// estimated key. `beta = 0` returns the cover unchanged.
pub fn forge(
    cover: &SignalFrame,
    key_estimate: &[i8],
    bits_estimate: &BitStream,
    beta: f64,
) -> Result<SignalFrame> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    if key_estimate.iter().any(|&c| c != 1 && c != -1) {
        return Err(Error::invalid("key estimate chips must be +1 or -1"));
    }
    let want = key_estimate.len() * bits_estimate.len();
    if cover.len() != want {
        return Err(Error::shape(format!(
            "cover has {} samples, expected {want}",
            cover.len()
        )));
    }
    let mut xs = cover.samples().to_vec();
    add_spread(&mut xs, key_estimate, bits_estimate.bits(), beta);
    SignalFrame::new(xs, cover.sample_rate_hz())
}

/// Key-power ratio after accumulating the first `m` windows, for each `m`.
pub fn power_ratio_curve(
    windows: &[SignalFrame],
    ms: &[usize],
    n: usize,
    n_s: usize,
) -> Result<Vec<(usize, f64)>> {
    ms.iter()
        .map(|&m| {
            if m == 0 || m > windows.len() {
                return Err(Error::invalid(format!(
                    "m = {m} outside 1..={} recorded windows",
                    windows.len()
                )));
            }
            let acc = accumulate(&windows[..m], true)?;
            Ok((m, estimate_key(&acc, n, n_s)?.power_ratio))
        })
        .collect()
}
