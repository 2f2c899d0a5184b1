//! Static spread-spectrum watermarking.
//!
//! Each bit `b` of a stream is spread over `n` consecutive samples with a
//! shared ±1 key `p`: `w(t) = y(t) + beta * b * p(t)`. The receiver recovers
//! `b` from the sign of `<w, p> / (beta * n)`. With a carrier of variance
//! `sigma^2`, the per-bit error is `erfc(beta * sqrt(n) / (sigma * sqrt(2))) / 2`.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{Constraint, Error, Result};
use crate::rng;
use crate::signal::{ProductStats, SignalFrame};

/// Shared ±1 pseudo-noise key. Every bit of a window reuses the same `n` chips.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnKey {
    chips: Vec<i8>,
    seed: Option<u64>,
}

impl PnKey {
    pub fn from_chips(chips: Vec<i8>) -> Result<Self> {
        check_pm1(&chips, "key chip")?;
        if chips.len() < 2 {
            return Err(Error::invalid(format!(
                "key needs at least 2 chips, got {}",
                chips.len()
            )));
        }
        Ok(Self { chips, seed: None })
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    pub fn n(&self) -> usize {
        self.chips.len()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

pub fn gen_pn_key(n: usize, seed: u64) -> Result<PnKey> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "key length must be at least 2, got {n}"
        )));
    }
    let mut rng = rng::seeded(seed);
    Ok(PnKey {
        chips: rng::signs(&mut rng, n),
        seed: Some(seed),
    })
}

/// Hidden ±1 bit stream carried by one window.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitStream {
    bits: Vec<i8>,
}

impl BitStream {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        check_pm1(&bits, "bit")?;
        if bits.is_empty() {
            return Err(Error::invalid("bit stream must not be empty"));
        }
        Ok(Self { bits })
    }

    pub fn random(n_s: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        BitStream::new(rng::signs(&mut rng, n_s))
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn complement(&self) -> BitStream {
        BitStream {
            bits: self.bits.iter().map(|b| -b).collect(),
        }
    }
}

fn check_pm1(values: &[i8], what: &str) -> Result<()> {
    match values.iter().position(|&v| v != 1 && v != -1) {
        Some(i) => Err(Error::invalid(format!(
            "{what} {i} is {}, expected +1 or -1",
            values[i]
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatermarkParams {
    /// Watermark amplitude in signal units.
    pub beta: f64,
    /// Chips per bit.
    pub n: usize,
    /// Bits per window.
    pub n_s: usize,
    pub sample_rate_hz: f64,
}

impl WatermarkParams {
    pub fn new(beta: f64, n: usize, n_s: usize, sample_rate_hz: f64) -> Result<Self> {
        let p = Self {
            beta,
            n,
            n_s,
            sample_rate_hz,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.n_s < 1 {
            return Err(Error::invalid("n_s must be at least 1"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }

    /// Samples per embedding window, `n * n_s`.
    pub fn window_len(&self) -> usize {
        self.n * self.n_s
    }

    pub fn window_duration_s(&self) -> f64 {
        self.window_len() as f64 / self.sample_rate_hz
    }
}

/// Correlation statistic for one bit and its sign decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftBit {
    pub value: f64,
    pub hard: i8,
}

impl SoftBit {
    /// Zero resolves to +1.
    pub fn from_value(value: f64) -> Self {
        let hard = if value < 0.0 { -1 } else { 1 };
        Self { value, hard }
    }
}

pub fn hard_bits(soft: &[SoftBit]) -> BitStream {
    BitStream {
        bits: soft.iter().map(|s| s.hard).collect(),
    }
}

fn check_window(frame: &SignalFrame, key: &PnKey, n_s: usize) -> Result<()> {
    let want = key.n() * n_s;
    if frame.len() != want {
        return Err(Error::shape(format!(
            "window has {} samples, expected n * n_s = {} * {} = {want}",
            frame.len(),
            key.n(),
            n_s
        )));
    }
    Ok(())
}

/// Adds `beta * bits[i] * chips[t]` to sample `i * n + t`. No validation of beta.
pub(crate) fn add_spread(samples: &mut [f64], chips: &[i8], bits: &[i8], beta: f64) {
    let n = chips.len();
    for (span, &b) in samples.chunks_mut(n).zip(bits) {
        for (x, &p) in span.iter_mut().zip(chips) {
            *x += beta * f64::from(b) * f64::from(p);
        }
    }
}

pub fn embed(frame: &SignalFrame, key: &PnKey, bits: &BitStream, beta: f64) -> Result<SignalFrame> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    check_window(frame, key, bits.len())?;
    let mut out = frame.samples().to_vec();
    add_spread(&mut out, key.chips(), bits.bits(), beta);
    frame.with_samples(out)
}

pub fn extract(frame: &SignalFrame, key: &PnKey, n_s: usize, beta: f64) -> Result<Vec<SoftBit>> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    check_window(frame, key, n_s)?;
    Ok(correlate(frame.samples(), key.chips())
        .into_iter()
        .map(|c| SoftBit::from_value(c / (beta * key.n() as f64)))
        .collect())
}

/// Per-span inner products `<w_i, p>`.
pub(crate) fn correlate(samples: &[f64], chips: &[i8]) -> Vec<f64> {
    samples
        .chunks(chips.len())
        .map(|span| span.iter().zip(chips).map(|(x, &p)| x * f64::from(p)).sum())
        .collect()
}

/// Closed-form cloud-side bit error probability.
pub fn theoretical_ber(beta: f64, sigma: f64, n: usize) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid(format!(
            "beta must be non-negative, got {beta}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    Ok(0.5 * erfc(beta * (n as f64).sqrt() / (sigma * std::f64::consts::SQRT_2)))
}

/// Error probability of an attacker who correlates two watermarked windows
/// against each other instead of against the key.
pub fn attacker_ber(beta: f64, n: usize, product: &ProductStats, sigma: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    let spread = 2.0 * (product.variance + 2.0 * sigma * sigma);
    if spread <= 0.0 {
        return Err(Error::invalid(
            "product and carrier variances are both zero",
        ));
    }
    let nf = n as f64;
    // (1 + mu1 / (beta^2 n^2)) * beta^2 * n * sqrt(n), expanded to avoid the division
    let arg = (beta * beta * nf + product.mean / nf) * nf.sqrt() / spread.sqrt();
    Ok(0.5 * erfc(arg))
}

/// Largest `n_s` meeting the delay bound `n_s <= delay * f_s / n`.
pub fn bits_within_delay(delay_s: f64, sample_rate_hz: f64, n: usize) -> usize {
    (delay_s * sample_rate_hz / n as f64).floor().max(0.0) as usize
}

/// How the attacker-side constraint is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// `attacker_ber >= 1 - p_under`. Unsatisfiable for `mu1 >= 0`, `p_under < 1/2`.
    Strict,
    /// `attacker_ber >= 1/2 - p_under`: attacker extraction stays near chance.
    #[default]
    Confusion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    pub sigma: f64,
    pub product: ProductStats,
    /// Largest acceptable cloud bit error probability.
    pub p_bar: f64,
    /// Acceptable probability that the attacker extracts correctly.
    pub p_under: f64,
    pub delay_s: f64,
    pub sample_rate_hz: f64,
    pub mode: PlanMode,
}

/// Beta candidates per decade on the logarithmic search grid.
pub const BETA_GRID_PER_DECADE: usize = 200;

/// The beta search grid over `[sigma / 100, 10 sigma]`, ascending.
pub fn beta_grid(sigma: f64) -> Vec<f64> {
    let steps = 3 * BETA_GRID_PER_DECADE;
    (0..=steps)
        .map(|k| sigma * 10f64.powf(-2.0 + 3.0 * k as f64 / steps as f64))
        .collect()
}

impl PlanRequest {
    fn attacker_floor(&self) -> f64 {
        match self.mode {
            PlanMode::Strict => 1.0 - self.p_under,
            PlanMode::Confusion => 0.5 - self.p_under,
        }
    }

    pub fn cloud_ok(&self, beta: f64, n: usize) -> bool {
        theoretical_ber(beta, self.sigma, n).is_ok_and(|p| p <= self.p_bar)
    }

    pub fn attacker_ok(&self, beta: f64, n: usize) -> bool {
        attacker_ber(beta, n, &self.product, self.sigma).is_ok_and(|p| p >= self.attacker_floor())
    }
}

/// Picks `(beta, n, n_s)`: the smallest `n`, then the smallest grid `beta`,
/// meeting both error bounds; `n_s` is the largest count the delay allows.
pub fn plan_params(req: &PlanRequest) -> Result<WatermarkParams> {
    if !(req.sigma.is_finite() && req.sigma > 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {}",
            req.sigma
        )));
    }
    if !(req.p_bar > 0.0 && req.p_bar < 0.5) {
        return Err(Error::invalid(format!(
            "p_bar must lie in (0, 0.5), got {}",
            req.p_bar
        )));
    }
    if !(req.p_under > 0.0 && req.p_under < 1.0) {
        return Err(Error::invalid(format!(
            "p_under must lie in (0, 1), got {}",
            req.p_under
        )));
    }
    if !(req.delay_s > 0.0 && req.sample_rate_hz > 0.0) {
        return Err(Error::invalid("delay and sample rate must be positive"));
    }
    let budget = req.delay_s * req.sample_rate_hz;
    if budget < 4.0 {
        return Err(Error::Infeasible(Constraint::Delay));
    }
    let n_max = budget.floor() as usize;
    let grid = beta_grid(req.sigma);

    let mut any_cloud = false;
    let mut any_attacker = false;
    for n in 2..=n_max {
        // cloud BER falls with beta, attacker BER falls with beta: the feasible
        // set on the grid is the index range [lo, hi]
        let lo = grid.partition_point(|&b| !req.cloud_ok(b, n));
        let hi = grid.partition_point(|&b| req.attacker_ok(b, n));
        any_cloud |= lo < grid.len();
        any_attacker |= hi > 0;
        if lo < hi {
            let n_s = bits_within_delay(req.delay_s, req.sample_rate_hz, n);
            if n_s == 0 {
                return Err(Error::Infeasible(Constraint::Delay));
            }
            return WatermarkParams::new(grid[lo], n, n_s, req.sample_rate_hz);
        }
    }
    Err(Error::Infeasible(match (any_cloud, any_attacker) {
        (false, _) => Constraint::CloudBer,
        (true, false) => Constraint::AttackerBer,
        (true, true) => Constraint::Joint,
    }))
}
