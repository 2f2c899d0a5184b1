//! Monte Carlo bit error rate over an `(n, beta / sigma)` grid.
//!
//! One trial is one bit: a fresh random key, a random bit, a unit-variance
//! Gaussian carrier of `n` samples, embed, correlate, compare. Trials run in
//! chunks with sub-seeds derived from `(seed, point, chunk)`, so results do
//! not depend on the thread count.

use rayon::prelude::*;

use super::metrics::{BerPoint, MetricsBundle};
use crate::error::{Error, Result};
use crate::rng;
use crate::sswm::{add_spread, correlate, theoretical_ber};

const CHUNK: u64 = 4096;

fn chunk_errors(n: usize, beta: f64, trials: u64, seed: u64) -> u64 {
    let mut r = rng::seeded(seed);
    let mut y = vec![0.0; n];
    let mut errors = 0;
    for _ in 0..trials {
        let chips = rng::signs(&mut r, n);
        let bit = rng::sign(&mut r);
        for v in y.iter_mut() {
            *v = rng::gaussian(&mut r, 0.0, 1.0);
        }
        add_spread(&mut y, &chips, &[bit], beta);
        let c = correlate(&y, &chips)[0];
        let got = if c < 0.0 { -1 } else { 1 };
        if got != bit {
            errors += 1;
        }
    }
    errors
}

/// Empirical BER for one grid point.
pub fn ber_point(n: usize, beta_over_sigma: f64, trials: u64, seed: u64) -> Result<BerPoint> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(beta_over_sigma.is_finite() && beta_over_sigma > 0.0) {
        return Err(Error::invalid(format!(
            "beta/sigma must be positive, got {beta_over_sigma}"
        )));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    let chunks = trials.div_ceil(CHUNK);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(trials - c * CHUNK);
            chunk_errors(n, beta_over_sigma, count, rng::derive_seed(seed, c))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(BerPoint {
        beta_over_sigma,
        n,
        empirical_ber: errors as f64 / trials as f64,
        theoretical_ber: theoretical_ber(beta_over_sigma, 1.0, n)?,
        trials,
    })
}

/// Grid in `n`-major order.
pub fn ber_sweep(
    n_values: &[usize],
    beta_over_sigma_values: &[f64],
    trials: u64,
    seed: u64,
) -> Result<MetricsBundle> {
    let start = std::time::Instant::now();
    let mut points = Vec::with_capacity(n_values.len() * beta_over_sigma_values.len());
    for (i, &n) in n_values.iter().enumerate() {
        for (j, &bos) in beta_over_sigma_values.iter().enumerate() {
            let idx = (i * beta_over_sigma_values.len() + j) as u64;
            points.push(ber_point(n, bos, trials, rng::derive_seed(seed, idx))?);
        }
    }
    Ok(MetricsBundle {
        ber_points: points,
        detection: None,
        power_ratio_curve: Vec::new(),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_closed_form_at_n16() {
        let p = ber_point(16, 0.5, 100_000, 3).unwrap();
        assert!((p.theoretical_ber - 0.022_750_131_948_179_2).abs() < 1e-12);
        assert!((p.empirical_ber - p.theoretical_ber).abs() <= p.tolerance());
    }

    #[test]
    fn vanishing_watermark_is_chance() {
        let p = ber_point(4, 1e-6, 100_000, 4).unwrap();
        assert!(
            (0.49..=0.51).contains(&p.empirical_ber),
            "{}",
            p.empirical_ber
        );
    }

    #[test]
    fn monotone_in_n() {
        let m = ber_sweep(&[4, 16, 64], &[0.25], 100_000, 5).unwrap();
        for w in m.ber_points.windows(2) {
            let slack = w[0].tolerance() + w[1].tolerance();
            assert!(w[1].empirical_ber <= w[0].empirical_ber + slack);
        }
    }

    #[test]
    fn deterministic() {
        let a = ber_sweep(&[8], &[0.5, 1.0], 10_000, 6).unwrap();
        let b = ber_sweep(&[8], &[0.5, 1.0], 10_000, 6).unwrap();
        assert_eq!(a.ber_points, b.ber_points);
    }
}
