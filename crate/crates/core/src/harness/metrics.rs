use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detect::DetectionReport;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub beta_over_sigma: f64,
    pub n: usize,
    pub empirical_ber: f64,
    pub theoretical_ber: f64,
    /// Bits behind `empirical_ber`.
    pub trials: u64,
}

impl BerPoint {
    /// Three binomial standard deviations around the theoretical rate.
    pub fn tolerance(&self) -> f64 {
        let p = self.theoretical_ber;
        3.0 * (p * (1.0 - p) / self.trials.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub m: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub ber_points: Vec<BerPoint>,
    pub detection: Option<DetectionReport>,
    pub power_ratio_curve: Vec<RatioPoint>,
    pub runtime_s: f64,
}

impl MetricsBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with `runtime_s` removed; identical inputs give identical bytes.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("runtime_s");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn ber_csv(&self) -> String {
        let mut s = String::from("beta_over_sigma,n,empirical_ber,theoretical_ber,trials\n");
        for p in &self.ber_points {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                p.beta_over_sigma, p.n, p.empirical_ber, p.theoretical_ber, p.trials
            );
        }
        s
    }

    pub fn detection_csv(&self) -> String {
        let mut s = String::from("window,mismatch,alarm\n");
        if let Some(d) = &self.detection {
            for (i, m) in d.per_window_mismatch.iter().enumerate() {
                let _ = writeln!(s, "{i},{m},{}", u8::from(d.alarm_window == Some(i)));
            }
        }
        s
    }

    pub fn power_ratio_csv(&self) -> String {
        let mut s = String::from("m,ratio\n");
        for p in &self.power_ratio_curve {
            let _ = writeln!(s, "{},{}", p.m, p.ratio);
        }
        s
    }
}
