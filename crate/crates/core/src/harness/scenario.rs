//! End-to-end scenario: device watermarking, optional attack, transport over
//! the wire codec, cloud verification, metrics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{BerPoint, MetricsBundle, RatioPoint};
use super::wire::{decode_frame, encode_frame};
use crate::detect::{dynamic_verify, static_verify, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::fingerprint::{calibrate, dynamic_embed, fingerprint_bits, FeatureCalibration};
use crate::lstm::tasks::{device_encode, NetRole, WatermarkNet};
use crate::rng::derive_seed;
use crate::signal::{gen_gaussian, load_csv, stats, SignalFrame};
use crate::sswm::{
    embed, extract, gen_pn_key, hard_bits, theoretical_ber, BitStream, PnKey, WatermarkParams,
};
use crate::threat::{
    accumulate, estimate_bits, estimate_key, forge, inject, power_ratio_curve, AttackConfig,
    AttackKind,
};

/// Sub-seed indices derived from the key or source seed.
const SEED_REFERENCE_BITS: u64 = 1;
const SEED_EAVESDROP: u64 = 2;
const SEED_CALIBRATION: u64 = 3;

pub const CALIBRATION_WINDOWS: usize = 200;
pub const DEFAULT_RATIO_MS: [usize; 7] = [1, 2, 5, 10, 20, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Static,
    DynamicOracle,
    DynamicLstm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Synthetic { mean: f64, std: f64, seed: u64 },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub encoder: PathBuf,
    pub decoder: PathBuf,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_bits_per_feature() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    pub params: WatermarkParams,
    pub source: Source,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    pub duration_s: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub key_seed: u64,
    #[serde(default)]
    pub device_id: u32,
    /// Calibration file for the dynamic modes; derived from the source when absent.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    #[serde(default = "default_bits_per_feature")]
    pub bits_per_feature: usize,
    /// Required for `dynamic_lstm`.
    #[serde(default)]
    pub models: Option<ModelPaths>,
    /// Send every window through the frame codec.
    #[serde(default = "default_true")]
    pub wire: bool,
    /// Accumulation sizes for the key-power curve; defaults to
    /// [`DEFAULT_RATIO_MS`] up to the eavesdropper's window count.
    #[serde(default)]
    pub power_ratio_ms: Option<Vec<usize>>,
}

fn field(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::invalid(format!("{path}: {msg}"))
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    /// Reads a scenario file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sc = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Source::Csv { path } = &mut sc.source {
            fix(path);
        }
        if let Some(c) = &mut sc.calibration {
            fix(c);
        }
        if let Some(m) = &mut sc.models {
            fix(&mut m.encoder);
            fix(&mut m.decoder);
        }
        Ok(sc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn window_count(&self) -> Result<usize> {
        let total = self.duration_s * self.params.sample_rate_hz;
        let windows = total / self.params.window_len() as f64;
        let rounded = windows.round();
        if rounded < 1.0 || (windows - rounded).abs() > 1e-9 * windows.max(1.0) {
            return Err(field(
                "duration_s",
                format!(
                    "{} s at {} Hz is not a whole number of {}-sample windows",
                    self.duration_s,
                    self.params.sample_rate_hz,
                    self.params.window_len()
                ),
            ));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.beta.is_finite() && p.beta > 0.0) {
            return Err(field("params.beta", "must be positive"));
        }
        if p.n < 2 {
            return Err(field("params.n", "must be at least 2"));
        }
        if p.n_s < 1 {
            return Err(field("params.n_s", "must be at least 1"));
        }
        if !(p.sample_rate_hz.is_finite() && p.sample_rate_hz > 0.0) {
            return Err(field("params.sample_rate_hz", "must be positive"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(field("duration_s", "must be positive"));
        }
        self.window_count()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(field("threshold", "must lie in (0, 1)"));
        }
        if let Source::Synthetic { mean, std, .. } = self.source {
            if !mean.is_finite() {
                return Err(field("source.mean", "must be finite"));
            }
            if !(std.is_finite() && std >= 0.0) {
                return Err(field("source.std", "must be nonnegative"));
            }
        }
        if self.bits_per_feature == 0 {
            return Err(field("bits_per_feature", "must be positive"));
        }
        if let Some(a) = &self.attack {
            a.validate(p.window_len())?;
            if a.kind == AttackKind::EavesdropForge && p.n_s < 2 {
                return Err(field(
                    "params.n_s",
                    "the eavesdropping attack needs n_s >= 2",
                ));
            }
        }
        if self.mode == Mode::DynamicLstm && self.models.is_none() {
            return Err(field(
                "models",
                "dynamic_lstm needs encoder and decoder model files",
            ));
        }
        if let Some(ms) = &self.power_ratio_ms {
            if ms.contains(&0) {
                return Err(field("power_ratio_ms", "entries must be positive"));
            }
        }
        Ok(())
    }
}

/// Everything the device and the cloud share for one run.
struct Provisioned {
    key: PnKey,
    s_ref: BitStream,
    calib: Option<FeatureCalibration>,
    encoder: Option<WatermarkNet>,
    decoder: Option<WatermarkNet>,
}

impl Provisioned {
    /// The device: watermarks one original window, returning the frame and the bits it carries.
    fn watermark(
        &self,
        mode: Mode,
        y: &SignalFrame,
        params: &WatermarkParams,
    ) -> Result<(SignalFrame, BitStream)> {
        match mode {
            Mode::Static => Ok((
                embed(y, &self.key, &self.s_ref, params.beta)?,
                self.s_ref.clone(),
            )),
            Mode::DynamicOracle => dynamic_embed(y, &self.key, self.calib(), params.beta),
            Mode::DynamicLstm => {
                let enc = self
                    .encoder
                    .as_ref()
                    .expect("encoder loaded for dynamic_lstm");
                let bits = fingerprint_bits(y, self.calib(), params.n_s)?;
                Ok((device_encode(enc, y, &self.key)?, bits))
            }
        }
    }

    fn calib(&self) -> &FeatureCalibration {
        self.calib
            .as_ref()
            .expect("calibration present in dynamic modes")
    }
}

fn source_windows(sc: &Scenario, count: usize) -> Result<(Vec<SignalFrame>, f64)> {
    let len = sc.params.window_len();
    let fs = sc.params.sample_rate_hz;
    match &sc.source {
        Source::Synthetic { mean, std, seed } => {
            let y = gen_gaussian(*mean, *std, count * len, fs, *seed)?;
            Ok((y.windows(len)?, *std))
        }
        Source::Csv { path } => {
            let frame = load_csv(path, fs)?;
            let need = count * len;
            if frame.len() < need {
                return Err(field(
                    "duration_s",
                    format!(
                        "{} holds {} samples, scenario needs {need}",
                        path.display(),
                        frame.len()
                    ),
                ));
            }
            let head = SignalFrame::new(frame.samples()[..need].to_vec(), fs)?;
            let sigma = stats(&head).std_dev();
            Ok((head.windows(len)?, sigma))
        }
    }
}

/// Windows the eavesdropper records from a separate session of the same device.
fn eavesdrop_originals(
    sc: &Scenario,
    stream: &[SignalFrame],
    m: usize,
) -> Result<Vec<SignalFrame>> {
    let len = sc.params.window_len();
    match &sc.source {
        Source::Synthetic { mean, std, seed } => gen_gaussian(
            *mean,
            *std,
            m * len,
            sc.params.sample_rate_hz,
            derive_seed(*seed, SEED_EAVESDROP),
        )?
        .windows(len),
        Source::Csv { .. } => Ok(stream.iter().cycle().take(m).cloned().collect()),
    }
}

fn calibration_for(sc: &Scenario, stream: &[SignalFrame]) -> Result<FeatureCalibration> {
    if let Some(path) = &sc.calibration {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let calib = FeatureCalibration::from_json(&text)?;
        if calib.bits_per_feature() != sc.bits_per_feature {
            return Err(field(
                "bits_per_feature",
                format!("calibration file uses {}", calib.bits_per_feature()),
            ));
        }
        return Ok(calib);
    }
    let windows = match &sc.source {
        Source::Synthetic { mean, std, seed } => gen_gaussian(
            *mean,
            *std,
            CALIBRATION_WINDOWS * sc.params.window_len(),
            sc.params.sample_rate_hz,
            derive_seed(*seed, SEED_CALIBRATION),
        )?
        .windows(sc.params.window_len())?,
        Source::Csv { .. } => stream.to_vec(),
    };
    calibrate(&windows, sc.bits_per_feature)
}

/// Reference bits of the static scheme for a key seed.
pub fn static_reference_bits(key_seed: u64, n_s: usize) -> Result<BitStream> {
    BitStream::random(n_s, derive_seed(key_seed, SEED_REFERENCE_BITS))
}

fn load_net(path: &Path, role: NetRole, params: &WatermarkParams) -> Result<WatermarkNet> {
    let net = WatermarkNet::load(path)?;
    if net.role != role {
        return Err(field(
            "models",
            format!("{} is not a {role:?} model", path.display()),
        ));
    }
    if net.n != params.n || net.n_s != params.n_s {
        return Err(field(
            "models",
            format!(
                "{} was trained for n = {}, n_s = {}",
                path.display(),
                net.n,
                net.n_s
            ),
        ));
    }
    Ok(net)
}

fn provision(sc: &Scenario, stream: &[SignalFrame]) -> Result<Provisioned> {
    let p = &sc.params;
    let key = gen_pn_key(p.n, sc.key_seed)?;
    let s_ref = static_reference_bits(sc.key_seed, p.n_s)?;
    let calib = match sc.mode {
        Mode::Static => None,
        _ => Some(calibration_for(sc, stream)?),
    };
    let (encoder, decoder) = match (&sc.mode, &sc.models) {
        (Mode::DynamicLstm, Some(m)) => (
            Some(load_net(&m.encoder, NetRole::Encoder, p)?),
            Some(load_net(&m.decoder, NetRole::Decoder, p)?),
        ),
        _ => (None, None),
    };
    Ok(Provisioned {
        key,
        s_ref,
        calib,
        encoder,
        decoder,
    })
}

fn transport(sc: &Scenario, stream: Vec<SignalFrame>) -> Result<Vec<SignalFrame>> {
    if !sc.wire {
        return Ok(stream);
    }
    stream
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let bytes = encode_frame(w, sc.device_id, i as u64, &sc.params)?;
            let d = decode_frame(&bytes)?;
            if d.header.device_id != sc.device_id || d.header.window_index != i as u64 {
                return Err(Error::invalid(format!("frame {i} header echo mismatch")));
            }
            Ok(d.frame)
        })
        .collect()
}

pub fn run_scenario(sc: &Scenario) -> Result<MetricsBundle> {
    let start = std::time::Instant::now();
    sc.validate()?;
    let p = sc.params;
    let count = sc.window_count()?;
    let (originals, sigma) = source_windows(sc, count)?;
    let prov = provision(sc, &originals)?;

    let mut device = Vec::with_capacity(count);
    let mut carried = Vec::with_capacity(count);
    for y in &originals {
        let (w, bits) = prov.watermark(sc.mode, y, &p)?;
        device.push(w);
        carried.push(bits);
    }

    let mut power_curve = Vec::new();
    let (received, first_attacked) = match &sc.attack {
        None => (device, count),
        Some(a) => {
            let first = (a.start_window(p.window_len()) as usize).min(count);
            let attacked = match a.kind {
                AttackKind::Injection => inject(&device, a)?,
                AttackKind::EavesdropForge => {
                    let m = a.eavesdrop_windows;
                    let recorded = eavesdrop_originals(sc, &originals, m)?
                        .iter()
                        .map(|y| prov.watermark(sc.mode, y, &p).map(|(w, _)| w))
                        .collect::<Result<Vec<_>>>()?;
                    let ms: Vec<usize> = match &sc.power_ratio_ms {
                        Some(ms) => ms.clone(),
                        None => {
                            let mut ms: Vec<usize> = DEFAULT_RATIO_MS
                                .iter()
                                .copied()
                                .filter(|&k| k <= m)
                                .collect();
                            if ms.last() != Some(&m) {
                                ms.push(m);
                            }
                            ms
                        }
                    };
                    power_curve = power_ratio_curve(&recorded, &ms, p.n, p.n_s)?
                        .into_iter()
                        .map(|(m, ratio)| RatioPoint { m, ratio })
                        .collect();
                    let acc = accumulate(&recorded, true)?;
                    let key_est = estimate_key(&acc, p.n, p.n_s)?;
                    let bits_est = estimate_bits(&acc, &key_est.chips)?;
                    device
                        .iter()
                        .enumerate()
                        .map(|(i, w)| {
                            if i < first {
                                Ok(w.clone())
                            } else {
                                let cover = a.cover(i as u64, p.window_len(), p.sample_rate_hz)?;
                                forge(&cover, &key_est.chips, &bits_est, p.beta)
                            }
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            (attacked, first)
        }
    };

    let received = transport(sc, received)?;

    let detection = match sc.mode {
        Mode::Static => static_verify(&received, &prov.key, &p, &prov.s_ref, sc.threshold)?,
        Mode::DynamicOracle | Mode::DynamicLstm => dynamic_verify(
            &received,
            &prov.key,
            &p,
            prov.calib.as_ref(),
            prov.decoder.as_ref(),
            sc.threshold,
        )?,
    };

    let mut ber_points = Vec::new();
    if first_attacked > 0 && sigma > 0.0 {
        let mut errors = 0u64;
        let mut total = 0u64;
        for (w, bits) in received.iter().zip(&carried).take(first_attacked) {
            let got = hard_bits(&extract(w, &prov.key, p.n_s, p.beta)?);
            errors += got
                .bits()
                .iter()
                .zip(bits.bits())
                .filter(|(a, b)| a != b)
                .count() as u64;
            total += bits.len() as u64;
        }
        ber_points.push(BerPoint {
            beta_over_sigma: p.beta / sigma,
            n: p.n,
            empirical_ber: errors as f64 / total as f64,
            theoretical_ber: theoretical_ber(p.beta, sigma, p.n)?,
            trials: total,
        });
    }

    Ok(MetricsBundle {
        ber_points,
        detection: Some(detection),
        power_ratio_curve: power_curve,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}
