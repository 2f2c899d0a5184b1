//! The two learned roles of the dynamic scheme.
//!
//! Encoder (device side). Input per step is `(y / scale, chip)`. The window is
//! presented twice: a read pass with chip 0 and target 0, then a write pass
//! with the key chips, whose per-step target is the watermark residual
//! `(w - y) / scale` of the deterministic fingerprint+embed oracle. The
//! emitted frame is `y + scale * output` over the write pass.
//!
//! Decoder (cloud side). Input per step is `(w / scale, chip)` for one pass.
//! Output channel 0 is trained towards the carried bit of the current span;
//! channels 1..=5 towards the normalized fingerprint `(f - center) / spread`
//! of the original window at every step. Bits are the sign of channel 0
//! averaged over each span; features are read at the last step.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{lstm_train_with, LstmModel, Sequence, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::fingerprint::{
    combine_repeated, dynamic_embed, features, FeatureCalibration, FeatureVector, FEATURE_COUNT,
};
use crate::signal::SignalFrame;
use crate::sswm::{BitStream, PnKey};

pub const NET_VERSION: u32 = 1;
pub const ENCODER_DIMS: (usize, usize) = (2, 1);
pub const DECODER_DIMS: (usize, usize) = (2, 1 + FEATURE_COUNT);
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetRole {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Samples are divided by this before entering the network.
    pub signal_scale: f64,
    pub feature_center: [f64; FEATURE_COUNT],
    pub feature_spread: [f64; FEATURE_COUNT],
}

impl Normalization {
    pub fn from_calibration(calib: &FeatureCalibration) -> Self {
        let centers = calib.centers();
        Self {
            signal_scale: centers[2].max(f64::MIN_POSITIVE).sqrt(),
            feature_center: centers,
            feature_spread: calib.spreads(),
        }
    }
}

/// A trained encoder or decoder together with everything needed to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetDoc", into = "NetDoc")]
pub struct WatermarkNet {
    pub role: NetRole,
    pub n: usize,
    pub n_s: usize,
    pub beta: f64,
    pub normalization: Normalization,
    pub network: LstmModel,
}

#[derive(Serialize, Deserialize)]
struct NetDoc {
    version: u32,
    role: NetRole,
    n: usize,
    n_s: usize,
    beta: f64,
    normalization: Normalization,
    network: LstmModel,
}

impl From<WatermarkNet> for NetDoc {
    fn from(m: WatermarkNet) -> Self {
        NetDoc {
            version: NET_VERSION,
            role: m.role,
            n: m.n,
            n_s: m.n_s,
            beta: m.beta,
            normalization: m.normalization,
            network: m.network,
        }
    }
}

impl TryFrom<NetDoc> for WatermarkNet {
    type Error = Error;

    fn try_from(d: NetDoc) -> Result<Self> {
        if d.version != NET_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model file version {}",
                d.version
            )));
        }
        let net = WatermarkNet {
            role: d.role,
            n: d.n,
            n_s: d.n_s,
            beta: d.beta,
            normalization: d.normalization,
            network: d.network,
        };
        net.validate()?;
        Ok(net)
    }
}

impl WatermarkNet {
    fn validate(&self) -> Result<()> {
        let (i, o) = match self.role {
            NetRole::Encoder => ENCODER_DIMS,
            NetRole::Decoder => DECODER_DIMS,
        };
        if self.network.input_dim() != i || self.network.output_dim() != o {
            return Err(Error::shape(format!(
                "{:?} network must be {i}->{o}, found {}->{}",
                self.role,
                self.network.input_dim(),
                self.network.output_dim()
            )));
        }
        if self.n < 2 || self.n_s < 1 {
            return Err(Error::invalid("model n must be >= 2 and n_s >= 1"));
        }
        let norm = &self.normalization;
        if !(norm.signal_scale > 0.0 && norm.signal_scale.is_finite())
            || norm.feature_spread.iter().any(|s| s.is_nan() || *s <= 0.0)
        {
            return Err(Error::invalid(
                "model normalization constants must be positive",
            ));
        }
        Ok(())
    }

    fn expect(&self, role: NetRole, frame: &SignalFrame, key: &PnKey) -> Result<()> {
        if self.role != role {
            return Err(Error::shape(format!(
                "model is a {:?}, not a {role:?}",
                self.role
            )));
        }
        if key.n() != self.n || frame.len() != self.n * self.n_s {
            return Err(Error::shape(format!(
                "model expects n = {}, n * n_s = {}; got key of {} chips and {} samples",
                self.n,
                self.n * self.n_s,
                key.n(),
                frame.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn chip_at(key: &PnKey, t: usize) -> f64 {
    f64::from(key.chips()[t % key.n()])
}

fn encoder_inputs(y: &SignalFrame, key: &PnKey, scale: f64) -> Vec<f64> {
    let t_len = y.len();
    let mut inputs = Vec::with_capacity(4 * t_len);
    for &v in y.samples() {
        inputs.extend([v / scale, 0.0]);
    }
    for (t, &v) in y.samples().iter().enumerate() {
        inputs.extend([v / scale, chip_at(key, t)]);
    }
    inputs
}

fn decoder_inputs(w: &SignalFrame, key: &PnKey, scale: f64) -> Vec<f64> {
    w.samples()
        .iter()
        .enumerate()
        .flat_map(|(t, &v)| [v / scale, chip_at(key, t)])
        .collect()
}

/// Encoder training pair for one original window.
pub fn encoder_sequence(
    y: &SignalFrame,
    key: &PnKey,
    calib: &FeatureCalibration,
    beta: f64,
    norm: &Normalization,
) -> Result<Sequence> {
    let (w, _) = dynamic_embed(y, key, calib, beta)?;
    let scale = norm.signal_scale;
    let mut targets = vec![0.0; 2 * y.len()];
    for (t, (a, b)) in w.samples().iter().zip(y.samples()).enumerate() {
        targets[y.len() + t] = (a - b) / scale;
    }
    Sequence::from_flat(2 * y.len(), 2, 1, encoder_inputs(y, key, scale), targets)
}

/// Decoder training pair: the oracle-watermarked window and its bits and features.
pub fn decoder_sequence(
    y: &SignalFrame,
    key: &PnKey,
    calib: &FeatureCalibration,
    beta: f64,
    norm: &Normalization,
) -> Result<Sequence> {
    let (w, bits) = dynamic_embed(y, key, calib, beta)?;
    let f = features(y)?.to_array();
    let fnorm: Vec<f64> = (0..FEATURE_COUNT)
        .map(|k| (f[k] - norm.feature_center[k]) / norm.feature_spread[k])
        .collect();
    let n = key.n();
    let mut targets = Vec::with_capacity(w.len() * DECODER_DIMS.1);
    for t in 0..w.len() {
        targets.push(f64::from(bits.bits()[t / n]));
        targets.extend_from_slice(&fnorm);
    }
    Sequence::from_flat(
        w.len(),
        2,
        DECODER_DIMS.1,
        decoder_inputs(&w, key, norm.signal_scale),
        targets,
    )
}

/// Settings for fitting one role; `train.seed` seeds the weight initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub hidden_dim: usize,
    pub train: TrainConfig,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            hidden_dim: DEFAULT_HIDDEN,
            train: TrainConfig::default(),
        }
    }
}

fn check_windows(windows: &[SignalFrame], key: &PnKey) -> Result<usize> {
    let first = windows
        .first()
        .ok_or_else(|| Error::invalid("training needs at least one window"))?;
    let len = first.len();
    if len % key.n() != 0 || windows.iter().any(|w| w.len() != len) {
        return Err(Error::shape(
            "training windows must share a length of n * n_s",
        ));
    }
    Ok(len / key.n())
}

pub fn train_role(
    role: NetRole,
    windows: &[SignalFrame],
    key: &PnKey,
    calib: &FeatureCalibration,
    beta: f64,
    cfg: &TaskConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(WatermarkNet, TrainReport)> {
    let n_s = check_windows(windows, key)?;
    let norm = Normalization::from_calibration(calib);
    let build = match role {
        NetRole::Encoder => encoder_sequence,
        NetRole::Decoder => decoder_sequence,
    };
    let data = windows
        .iter()
        .map(|y| build(y, key, calib, beta, &norm))
        .collect::<Result<Vec<_>>>()?;
    let (i, o) = match role {
        NetRole::Encoder => ENCODER_DIMS,
        NetRole::Decoder => DECODER_DIMS,
    };
    let mut network = LstmModel::init(i, cfg.hidden_dim, o, cfg.train.seed)?;
    let report = lstm_train_with(&mut network, &data, &cfg.train, on_epoch)?;
    let net = WatermarkNet {
        role,
        n: key.n(),
        n_s,
        beta,
        normalization: norm,
        network,
    };
    Ok((net, report))
}

/// Runs the device encoder on an original window.
pub fn device_encode(net: &WatermarkNet, y: &SignalFrame, key: &PnKey) -> Result<SignalFrame> {
    net.expect(NetRole::Encoder, y, key)?;
    let scale = net.normalization.signal_scale;
    let out = net.network.forward_flat(&encoder_inputs(y, key, scale));
    let tail = &out[y.len()..];
    let xs = y
        .samples()
        .iter()
        .zip(tail)
        .map(|(v, r)| v + scale * r)
        .collect();
    SignalFrame::new(xs, y.sample_rate_hz())
}

/// Span-averaged bit channel and the decoded features.
pub fn cloud_decode_soft(
    net: &WatermarkNet,
    w: &SignalFrame,
    key: &PnKey,
) -> Result<(Vec<f64>, FeatureVector)> {
    net.expect(NetRole::Decoder, w, key)?;
    let norm = &net.normalization;
    let out = net
        .network
        .forward_flat(&decoder_inputs(w, key, norm.signal_scale));
    let width = DECODER_DIMS.1;
    let n = net.n;
    let soft = (0..net.n_s)
        .map(|i| (i * n..(i + 1) * n).map(|t| out[t * width]).sum::<f64>() / n as f64)
        .collect();
    let last = &out[(w.len() - 1) * width..];
    let f = std::array::from_fn(|k| norm.feature_center[k] + norm.feature_spread[k] * last[1 + k]);
    Ok((soft, FeatureVector::from_array(f)))
}

pub fn cloud_decode(
    net: &WatermarkNet,
    w: &SignalFrame,
    key: &PnKey,
) -> Result<(BitStream, FeatureVector)> {
    let (soft, f) = cloud_decode_soft(net, w, key)?;
    let bits = BitStream::new(soft.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect())?;
    Ok((bits, f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderEval {
    /// Mean squared difference from the oracle frame, in signal units.
    pub mse: f64,
    /// Same, divided by `beta^2`.
    pub relative_mse: f64,
}

pub fn evaluate_encoder(
    net: &WatermarkNet,
    windows: &[SignalFrame],
    key: &PnKey,
    calib: &FeatureCalibration,
) -> Result<EncoderEval> {
    let mut se = 0.0;
    let mut count = 0usize;
    for y in windows {
        let (oracle, _) = dynamic_embed(y, key, calib, net.beta)?;
        let got = device_encode(net, y, key)?;
        se += got
            .samples()
            .iter()
            .zip(oracle.samples())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += y.len();
    }
    if count == 0 {
        return Err(Error::invalid("evaluation needs at least one window"));
    }
    let mse = se / count as f64;
    Ok(EncoderEval {
        mse,
        relative_mse: mse / (net.beta * net.beta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderEval {
    /// Pooled fraction of bits equal to the oracle's.
    pub bit_agreement: f64,
    /// Fraction of windows whose code, after combining repeats, equals the oracle's.
    pub window_agreement: f64,
    /// Per feature, fraction of windows decoded within `0.1 * spread`.
    pub feature_within_tolerance: [f64; FEATURE_COUNT],
}

pub fn evaluate_decoder(
    net: &WatermarkNet,
    windows: &[SignalFrame],
    key: &PnKey,
    calib: &FeatureCalibration,
) -> Result<DecoderEval> {
    if windows.is_empty() {
        return Err(Error::invalid("evaluation needs at least one window"));
    }
    let mut bits_same = 0usize;
    let mut bits_total = 0usize;
    let mut windows_same = 0usize;
    let mut within = [0usize; FEATURE_COUNT];
    for y in windows {
        let (w, truth) = dynamic_embed(y, key, calib, net.beta)?;
        let (soft, fv) = cloud_decode_soft(net, &w, key)?;
        let hard: Vec<i8> = soft.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect();
        bits_same += hard
            .iter()
            .zip(truth.bits())
            .filter(|(a, b)| a == b)
            .count();
        bits_total += hard.len();
        if combine_repeated(&soft, calib.code_len()) == truth.bits() {
            windows_same += 1;
        }
        let want = features(y)?.to_array();
        let got = fv.to_array();
        for k in 0..FEATURE_COUNT {
            if (got[k] - want[k]).abs() <= 0.1 * net.normalization.feature_spread[k] {
                within[k] += 1;
            }
        }
    }
    let m = windows.len() as f64;
    Ok(DecoderEval {
        bit_agreement: bits_same as f64 / bits_total as f64,
        window_agreement: windows_same as f64 / m,
        feature_within_tolerance: within.map(|c| c as f64 / m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::calibrate;
    use crate::signal::gen_gaussian;
    use crate::sswm::gen_pn_key;

    fn setup() -> (Vec<SignalFrame>, PnKey, FeatureCalibration) {
        let windows = gen_gaussian(0.0, 1.0, 40 * 32, 1000.0, 1)
            .unwrap()
            .windows(32)
            .unwrap();
        let calib = calibrate(&windows, 1).unwrap();
        (windows, gen_pn_key(4, 2).unwrap(), calib)
    }

    #[test]
    fn encoder_targets_are_the_oracle_residual() {
        let (windows, key, calib) = setup();
        let norm = Normalization::from_calibration(&calib);
        let seq = encoder_sequence(&windows[0], &key, &calib, 0.5, &norm).unwrap();
        assert_eq!(seq.steps(), 64);
        let (w, _) = dynamic_embed(&windows[0], &key, &calib, 0.5).unwrap();
        for t in 0..32 {
            assert_eq!(seq.targets()[t], 0.0);
            assert_eq!(seq.inputs()[2 * t + 1], 0.0);
            let r = (w.samples()[t] - windows[0].samples()[t]) / norm.signal_scale;
            assert!((seq.targets()[32 + t] - r).abs() < 1e-12);
            assert_eq!(
                seq.inputs()[2 * (32 + t) + 1],
                f64::from(key.chips()[t % 4])
            );
        }
    }

    #[test]
    fn untrained_models_run_and_roundtrip() {
        let (windows, key, calib) = setup();
        let cfg = TaskConfig {
            hidden_dim: 4,
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
        };
        let (enc, report) = train_role(
            NetRole::Encoder,
            &windows[..4],
            &key,
            &calib,
            0.5,
            &cfg,
            |_, _| {},
        )
        .unwrap();
        assert_eq!(report.epochs_run, 2);
        let a = device_encode(&enc, &windows[5], &key).unwrap();
        assert_eq!(a, device_encode(&enc, &windows[5], &key).unwrap());
        let back = WatermarkNet::from_json(&enc.to_json().unwrap()).unwrap();
        assert_eq!(back, enc);
        assert_eq!(device_encode(&back, &windows[5], &key).unwrap(), a);

        let (dec, _) = train_role(
            NetRole::Decoder,
            &windows[..4],
            &key,
            &calib,
            0.5,
            &cfg,
            |_, _| {},
        )
        .unwrap();
        let (bits, _) = cloud_decode(&dec, &a, &key).unwrap();
        assert_eq!(bits.len(), 8);
        assert!(matches!(cloud_decode(&enc, &a, &key), Err(Error::Shape(_))));
        assert!(matches!(
            device_encode(&enc, &windows[5], &gen_pn_key(8, 1).unwrap()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn missing_model_file_is_io_error() {
        assert!(matches!(
            WatermarkNet::load("/nonexistent/model.json"),
            Err(Error::Io { .. })
        ));
    }
}
