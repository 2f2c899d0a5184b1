//! Single-layer LSTM with an affine read-out at every step, trained by
//! backpropagation through time on a mean-squared-error loss.
//!
//! Parameters live in one flat buffer, laid out as
//! `w_ih (4H x I) | w_hh (4H x H) | b (4H) | w_out (O x H) | b_out (O)`,
//! all row-major, gate blocks ordered input, forget, cell, output.

pub mod tasks;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct LstmModel {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u32,
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    gate_order: Vec<String>,
    w_ih: Vec<f64>,
    w_hh: Vec<f64>,
    b: Vec<f64>,
    w_out: Vec<f64>,
    b_out: Vec<f64>,
}

impl From<LstmModel> for ModelDoc {
    fn from(m: LstmModel) -> Self {
        let l = m.layout();
        let p = &m.params;
        ModelDoc {
            version: MODEL_VERSION,
            input_dim: m.input_dim,
            hidden_dim: m.hidden_dim,
            output_dim: m.output_dim,
            gate_order: GATE_ORDER.iter().map(|s| s.to_string()).collect(),
            w_ih: p[l.w_ih..l.w_hh].to_vec(),
            w_hh: p[l.w_hh..l.b].to_vec(),
            b: p[l.b..l.w_out].to_vec(),
            w_out: p[l.w_out..l.b_out].to_vec(),
            b_out: p[l.b_out..].to_vec(),
        }
    }
}

impl TryFrom<ModelDoc> for LstmModel {
    type Error = Error;

    fn try_from(d: ModelDoc) -> Result<Self> {
        if d.version != MODEL_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model version {}",
                d.version
            )));
        }
        if d.gate_order != GATE_ORDER {
            return Err(Error::invalid(format!(
                "unexpected gate order {:?}",
                d.gate_order
            )));
        }
        let mut m = LstmModel::zeros(d.input_dim, d.hidden_dim, d.output_dim)?;
        let l = m.layout();
        let parts = [
            (&d.w_ih, l.w_hh - l.w_ih, "w_ih"),
            (&d.w_hh, l.b - l.w_hh, "w_hh"),
            (&d.b, l.w_out - l.b, "b"),
            (&d.w_out, l.b_out - l.w_out, "w_out"),
            (&d.b_out, m.params.len() - l.b_out, "b_out"),
        ];
        let mut flat = Vec::with_capacity(m.params.len());
        for (v, want, name) in parts {
            if v.len() != want {
                return Err(Error::shape(format!(
                    "{name} has {} values, expected {want}",
                    v.len()
                )));
            }
            flat.extend_from_slice(v);
        }
        m.set_params(&flat)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w_ih: usize,
    w_hh: usize,
    b: usize,
    w_out: usize,
    b_out: usize,
}

impl LstmModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::invalid("LSTM dimensions must be positive"));
        }
        let len = 4 * hidden_dim * (input_dim + hidden_dim + 1) + output_dim * (hidden_dim + 1);
        Ok(Self {
            input_dim,
            hidden_dim,
            output_dim,
            params: vec![0.0; len],
        })
    }

    /// Uniform weights in `±1/sqrt(hidden_dim)`, forget-gate bias 1.
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        use rand::Rng;
        let mut m = Self::zeros(input_dim, hidden_dim, output_dim)?;
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut r = rng::seeded(seed);
        for p in m.params.iter_mut() {
            *p = r.random_range(-bound..bound);
        }
        let l = m.layout();
        let h = hidden_dim;
        m.params[l.b + h..l.b + 2 * h].fill(1.0);
        Ok(m)
    }

    fn layout(&self) -> Layout {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let w_hh = 4 * h * i;
        let b = w_hh + 4 * h * h;
        let w_out = b + 4 * h;
        let b_out = w_out + o * h;
        let _ = o;
        Layout {
            w_ih: 0,
            w_hh,
            b,
            w_out,
            b_out,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Sets the read-out to zero weights and the given bias.
    pub fn set_output_bias(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.output_dim {
            return Err(Error::shape("output bias length differs from output_dim"));
        }
        let l = self.layout();
        self.params[l.w_out..l.b_out].fill(0.0);
        self.params[l.b_out..].copy_from_slice(bias);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Runs the recurrence from zero state, returning one output vector per input.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Err(Error::invalid("input sequence must not be empty"));
        }
        if let Some((t, v)) = inputs
            .iter()
            .enumerate()
            .find(|(_, v)| v.len() != self.input_dim)
        {
            return Err(Error::shape(format!(
                "input {t} has dimension {}, expected {}",
                v.len(),
                self.input_dim
            )));
        }
        let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
        let out = self.forward_flat(&flat);
        Ok(out.chunks(self.output_dim).map(<[f64]>::to_vec).collect())
    }

    /// Forward pass over `T x input_dim` row-major inputs, returning `T x output_dim`.
    pub(crate) fn forward_flat(&self, inputs: &[f64]) -> Vec<f64> {
        let steps = inputs.len() / self.input_dim;
        let h = self.hidden_dim;
        let mut state = StepState::new(h);
        let mut out = vec![0.0; steps * self.output_dim];
        for t in 0..steps {
            let x = &inputs[t * self.input_dim..(t + 1) * self.input_dim];
            self.step(x, &mut state);
            self.readout(
                &state.h,
                &mut out[t * self.output_dim..(t + 1) * self.output_dim],
            );
        }
        out
    }

    fn step(&self, x: &[f64], s: &mut StepState) {
        let l = self.layout();
        let (ni, h) = (self.input_dim, self.hidden_dim);
        let p = &self.params;
        for r in 0..4 * h {
            let mut z = p[l.b + r];
            let wi = &p[l.w_ih + r * ni..l.w_ih + (r + 1) * ni];
            z += wi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let wh = &p[l.w_hh + r * h..l.w_hh + (r + 1) * h];
            z += dot(wh, &s.h);
            s.z[r] = z;
        }
        for k in 0..h {
            let i = sigmoid(s.z[k]);
            let f = sigmoid(s.z[h + k]);
            let g = s.z[2 * h + k].tanh();
            let o = sigmoid(s.z[3 * h + k]);
            s.gates[k] = i;
            s.gates[h + k] = f;
            s.gates[2 * h + k] = g;
            s.gates[3 * h + k] = o;
            s.c[k] = f * s.c[k] + i * g;
            s.tanh_c[k] = s.c[k].tanh();
            s.h[k] = o * s.tanh_c[k];
        }
    }

    fn readout(&self, hidden: &[f64], out: &mut [f64]) {
        let l = self.layout();
        let h = self.hidden_dim;
        for (j, y) in out.iter_mut().enumerate() {
            let w = &self.params[l.w_out + j * h..l.w_out + (j + 1) * h];
            *y = self.params[l.b_out + j] + dot(w, hidden);
        }
    }

    /// MSE of one sequence and its gradient with respect to every parameter.
    pub(crate) fn loss_and_grad(&self, seq: &Sequence) -> (f64, Vec<f64>) {
        let (ni, h, no) = (self.input_dim, self.hidden_dim, self.output_dim);
        let l = self.layout();
        let p = &self.params;
        let steps = seq.steps;

        // forward with cache
        let mut hs = vec![0.0; (steps + 1) * h];
        let mut cs = vec![0.0; (steps + 1) * h];
        let mut gates = vec![0.0; steps * 4 * h];
        let mut tanh_cs = vec![0.0; steps * h];
        let mut dys = vec![0.0; steps * no];
        let mut state = StepState::new(h);
        let scale = 1.0 / (steps * no) as f64;
        let mut loss = 0.0;
        let mut y = vec![0.0; no];
        for t in 0..steps {
            self.step(&seq.inputs[t * ni..(t + 1) * ni], &mut state);
            hs[(t + 1) * h..(t + 2) * h].copy_from_slice(&state.h);
            cs[(t + 1) * h..(t + 2) * h].copy_from_slice(&state.c);
            gates[t * 4 * h..(t + 1) * 4 * h].copy_from_slice(&state.gates);
            tanh_cs[t * h..(t + 1) * h].copy_from_slice(&state.tanh_c);
            self.readout(&state.h, &mut y);
            for j in 0..no {
                let e = y[j] - seq.targets[t * no + j];
                loss += e * e;
                dys[t * no + j] = 2.0 * e * scale;
            }
        }
        loss *= scale;

        let mut grad = vec![0.0; p.len()];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let mut dh = vec![0.0; h];
        for t in (0..steps).rev() {
            let h_t = &hs[(t + 1) * h..(t + 2) * h];
            let h_prev = &hs[t * h..(t + 1) * h];
            let c_prev = &cs[t * h..(t + 1) * h];
            let g_t = &gates[t * 4 * h..(t + 1) * 4 * h];
            let tc = &tanh_cs[t * h..(t + 1) * h];
            let dy = &dys[t * no..(t + 1) * no];

            dh.copy_from_slice(&dh_next);
            for j in 0..no {
                let w = &p[l.w_out + j * h..l.w_out + (j + 1) * h];
                let gw = &mut grad[l.w_out + j * h..l.w_out + (j + 1) * h];
                for k in 0..h {
                    gw[k] += dy[j] * h_t[k];
                    dh[k] += dy[j] * w[k];
                }
                grad[l.b_out + j] += dy[j];
            }
            for k in 0..h {
                let (i, f, g, o) = (g_t[k], g_t[h + k], g_t[2 * h + k], g_t[3 * h + k]);
                let d_o = dh[k] * tc[k];
                let dc = dh[k] * o * (1.0 - tc[k] * tc[k]) + dc_next[k];
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            let x = &seq.inputs[t * ni..(t + 1) * ni];
            dh_next.fill(0.0);
            for r in 0..4 * h {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                grad[l.b + r] += d;
                let gi = &mut grad[l.w_ih + r * ni..l.w_ih + (r + 1) * ni];
                for (g, xv) in gi.iter_mut().zip(x) {
                    *g += d * xv;
                }
                let row = l.w_hh + r * h;
                for k in 0..h {
                    grad[row + k] += d * h_prev[k];
                    dh_next[k] += d * p[row + k];
                }
            }
        }
        (loss, grad)
    }

    fn check_sequence(&self, seq: &Sequence) -> Result<()> {
        if seq.input_dim != self.input_dim || seq.output_dim != self.output_dim {
            return Err(Error::shape(format!(
                "sequence is {}->{}, model is {}->{}",
                seq.input_dim, seq.output_dim, self.input_dim, self.output_dim
            )));
        }
        Ok(())
    }

    /// Mean loss over a dataset and the mean gradient.
    pub fn dataset_loss_and_grad(&self, data: &[Sequence]) -> Result<(f64, Vec<f64>)> {
        if data.is_empty() {
            return Err(Error::invalid("dataset must not be empty"));
        }
        for s in data {
            self.check_sequence(s)?;
        }
        let parts: Vec<(f64, Vec<f64>)> = data.par_iter().map(|s| self.loss_and_grad(s)).collect();
        let inv = 1.0 / data.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (l, g) in &parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grad))
    }

    pub fn dataset_loss(&self, data: &[Sequence]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::invalid("dataset must not be empty"));
        }
        for s in data {
            self.check_sequence(s)?;
        }
        let losses: Vec<f64> = data.par_iter().map(|s| self.sequence_loss(s)).collect();
        Ok(losses.iter().sum::<f64>() / data.len() as f64)
    }

    fn sequence_loss(&self, seq: &Sequence) -> f64 {
        let out = self.forward_flat(&seq.inputs);
        let se: f64 = out
            .iter()
            .zip(&seq.targets)
            .map(|(y, t)| (y - t) * (y - t))
            .sum();
        se / out.len() as f64
    }
}

struct StepState {
    z: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl StepState {
    fn new(h: usize) -> Self {
        Self {
            z: vec![0.0; 4 * h],
            gates: vec![0.0; 4 * h],
            c: vec![0.0; h],
            tanh_c: vec![0.0; h],
            h: vec![0.0; h],
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One training example: `steps` input vectors and as many target vectors,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    steps: usize,
    input_dim: usize,
    output_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Sequence {
    pub fn new(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::shape(format!(
                "{} inputs for {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let input_dim = inputs[0].len();
        let output_dim = targets[0].len();
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::shape("input and target vectors must be non-empty"));
        }
        if inputs.iter().any(|v| v.len() != input_dim)
            || targets.iter().any(|v| v.len() != output_dim)
        {
            return Err(Error::shape("ragged sequence"));
        }
        Self::from_flat(
            inputs.len(),
            input_dim,
            output_dim,
            inputs.concat(),
            targets.concat(),
        )
    }

    pub fn from_flat(
        steps: usize,
        input_dim: usize,
        output_dim: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if steps == 0 || inputs.len() != steps * input_dim || targets.len() != steps * output_dim {
            return Err(Error::shape(
                "flat sequence buffers do not match steps and dims",
            ));
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("sequence values must be finite"));
        }
        Ok(Self {
            steps,
            input_dim,
            output_dim,
            inputs,
            targets,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences, over every parameter.
pub fn gradient_check(model: &LstmModel, sample: &Sequence, epsilon: f64) -> Result<f64> {
    if !(1e-8..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon must lie in [1e-8, 1e-3], got {epsilon}"
        )));
    }
    model.check_sequence(sample)?;
    let (_, analytic) = model.loss_and_grad(sample);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, &ga) in analytic.iter().enumerate() {
        let orig = model.params[k];
        probe.params[k] = orig + epsilon;
        let up = probe.sequence_loss(sample);
        probe.params[k] = orig - epsilon;
        let down = probe.sequence_loss(sample);
        probe.params[k] = orig;
        let gn = (up - down) / (2.0 * epsilon);
        let rel = (ga - gn).abs() / ga.abs().max(gn.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Seeds fresh initialization when a caller builds the model from this config.
    pub seed: u64,
    /// Gradient-norm clip; `None` disables clipping.
    pub gradient_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            seed: 0,
            gradient_clip: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss measured at the start of each epoch, before its update.
    pub epoch_loss: Vec<f64>,
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// Full-batch gradient descent on the mean per-sequence MSE.
pub fn lstm_train(
    model: &mut LstmModel,
    data: &[Sequence],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    lstm_train_with(model, data, cfg, |_, _| {})
}

/// As [`lstm_train`], calling `on_epoch(epoch, loss)` after each loss evaluation.
pub fn lstm_train_with(
    model: &mut LstmModel,
    data: &[Sequence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if cfg.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if let Some(c) = cfg.gradient_clip {
        if c.is_nan() || c <= 0.0 {
            return Err(Error::invalid("gradient clip must be positive"));
        }
    }
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (loss, mut grad) = model.dataset_loss_and_grad(data)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        epoch_loss.push(loss);
        on_epoch(epoch, loss);
        if let Some(clip) = cfg.gradient_clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        for (p, g) in model.params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    let final_loss = *epoch_loss.last().expect("at least one epoch");
    Ok(TrainReport {
        final_loss,
        epochs_run: epoch_loss.len(),
        epoch_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sequence(steps: usize, ni: usize, no: usize, seed: u64) -> Sequence {
        let mut r = rng::seeded(seed);
        let inputs: Vec<f64> = (0..steps * ni)
            .map(|_| rng::gaussian(&mut r, 0.0, 1.0))
            .collect();
        let targets: Vec<f64> = (0..steps * no)
            .map(|_| rng::gaussian(&mut r, 0.0, 0.5))
            .collect();
        Sequence::from_flat(steps, ni, no, inputs, targets).unwrap()
    }

    #[test]
    fn zero_model_outputs_bias() {
        let mut m = LstmModel::zeros(3, 4, 2).unwrap();
        m.set_output_bias(&[0.25, -1.5]).unwrap();
        let out = m.forward(&vec![vec![1.0, -2.0, 3.0]; 5]).unwrap();
        assert!(out.iter().all(|y| y == &vec![0.25, -1.5]));
    }

    #[test]
    fn zero_readout_is_constant() {
        let mut m = LstmModel::init(2, 6, 3, 4).unwrap();
        m.set_output_bias(&[1.0, 2.0, 3.0]).unwrap();
        let seq = random_sequence(12, 2, 1, 9);
        let inputs: Vec<Vec<f64>> = seq.inputs().chunks(2).map(<[f64]>::to_vec).collect();
        for y in m.forward(&inputs).unwrap() {
            assert_eq!(y, vec![1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn outputs_are_causal() {
        let m = LstmModel::init(2, 8, 2, 17).unwrap();
        let x = vec![0.3, -0.7];
        let one = m.forward(std::slice::from_ref(&x)).unwrap();
        let two = m.forward(&[x.clone(), x]).unwrap();
        assert_eq!(one[0], two[0]);

        let seq = random_sequence(30, 2, 1, 3);
        let inputs: Vec<Vec<f64>> = seq.inputs().chunks(2).map(<[f64]>::to_vec).collect();
        let full = m.forward(&inputs).unwrap();
        let head = m.forward(&inputs[..11]).unwrap();
        assert_eq!(&full[..11], &head[..]);
    }

    #[test]
    fn forward_rejects_bad_dimensions() {
        let m = LstmModel::zeros(2, 3, 1).unwrap();
        assert!(matches!(m.forward(&[vec![1.0]]), Err(Error::Shape(_))));
        assert!(matches!(m.forward(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gradient_check_flat_point() {
        let m = LstmModel::zeros(2, 4, 1).unwrap();
        let seq = Sequence::from_flat(5, 2, 1, vec![0.0; 10], vec![0.0; 5]).unwrap();
        assert_eq!(gradient_check(&m, &seq, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn gradient_check_random_model() {
        let m = LstmModel::init(2, 8, 1, 5).unwrap();
        let seq = random_sequence(20, 2, 1, 6);
        let err = gradient_check(&m, &seq, 1e-6).unwrap();
        assert!(err <= 1e-5, "max relative error {err}");
    }

    #[test]
    fn gradient_check_epsilon_bounds() {
        let m = LstmModel::zeros(1, 2, 1).unwrap();
        let seq = random_sequence(3, 1, 1, 1);
        assert!(matches!(
            gradient_check(&m, &seq, 0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn self_generated_targets_stay_at_zero_loss() {
        let m = LstmModel::init(2, 5, 2, 8).unwrap();
        let seq = random_sequence(15, 2, 2, 2);
        let inputs: Vec<Vec<f64>> = seq.inputs().chunks(2).map(<[f64]>::to_vec).collect();
        let targets = m.forward(&inputs).unwrap();
        let data = vec![Sequence::new(&inputs, &targets).unwrap()];
        let mut trained = m.clone();
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let report = lstm_train(&mut trained, &data, &cfg).unwrap();
        assert!(report.epoch_loss.iter().all(|&l| l == 0.0));
        assert_eq!(trained, m);
    }

    #[test]
    fn overfits_one_sequence() {
        let steps = 12;
        let inputs: Vec<Vec<f64>> = (0..steps).map(|t| vec![(t as f64 * 0.7).sin()]).collect();
        let targets: Vec<Vec<f64>> = (0..steps)
            .map(|t| vec![0.5 * (t as f64 * 0.7 - 0.4).sin()])
            .collect();
        let data = vec![Sequence::new(&inputs, &targets).unwrap()];
        let mut m = LstmModel::init(1, 16, 1, 11).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            learning_rate: 0.5,
            seed: 11,
            gradient_clip: Some(1.0),
        };
        let report = lstm_train(&mut m, &data, &cfg).unwrap();
        assert!(
            report.final_loss <= 1e-3,
            "final loss {}",
            report.final_loss
        );
        assert_eq!(report.final_loss, *report.epoch_loss.last().unwrap());
        let down = report
            .epoch_loss
            .windows(2)
            .filter(|w| w[1] <= w[0])
            .count();
        assert!(down as f64 >= 0.95 * (report.epoch_loss.len() - 1) as f64);
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<Sequence> = (0..3).map(|s| random_sequence(10, 2, 1, s)).collect();
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let mut a = LstmModel::init(2, 6, 1, 1).unwrap();
        let mut b = a.clone();
        let ra = lstm_train(&mut a, &data, &cfg).unwrap();
        let rb = lstm_train(&mut b, &data, &cfg).unwrap();
        assert_eq!(ra.epoch_loss, rb.epoch_loss);
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let data = vec![random_sequence(10, 2, 1, 4)];
        let mut m = LstmModel::init(2, 4, 1, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            seed: 0,
            gradient_clip: None,
        };
        assert!(matches!(
            lstm_train(&mut m, &data, &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn model_json_roundtrip() {
        let m = LstmModel::init(2, 3, 4, 99).unwrap();
        let back = LstmModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut doc: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        doc["w_hh"].as_array_mut().unwrap().pop();
        assert!(LstmModel::from_json(&doc.to_string()).is_err());
    }
}
