//! `aqwm`: watermark, verify and attack simulated sensor streams.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O and the like), 2 invalid
//! configuration, 3 alarm raised under `simulate --fail-on-alarm`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use aqwm_core::fingerprint::{calibrate, dynamic_embed, FeatureCalibration};
use aqwm_core::harness::scenario::{static_reference_bits, CALIBRATION_WINDOWS};
use aqwm_core::harness::{ber_sweep, run_scenario, MetricsBundle, Mode, Scenario};
use aqwm_core::lstm::tasks::{evaluate_decoder, evaluate_encoder, train_role, NetRole, TaskConfig};
use aqwm_core::lstm::TrainConfig;
use aqwm_core::rng::derive_seed;
use aqwm_core::signal::{gen_gaussian, load_csv, SignalFrame};
use aqwm_core::sswm::{embed, extract, gen_pn_key, plan_params, PlanMode, PlanRequest};
use aqwm_core::{signal::ProductStats, Error, WatermarkParams};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ALARM: u8 = 3;

#[derive(Parser)]
#[command(
    name = "aqwm",
    version,
    about = "Spread-spectrum watermark authentication for sensor streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Watermark a CSV signal window by window.
    Embed(EmbedArgs),
    /// Extract soft and hard bits from a watermarked CSV signal.
    Extract(ExtractArgs),
    /// Choose (beta, n, n_s) from error-rate and delay constraints.
    Plan(PlanArgs),
    /// Train the device encoder and cloud decoder on synthetic windows.
    Train(TrainArgs),
    /// Run a scenario file end to end.
    Simulate(SimulateArgs),
    /// Monte Carlo bit error rate over an (n, beta/sigma) grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct WatermarkArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    n: usize,
    #[arg(long = "n-s")]
    n_s: usize,
    /// Sample rate in Hz.
    #[arg(long, default_value_t = 1000.0)]
    fs: f64,
    #[arg(long, default_value_t = 0)]
    key_seed: u64,
}

impl WatermarkArgs {
    fn params(&self) -> Result<WatermarkParams, Error> {
        WatermarkParams::new(self.beta, self.n, self.n_s, self.fs)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedMode {
    Static,
    Dynamic,
}

#[derive(Args)]
struct EmbedArgs {
    /// Single-column CSV of samples.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    wm: WatermarkArgs,
    #[arg(long, value_enum, default_value = "static")]
    mode: EmbedMode,
    /// Calibration file, required for the dynamic mode.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    wm: WatermarkArgs,
    /// `.csv` for one row per bit, JSON otherwise; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanModeArg {
    Strict,
    Confusion,
}

#[derive(Args)]
struct PlanArgs {
    /// Carrier standard deviation.
    #[arg(long)]
    sigma: f64,
    /// Mean of the product of two carrier windows.
    #[arg(long, default_value_t = 0.0)]
    mu1: f64,
    /// Variance of the product of two carrier windows.
    #[arg(long)]
    var1: f64,
    #[arg(long)]
    p_bar: f64,
    #[arg(long)]
    p_under: f64,
    /// Allowed detection delay in seconds.
    #[arg(long)]
    delay: f64,
    #[arg(long, default_value_t = 1000.0)]
    fs: f64,
    #[arg(long, value_enum, default_value = "confusion")]
    mode: PlanModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    wm: WatermarkArgs,
    /// Carrier standard deviation of the synthetic training windows.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 64)]
    windows: usize,
    #[arg(long, default_value_t = 100)]
    holdout: usize,
    #[arg(long, default_value_t = 1)]
    bits_per_feature: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// Gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for encoder.json, decoder.json, calibration.json and report.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Static,
    DynamicOracle,
    DynamicLstm,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Static => Mode::Static,
            ModeArg::DynamicOracle => Mode::DynamicOracle,
            ModeArg::DynamicLstm => Mode::DynamicLstm,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    key_seed: Option<u64>,
    #[arg(long)]
    duration: Option<f64>,
    /// Bypass the frame codec.
    #[arg(long)]
    no_wire: bool,
    /// Exit with status 3 when the cloud raises an alarm.
    #[arg(long)]
    fail_on_alarm: bool,
    /// `.csv` for per-window mismatches, JSON otherwise; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 16, 64])]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25f64, 0.5, 1.0])]
    beta_over_sigma: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `.csv` or JSON by extension; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn samples_csv(frames: &[SignalFrame]) -> String {
    let mut s = String::from("sample\n");
    for x in frames.iter().flat_map(|f| f.samples()) {
        let _ = writeln!(s, "{x}");
    }
    s
}

fn load_windows(path: &Path, params: &WatermarkParams) -> anyhow::Result<Vec<SignalFrame>> {
    let frame = load_csv(path, params.sample_rate_hz)?;
    Ok(frame.windows(params.window_len())?)
}

fn load_calibration(path: &Path) -> anyhow::Result<FeatureCalibration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(FeatureCalibration::from_json(&text)?)
}

fn cmd_embed(a: &EmbedArgs) -> anyhow::Result<()> {
    let params = a.wm.params()?;
    let key = gen_pn_key(params.n, a.wm.key_seed)?;
    let windows = load_windows(&a.input, &params)?;
    let out = match a.mode {
        EmbedMode::Static => {
            let s = static_reference_bits(a.wm.key_seed, params.n_s)?;
            windows
                .iter()
                .map(|y| embed(y, &key, &s, params.beta))
                .collect::<Result<Vec<_>, _>>()?
        }
        EmbedMode::Dynamic => {
            let Some(path) = &a.calibration else {
                return Err(Error::InvalidArgument(
                    "--calibration is required for --mode dynamic".into(),
                )
                .into());
            };
            let calib = load_calibration(path)?;
            windows
                .iter()
                .map(|y| dynamic_embed(y, &key, &calib, params.beta).map(|(w, _)| w))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    emit(a.out.as_deref(), &samples_csv(&out))
}

fn cmd_extract(a: &ExtractArgs) -> anyhow::Result<()> {
    let params = a.wm.params()?;
    let key = gen_pn_key(params.n, a.wm.key_seed)?;
    let windows = load_windows(&a.input, &params)?;
    let soft = windows
        .iter()
        .map(|w| extract(w, &key, params.n_s, params.beta))
        .collect::<Result<Vec<_>, _>>()?;
    let text = if a.out.as_deref().is_some_and(is_csv) {
        let mut s = String::from("window,bit,soft,hard\n");
        for (i, bits) in soft.iter().enumerate() {
            for (j, b) in bits.iter().enumerate() {
                let _ = writeln!(s, "{i},{j},{},{}", b.value, b.hard);
            }
        }
        s
    } else {
        serde_json::to_string_pretty(&soft)?
    };
    emit(a.out.as_deref(), &text)
}

fn cmd_plan(a: &PlanArgs) -> anyhow::Result<()> {
    let req = PlanRequest {
        sigma: a.sigma,
        product: ProductStats::new(a.mu1, a.var1)?,
        p_bar: a.p_bar,
        p_under: a.p_under,
        delay_s: a.delay,
        sample_rate_hz: a.fs,
        mode: match a.mode {
            PlanModeArg::Strict => PlanMode::Strict,
            PlanModeArg::Confusion => PlanMode::Confusion,
        },
    };
    let params = plan_params(&req)?;
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&params)?)
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let params = a.wm.params()?;
    if a.windows == 0 || a.holdout == 0 {
        bail!(Error::InvalidArgument(
            "--windows and --holdout must be positive".into()
        ));
    }
    let len = params.window_len();
    let synth = |count: usize, index: u64| {
        gen_gaussian(
            0.0,
            a.sigma,
            count * len,
            params.sample_rate_hz,
            derive_seed(a.seed, index),
        )
        .and_then(|f| f.windows(len))
    };
    let calib = calibrate(&synth(CALIBRATION_WINDOWS, 1)?, a.bits_per_feature)?;
    let train = synth(a.windows, 2)?;
    let holdout = synth(a.holdout, 3)?;
    let key = gen_pn_key(params.n, a.wm.key_seed)?;
    let cfg = TaskConfig {
        hidden_dim: a.hidden,
        train: TrainConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            seed: a.seed,
            gradient_clip: (a.clip > 0.0).then_some(a.clip),
        },
    };
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;

    let progress = |role: &'static str| {
        move |epoch: usize, loss: f64| {
            if epoch == 1 || epoch.is_multiple_of(50) {
                eprintln!("{role} epoch {epoch}: loss {loss:.6}");
            }
        }
    };
    let (enc, enc_report) = train_role(
        NetRole::Encoder,
        &train,
        &key,
        &calib,
        params.beta,
        &cfg,
        progress("encoder"),
    )?;
    let (dec, dec_report) = train_role(
        NetRole::Decoder,
        &train,
        &key,
        &calib,
        params.beta,
        &cfg,
        progress("decoder"),
    )?;
    let enc_eval = evaluate_encoder(&enc, &holdout, &key, &calib)?;
    let dec_eval = evaluate_decoder(&dec, &holdout, &key, &calib)?;

    enc.save(a.out_dir.join("encoder.json"))?;
    dec.save(a.out_dir.join("decoder.json"))?;
    std::fs::write(a.out_dir.join("calibration.json"), calib.to_json()?)?;
    let report = serde_json::json!({
        "params": params,
        "key_seed": a.wm.key_seed,
        "train": cfg,
        "encoder": { "report": enc_report, "holdout": enc_eval },
        "decoder": { "report": dec_report, "holdout": dec_eval },
    });
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(a.out_dir.join("report.json"), &text)?;
    eprintln!(
        "encoder holdout mse {:.5}; decoder bit agreement {:.4}",
        enc_eval.mse, dec_eval.bit_agreement
    );
    Ok(())
}

fn metrics_text(m: &MetricsBundle, out: Option<&Path>) -> anyhow::Result<String> {
    Ok(if out.is_some_and(is_csv) {
        m.detection_csv()
    } else {
        m.to_json()?
    })
}

/// Returns whether the cloud raised an alarm.
fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<bool> {
    let mut sc = Scenario::load(&a.scenario)?;
    if let Some(m) = a.mode {
        sc.mode = m.into();
    }
    if let Some(t) = a.threshold {
        sc.threshold = t;
    }
    if let Some(k) = a.key_seed {
        sc.key_seed = k;
    }
    if let Some(d) = a.duration {
        sc.duration_s = d;
    }
    if a.no_wire {
        sc.wire = false;
    }
    let metrics = run_scenario(&sc)?;
    emit(a.out.as_deref(), &metrics_text(&metrics, a.out.as_deref())?)?;
    let alarm = metrics.detection.as_ref().is_some_and(|d| d.alarmed());
    if let Some(d) = &metrics.detection {
        match (d.alarm_window, d.alarm_time_s) {
            (Some(w), Some(t)) => eprintln!("alarm at window {w} ({t} s)"),
            _ => eprintln!("no alarm"),
        }
    }
    Ok(alarm)
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let m = ber_sweep(&a.n, &a.beta_over_sigma, a.trials, a.seed)?;
    let text = if a.out.as_deref().is_some_and(is_csv) {
        m.ber_csv()
    } else {
        m.to_json()?
    };
    emit(a.out.as_deref(), &text)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidArgument(_)
            | Error::Shape(_)
            | Error::Parse { .. }
            | Error::Json(_)
            | Error::Infeasible(_),
        ) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Embed(a) => cmd_embed(a).map(|_| false),
        Command::Extract(a) => cmd_extract(a).map(|_| false),
        Command::Plan(a) => cmd_plan(a).map(|_| false),
        Command::Train(a) => cmd_train(a).map(|_| false),
        Command::Simulate(a) => cmd_simulate(a).map(|alarm| alarm && a.fail_on_alarm),
        Command::Sweep(a) => cmd_sweep(a).map(|_| false),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_ALARM),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
