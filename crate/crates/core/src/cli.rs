//! The `seqvad` command-line pipeline.
//!
//! Every subcommand reads an optional TOML config file (`--config`) holding
//! [`RunConfig`] keys; command-line flags override file values. Exit codes:
//! 0 success, 1 usage error, 2 data or validation error, 3 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_with, compute_threshold, far_bound, CalibrateOptions, RegressorTraining,
    DEFAULT_ALPHA, DEFAULT_K,
};
use crate::data::{
    parse_feature_stream, parse_ground_truth, write_feature_stream, write_ground_truth,
    FrameObservation,
};
use crate::detector::{count_restart_alarms, detect_video, FrameRecord, DEFAULT_DROP_WINDOW};
use crate::error::{Error, Result};
use crate::evidence::RegressorConfig;
use crate::metrics::{evaluate_records, measure_far, EvalReport, DEFAULT_GRID_POINTS};
use crate::model::NominalModel;
use crate::synth::{generate_nominal_stream, generate_scenario, ScenarioConfig};

/// Settings shared by all subcommands, with their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training feature stream (`calibrate`).
    pub train: Option<PathBuf>,
    /// Feature stream to score (`detect`) or nominal stream (`verify-far`).
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Per-frame detector output.
    pub detections: Option<PathBuf>,
    /// Localized events output.
    pub events: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Delimited table output (`evaluate`, `verify-far`).
    pub table: Option<PathBuf>,
    /// Output directory (`synth`).
    pub out_dir: Option<PathBuf>,
    /// Scenario TOML (`synth`, `verify-far`).
    pub scenario: Option<PathBuf>,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub drop_window: usize,
    /// Replaces the calibrated threshold in `detect`.
    pub threshold: Option<f64>,
    /// Train (`calibrate`) or use (`detect`) the distance regressor.
    pub regressor: Option<bool>,
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub phi_safety: f64,
    pub seed: u64,
    /// Target rates for `verify-far`.
    pub betas: Vec<f64>,
    /// Nominal frames generated by `verify-far` when no stream is given.
    pub far_frames: usize,
    /// Dimensionality of the standard scenario (`synth`).
    pub m: usize,
    pub grid_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            features: None,
            model: None,
            truth: None,
            detections: None,
            events: None,
            report: None,
            table: None,
            out_dir: None,
            scenario: None,
            alpha: DEFAULT_ALPHA,
            beta: 0.05,
            k: DEFAULT_K,
            drop_window: DEFAULT_DROP_WINDOW,
            threshold: None,
            regressor: None,
            lambda: 1e-6,
            epochs: RegressorConfig::default().epochs,
            learning_rate: RegressorConfig::default().learning_rate,
            phi_safety: 1.0,
            seed: 0,
            betas: vec![0.1, 0.05, 0.01],
            far_frames: 100_000,
            m: crate::data::DEFAULT_DIM,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if !(0.0..1.0).contains(&self.alpha) {
            return usage(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        for &b in std::iter::once(&self.beta).chain(&self.betas) {
            if !(b > 0.0 && b <= 1.0) {
                return usage(format!("beta must lie in (0, 1], got {b}"));
            }
        }
        if self.k == 0 {
            return usage("k must be at least 1".into());
        }
        if self.drop_window == 0 {
            return usage("drop_window must be at least 1".into());
        }
        if let Some(h) = self.threshold {
            if !(h >= 0.0) || !h.is_finite() {
                return usage(format!("threshold must be non-negative, got {h}"));
            }
        }
        if !(self.lambda >= 0.0) || !(self.learning_rate > 0.0) || !(self.phi_safety > 0.0) {
            return usage("lambda must be >= 0, learning_rate and phi_safety > 0".into());
        }
        if self.m == 0 || self.grid_points == 0 {
            return usage("m and grid_points must be positive".into());
        }
        Ok(())
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Usage(format!("missing required --{flag}")))
}

fn read_frames(path: &Path) -> Result<Vec<FrameObservation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_feature_stream(BufReader::new(file))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_lines<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Fits a model on the training stream and writes it. Returns a summary.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<String> {
    let train_path = require(&cfg.train, "train")?;
    let model_path = require(&cfg.model, "model")?;
    let train = read_frames(train_path)?;
    let regressor = cfg.regressor.unwrap_or(false).then(|| RegressorTraining {
        config: RegressorConfig {
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            ..RegressorConfig::default()
        },
        lambda: cfg.lambda,
        seed: cfg.seed,
        enable: true,
    });
    let model = calibrate_with(
        &train,
        &CalibrateOptions {
            alpha: cfg.alpha,
            beta: cfg.beta,
            k: cfg.k,
            phi_safety: cfg.phi_safety,
            feature_mask: None,
            regressor,
        },
    )?;
    model.save(model_path)?;
    let c = &model.calibration;
    let mut s = String::new();
    writeln!(s, "model      {}", model_path.display()).unwrap();
    writeln!(s, "frames     {}", train.len()).unwrap();
    writeln!(s, "objects    {}", model.training.len()).unwrap();
    writeln!(s, "m          {}", model.dim).unwrap();
    writeln!(s, "k          {}", model.k).unwrap();
    writeln!(s, "alpha      {}", c.alpha).unwrap();
    writeln!(s, "D_alpha    {}", c.d_alpha).unwrap();
    writeln!(s, "D_max      {}", c.d_max).unwrap();
    writeln!(s, "phi        {}", c.phi).unwrap();
    writeln!(s, "v_m        {}", c.v_m).unwrap();
    writeln!(s, "theta      {}", c.theta).unwrap();
    writeln!(s, "omega0     {}", c.omega0).unwrap();
    writeln!(s, "beta       {}", c.beta).unwrap();
    writeln!(s, "h          {}", c.h).unwrap();
    writeln!(s, "far_bound  {}", c.far_bound()).unwrap();
    writeln!(s, "regressor  {}", model.use_regressor).unwrap();
    writeln!(s, "seed       {}", cfg.seed).unwrap();
    Ok(s)
}

/// Scores a feature stream and writes per-frame records and events.
pub fn cmd_detect(cfg: &RunConfig) -> Result<String> {
    let model_path = require(&cfg.model, "model")?;
    let features_path = require(&cfg.features, "features")?;
    let out_path = require(&cfg.detections, "detections")?;
    let mut model = NominalModel::load(model_path)?;
    if let Some(h) = cfg.threshold {
        model = model.with_threshold(h)?;
    }
    if let Some(on) = cfg.regressor {
        model = model.with_regressor_inference(on)?;
    }
    let frames = read_frames(features_path)?;
    let mut by_video: BTreeMap<&str, Vec<&FrameObservation>> = BTreeMap::new();
    for f in &frames {
        by_video.entry(f.video_id.as_str()).or_default().push(f);
    }
    let videos: Vec<(&str, Vec<&FrameObservation>)> = by_video.into_iter().collect();
    let results = videos
        .par_iter()
        .map(|(id, fs)| detect_video(&model, id, fs, cfg.drop_window))
        .collect::<Result<Vec<_>>>()?;

    let records: Vec<FrameRecord> = results.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let events: Vec<_> = results.iter().flat_map(|r| r.events.iter().cloned()).collect();
    write_text(out_path, &to_lines(&records))?;
    if let Some(p) = &cfg.events {
        write_text(p, &to_lines(&events))?;
    }
    let alarms = records.iter().filter(|r| r.alarm).count();
    Ok(format!(
        "frames {}  videos {}  alarm frames {}  events {}  h {}\n",
        records.len(),
        videos.len(),
        alarms,
        events.len(),
        model.h()
    ))
}

fn read_records(path: &Path) -> Result<Vec<FrameRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(i + 1, e.to_string())))
        .collect()
}

/// Scores detector output against ground truth.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(EvalReport, String)> {
    let det_path = require(&cfg.detections, "detections")?;
    let truth_path = require(&cfg.truth, "truth")?;
    let records = read_records(det_path)?;
    let truth_file = File::open(truth_path).map_err(|e| Error::io(truth_path, e))?;
    let truth = parse_ground_truth(BufReader::new(truth_file))?;
    let report = evaluate_records(&records, &truth, cfg.grid_points)?;
    let json = report.to_json();
    if let Some(p) = &cfg.report {
        write_text(p, &json)?;
    }
    if let Some(p) = &cfg.table {
        write_text(p, &report.curve.to_csv())?;
    }
    Ok((report, json))
}

/// One row of the false-alarm verification table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarRow {
    pub beta: f64,
    pub h: f64,
    pub far_bound: f64,
    pub alarms: usize,
    pub frames: usize,
    pub empirical_far: f64,
    /// `None` when no alarm was raised.
    pub period: Option<f64>,
    pub pass: bool,
}

pub fn far_table_csv(rows: &[FarRow], seed: u64) -> String {
    let mut s = format!("# seed={seed}\nbeta,h,far_bound,alarms,frames,empirical_far,period,target_period,pass\n");
    for r in rows {
        let period = r.period.map_or("inf".to_string(), |p| p.to_string());
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.beta,
            r.h,
            r.far_bound,
            r.alarms,
            r.frames,
            r.empirical_far,
            period,
            1.0 / r.beta,
            r.pass
        )
        .unwrap();
    }
    s
}

/// False alarm rates on nominal evidence for each target rate.
pub fn far_rows(model: &NominalModel, evidences: &[f64], betas: &[f64]) -> Result<Vec<FarRow>> {
    betas
        .iter()
        .map(|&beta| {
            let h = compute_threshold(model.calibration.omega0, beta)?;
            let alarms = count_restart_alarms(evidences, model.dim, model.drift_offset(), h);
            let far = measure_far(alarms, evidences.len() as u64)?;
            Ok(FarRow {
                beta,
                h,
                far_bound: far_bound(model.calibration.omega0, h),
                alarms,
                frames: evidences.len(),
                empirical_far: far.far,
                period: far.period.is_finite().then_some(far.period),
                pass: far.far <= beta,
            })
        })
        .collect()
}

/// Monte-Carlo check of the threshold formula on nominal frames.
pub fn cmd_verify_far(cfg: &RunConfig) -> Result<(Vec<FarRow>, String)> {
    let model_path = require(&cfg.model, "model")?;
    let model = NominalModel::load(model_path)?;
    let frames = match (&cfg.features, &cfg.scenario) {
        (Some(p), _) => read_frames(p)?,
        (None, scenario) => {
            let sc = match scenario {
                Some(p) => load_scenario(p)?,
                None => ScenarioConfig::standard(model.dim, cfg.seed),
            };
            generate_nominal_stream(&sc, cfg.far_frames, cfg.seed)?
        }
    };
    let evidences = model.evidences(&frames)?;
    let rows = far_rows(&model, &evidences, &cfg.betas)?;
    let csv = far_table_csv(&rows, cfg.seed);
    if let Some(p) = &cfg.table {
        write_text(p, &csv)?;
    }
    Ok((rows, csv))
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Validation(format!("scenario {}: {e}", path.display())))
}

/// Writes `train.jsonl`, `test.jsonl`, `truth.jsonl` and the resolved
/// `scenario.toml` into the output directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    let dir = require(&cfg.out_dir, "out-dir")?;
    let scenario = match &cfg.scenario {
        Some(p) => load_scenario(p)?,
        None => ScenarioConfig::standard(cfg.m, cfg.seed),
    };
    let s = generate_scenario(&scenario)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut buf = Vec::new();
    write_feature_stream(&mut buf, &s.train)?;
    write_text(&dir.join("train.jsonl"), std::str::from_utf8(&buf).unwrap())?;
    buf.clear();
    write_feature_stream(&mut buf, &s.test)?;
    write_text(&dir.join("test.jsonl"), std::str::from_utf8(&buf).unwrap())?;
    buf.clear();
    write_ground_truth(&mut buf, &s.truth)?;
    write_text(&dir.join("truth.jsonl"), std::str::from_utf8(&buf).unwrap())?;
    let toml = toml::to_string(&scenario).map_err(|e| Error::Validation(e.to_string()))?;
    write_text(&dir.join("scenario.toml"), &toml)?;
    Ok(format!(
        "train frames {}  test frames {}  events {}  seed {}\n",
        s.train.len(),
        s.test.len(),
        s.truth.len(),
        scenario.seed
    ))
}

#[derive(Debug, Parser)]
#[command(name = "seqvad", version, about = "Online video anomaly detection pipeline")]
struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit normalization, evidences and threshold on nominal training frames.
    Calibrate(CalibrateArgs),
    /// Run the online detector over a feature stream.
    Detect(DetectArgs),
    /// Compute APD, frame AUC and false alarm rate of detector output.
    Evaluate(EvaluateArgs),
    /// Measure false alarm rates on nominal frames for several targets.
    VerifyFar(VerifyFarArgs),
    /// Generate a synthetic scenario.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Training feature stream.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Significance level for D_alpha [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    /// Target false alarm rate [default: 0.05].
    #[arg(long)]
    beta: Option<f64>,
    /// Neighbor rank [default: 10].
    #[arg(long)]
    k: Option<usize>,
    /// Multiplier on the empirical drift bound [default: 1.0].
    #[arg(long)]
    phi_safety: Option<f64>,
    /// Train the distance regressor and use it for inference.
    #[arg(long)]
    regressor: bool,
    /// Regressor weight penalty [default: 1e-6].
    #[arg(long)]
    lambda: Option<f64>,
    /// Regressor epochs [default: 300].
    #[arg(long)]
    epochs: Option<usize>,
    /// Regressor step size [default: 0.01].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Seed for regressor initialization and shuffling [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Feature stream to score.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Output per-frame records.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Output localized events.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Use this threshold instead of the calibrated one.
    #[arg(long)]
    threshold: Option<f64>,
    /// Consecutive drops that close an event [default: 5].
    #[arg(long)]
    drop_window: Option<usize>,
    /// Force regressor inference on or off [default: as stored in the model].
    #[arg(long)]
    regressor: Option<bool>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Detector per-frame records.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Ground-truth events.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output report (JSON); printed to stdout as well.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output threshold,gamma,precision table.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Threshold grid size [default: 200].
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyFarArgs {
    /// Model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Nominal feature stream; generated when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Scenario TOML for generated streams [default: standard scenario].
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Target rates, comma separated [default: 0.1,0.05,0.01].
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    /// Generated nominal frames [default: 100000].
    #[arg(long)]
    far_frames: Option<usize>,
    /// Output table.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Stream seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Scenario TOML [default: standard scenario].
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Dimensionality of the standard scenario [default: 18].
    #[arg(long)]
    m: Option<usize>,
    /// Seed of the standard scenario [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

macro_rules! apply {
    ($cfg:ident, $args:ident; $($field:ident),* ; $($opt:ident),*) => {
        $( if let Some(v) = $args.$field { $cfg.$field = v; } )*
        $( if $args.$opt.is_some() { $cfg.$opt = $args.$opt; } )*
    };
}

/// Parses arguments, runs the subcommand and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Calibrate(a) => {
            apply!(cfg, a; alpha, beta, k, phi_safety, lambda, epochs, learning_rate, seed; train, model);
            if a.regressor {
                cfg.regressor = Some(true);
            }
            cfg.validate()?;
            cmd_calibrate(&cfg)
        }
        Command::Detect(a) => {
            apply!(cfg, a; drop_window; model, features, detections, events, threshold, regressor);
            cfg.validate()?;
            cmd_detect(&cfg)
        }
        Command::Evaluate(a) => {
            apply!(cfg, a; grid_points; detections, truth, report, table);
            cfg.validate()?;
            cmd_evaluate(&cfg).map(|(_, json)| json)
        }
        Command::VerifyFar(a) => {
            apply!(cfg, a; betas, far_frames, seed; model, features, scenario, table);
            cfg.validate()?;
            cmd_verify_far(&cfg).map(|(_, csv)| csv)
        }
        Command::Synth(a) => {
            apply!(cfg, a; m, seed; out_dir, scenario);
            cfg.validate()?;
            cmd_synth(&cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_defaults() {
        let cfg = RunConfig::from_toml("alpha = 0.1\nk = 5\nbetas = [0.2]\n").unwrap();
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.betas, vec![0.2]);
        assert_eq!(cfg.drop_window, 5);
        assert!(RunConfig::from_toml("nonsense = 1").is_err());
    }

    #[test]
    fn validation_is_a_usage_error() {
        let cfg = RunConfig {
            alpha: 1.5,
            ..RunConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);
        let cfg = RunConfig {
            betas: vec![0.0],
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["seqvad", "bogus"]), 1);
        assert_eq!(main_with_args(["seqvad", "calibrate"]), 1);
        assert_eq!(main_with_args(["seqvad", "--help"]), 0);
    }
}
