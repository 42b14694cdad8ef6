//! `handover-sim`: command-line front end for the shared-control
//! gradual-takeover toolkit.
//!
//! Subcommands:
//! - `simulate`: run one scenario config (or every `*.json` in a
//!   directory) and write the step log CSV plus a text summary.
//! - `evaluate`: score a labeled case set with a risk detector; sweep
//!   detectors emit an ROC curve, all detectors emit an index table.
//! - `fit`: fit classification thresholds from a labeled case set.
//! - `gen`: generate a synthetic labeled case set.
//!
//! Exit codes: 0 on success, 2 on malformed configs or inputs, 3 when
//! the game solver reports Nash non-existence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use handover_core::eval::{
    self, CaseLabel, ConfusionMatrix, Detector, DetectorFamily, LabeledCase, SynthConfig,
};
use handover_core::risk::{self, RiskLevel, RiskThresholds};
use handover_core::scenario::{self, ScenarioConfig, ScenarioError, ScenarioKind};

const EXIT_CONFIG: u8 = 2;
const EXIT_NO_NASH: u8 = 3;

/// Simulate and evaluate driver/system control handovers.
#[derive(Parser)]
#[command(name = "handover-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config (or a directory of configs) and write the
    /// step log CSV and a summary per config.
    Simulate {
        /// Scenario JSON, or a directory containing `*.json` configs.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for `<name>.csv` and `<name>_summary.txt`.
        #[arg(long)]
        out: PathBuf,
        /// Deterministic run seed (reserved; scenarios are deterministic).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Thresholds JSON overriding the config's risk thresholds.
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Score a labeled case set with a detector.
    Evaluate {
        /// Case directory containing `manifest.csv`.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for `roc.csv` (sweep detectors) and
        /// `indices.txt`.
        #[arg(long)]
        out: PathBuf,
        /// Detector: `ttc`, `tm`, or `combined`.
        #[arg(long)]
        detector: String,
        /// Minimum combined risk level (0-3) that counts as a
        /// detection for the `combined` detector.
        #[arg(long, default_value_t = 2)]
        level: u8,
        /// Thresholds JSON for the `combined` detector (default:
        /// bundled empirical thresholds).
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Fit classification thresholds from a labeled case set.
    Fit {
        /// Case directory containing `manifest.csv`.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for `thresholds.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic labeled case set.
    Gen {
        /// Output case directory.
        #[arg(long)]
        out: PathBuf,
        /// RNG seed for measurement noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gaussian noise sigma on 1/TTC at brake onset.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
    },
}

/// An error carrying the process exit code it maps to.
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_CONFIG,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::NashNonExistence { .. } => EXIT_NO_NASH,
            _ => EXIT_CONFIG,
        };
        Self {
            message: e.to_string(),
            code,
        }
    }
}

impl From<eval::EvalError> for CliError {
    fn from(e: eval::EvalError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            config,
            out,
            seed: _,
            thresholds,
        } => simulate(&config, &out, thresholds.as_deref()),
        Command::Evaluate {
            config,
            out,
            detector,
            level,
            thresholds,
        } => evaluate(&config, &out, &detector, level, thresholds.as_deref()),
        Command::Fit { config, out } => fit(&config, &out),
        Command::Gen {
            out,
            seed,
            noise_sigma,
        } => gen(&out, seed, noise_sigma),
    }
}

fn read_thresholds(path: &Path) -> Result<RiskThresholds<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("malformed thresholds {}: {e}", path.display())))
}

/// Worker-thread cap: `HANDOVER_SIM_THREADS` if set, else the available
/// parallelism.
fn thread_cap() -> usize {
    match std::env::var("HANDOVER_SIM_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n >= 1).unwrap_or(1),
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    }
}

fn simulate(config: &Path, out: &Path, thresholds: Option<&Path>) -> Result<(), CliError> {
    let override_thr = thresholds.map(read_thresholds).transpose()?;
    let mut paths = Vec::new();
    if config.is_dir() {
        for entry in std::fs::read_dir(config)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                paths.push(path);
            }
        }
        paths.sort();
        if paths.is_empty() {
            return Err(CliError::config(format!(
                "no *.json configs in {}",
                config.display()
            )));
        }
    } else {
        paths.push(config.to_path_buf());
    }
    std::fs::create_dir_all(out)?;

    let workers = thread_cap().min(paths.len());
    let jobs: Vec<(usize, &PathBuf)> = paths.iter().enumerate().collect();
    let mut results: Vec<Option<Result<(), CliError>>> = Vec::new();
    results.resize_with(paths.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&(idx, path)) = jobs.get(i) else {
                    break;
                };
                let outcome = simulate_one(path, out, override_thr.as_ref());
                slots.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });
    // Report the first failure in config order; Nash non-existence
    // outranks config errors so its exit code survives a mixed batch.
    let mut first_err: Option<CliError> = None;
    for r in results.into_iter().flatten() {
        if let Err(e) = r {
            let replace = match &first_err {
                None => true,
                Some(prev) => prev.code != EXIT_NO_NASH && e.code == EXIT_NO_NASH,
            };
            if replace {
                first_err = Some(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn simulate_one(
    config_path: &Path,
    out: &Path,
    override_thr: Option<&RiskThresholds<f64>>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config: ScenarioConfig<f64> = serde_json::from_str(&text).map_err(|e| {
        CliError::config(format!("malformed config {}: {e}", config_path.display()))
    })?;
    if let Some(thr) = override_thr {
        config.thresholds = *thr;
    }
    let log = scenario::run(&config)?;
    let stem = config_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("run");

    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    std::fs::write(out.join(format!("{stem}.csv")), csv)?;

    let target_final = match config.kind {
        ScenarioKind::CutIn => {
            Some(config.target_speed + config.target_accel * config.duration)
        }
        ScenarioKind::LaneChange => None,
    };
    let summary = log.summary(config.kind, target_final);
    let mut text = format!("config: {stem}\n{summary}");
    writeln!(text, "events:").ok();
    for e in &log.events {
        writeln!(text, "  {} s: {:?}", e.time, e.event).ok();
    }
    std::fs::write(out.join(format!("{stem}_summary.txt")), text)?;
    Ok(())
}

/// Per-case minimum of the sweep measure, used to build the ROC grid.
fn case_minimum(case: &LabeledCase<f64>, family: DetectorFamily) -> Result<f64, CliError> {
    let mut min = f64::INFINITY;
    for s in &case.samples {
        let m = match family {
            DetectorFamily::Ttc => risk::ttc(&s.pair),
            DetectorFamily::Tm => risk::time_margin(&s.pair),
        }
        .map_err(|e| CliError::config(e.to_string()))?;
        min = min.min(m);
    }
    Ok(min)
}

fn index_report(name: &str, threshold_line: &str, matrix: &ConfusionMatrix) -> String {
    let ix = matrix.indices();
    let mut text = String::new();
    writeln!(text, "detector: {name}").ok();
    if !threshold_line.is_empty() {
        writeln!(text, "{threshold_line}").ok();
    }
    writeln!(
        text,
        "tp: {} fp: {} fn: {} tn: {}",
        matrix.tp, matrix.fp, matrix.fn_, matrix.tn
    )
    .ok();
    writeln!(text, "tp_rate: {}", ix.tp_rate).ok();
    writeln!(text, "fp_rate: {}", ix.fp_rate).ok();
    writeln!(text, "fn_rate: {}", ix.fn_rate).ok();
    writeln!(text, "tn_rate: {}", ix.tn_rate).ok();
    writeln!(text, "accuracy: {}", ix.accuracy).ok();
    writeln!(text, "precision: {}", ix.precision).ok();
    text
}

fn evaluate(
    cases_dir: &Path,
    out: &Path,
    detector: &str,
    level: u8,
    thresholds: Option<&Path>,
) -> Result<(), CliError> {
    let cases: Vec<LabeledCase<f64>> = eval::read_cases(cases_dir)?;
    let labels: Vec<CaseLabel> = cases.iter().map(|c| c.label).collect();
    std::fs::create_dir_all(out)?;

    let family = match detector {
        "ttc" => Some(DetectorFamily::Ttc),
        "tm" => Some(DetectorFamily::Tm),
        "combined" => None,
        other => {
            return Err(CliError::config(format!(
                "unknown detector {other:?} (expected ttc, tm, or combined)"
            )))
        }
    };

    let report = match family {
        Some(family) => {
            // Grid spanning every case minimum, padded past both ends so
            // the sweep always reaches (0,0) and (1,1).
            let minima = cases
                .iter()
                .map(|c| case_minimum(c, family))
                .collect::<Result<Vec<_>, _>>()?;
            let lo = minima.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = minima
                .iter()
                .copied()
                .filter(|m| m.is_finite())
                .fold(lo, f64::max);
            let (lo, hi) = (lo - 1.0, hi + 1.0);
            let n = 51;
            let grid: Vec<f64> = (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect();
            let curve = eval::roc_sweep(&cases, family, &grid)?;
            let mut csv = Vec::new();
            curve.write_csv(&mut csv)?;
            std::fs::write(out.join("roc.csv"), csv)?;

            // Report indices at the best-accuracy grid point.
            let mut best: Option<(f64, f64, ConfusionMatrix)> = None;
            for &tau in &grid {
                let det = match family {
                    DetectorFamily::Ttc => Detector::TtcThreshold(tau),
                    DetectorFamily::Tm => Detector::TmThreshold(tau),
                };
                let fired = cases
                    .iter()
                    .map(|c| eval::detect(c, &det))
                    .collect::<Result<Vec<_>, _>>()?;
                let m = eval::confusion(&fired, &labels)?;
                let acc = m.indices().accuracy;
                if best.as_ref().is_none_or(|(a, _, _)| acc > *a) {
                    best = Some((acc, tau, m));
                }
            }
            let (_, tau, m) = best.expect("non-empty grid");
            index_report(detector, &format!("best_threshold: {tau}"), &m)
        }
        None => {
            let min_level = RiskLevel::from_rank(level).ok_or_else(|| {
                CliError::config(format!("risk level must be 0-3, got {level}"))
            })?;
            let thr = match thresholds {
                Some(p) => read_thresholds(p)?,
                None => RiskThresholds::default(),
            };
            let det = Detector::Combined {
                thresholds: thr,
                min_level,
            };
            let fired = cases
                .iter()
                .map(|c| eval::detect(c, &det))
                .collect::<Result<Vec<_>, _>>()?;
            let m = eval::confusion(&fired, &labels)?;
            index_report(detector, &format!("min_level: {level}"), &m)
        }
    };
    std::fs::write(out.join("indices.txt"), report)?;
    Ok(())
}

fn fit(cases_dir: &Path, out: &Path) -> Result<(), CliError> {
    let cases: Vec<LabeledCase<f64>> = eval::read_cases(cases_dir)?;
    let thresholds = eval::fit_thresholds(&cases)?;
    std::fs::create_dir_all(out)?;
    let json = serde_json::to_string_pretty(&thresholds)
        .map_err(|e| CliError::config(e.to_string()))?;
    std::fs::write(out.join("thresholds.json"), json + "\n")?;
    Ok(())
}

fn gen(out: &Path, seed: u64, noise_sigma: f64) -> Result<(), CliError> {
    if noise_sigma < 0.0 {
        return Err(CliError::config("noise sigma must be non-negative"));
    }
    let config = SynthConfig::<f64> {
        seed,
        noise_sigma,
        ..SynthConfig::default()
    };
    let cases = eval::generate_cases(&config)?;
    eval::write_cases(out, &cases)?;
    Ok(())
}
